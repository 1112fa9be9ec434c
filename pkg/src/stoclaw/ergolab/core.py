"""Experiment specification, records and the registry of named experiments."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..dynamics import SimConfig, config_hash
from ..errors import ValidationError


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    REPORT_ONLY = "REPORT-ONLY"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    config: SimConfig
    params: dict = field(default_factory=dict)
    ensemble_size: int = 1
    burn_in: float | None = None
    observables: tuple = ()

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ValidationError(f"unknown experiment {self.name!r}; known: {', '.join(sorted(REGISTRY))}")
        if self.ensemble_size < 1:
            raise ValidationError("ensemble_size must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValidationError("burn_in must be non-negative")

    @property
    def burn_in_time(self) -> float:
        """Requested burn-in, defaulting to five e-foldings of the slowest heat rate."""
        if self.burn_in is not None:
            return float(self.burn_in)
        return 5.0 / self.config.nu

    def param(self, key, default=None):
        return self.params.get(key, default)


@dataclass
class ExperimentRecord:
    name: str
    params: dict
    statistics: dict
    verdict: Verdict
    seed: int
    config_hash: str
    series: dict = field(default_factory=dict, repr=False)
    raw_series: str | None = None
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {"type": "experiment_record", "name": self.name, "seed": self.seed,
                "config_hash": self.config_hash, "params": _jsonable(self.params),
                "statistics": _jsonable(self.statistics), "verdict": self.verdict.value,
                "raw_series": self.raw_series, "diagnostic": self.diagnostic}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, enum.Enum):
        return x.value
    if x is None or isinstance(x, (str, int, bool)):
        return x
    return str(x)


@dataclass(frozen=True)
class Experiment:
    run: Callable[[ExperimentSpec], tuple[dict, dict, str]]
    verdict: Callable[[dict], Verdict]


REGISTRY: dict[str, Experiment] = {}


def register(name: str, verdict: Callable[[dict], Verdict]):
    def deco(fn):
        REGISTRY[name] = Experiment(fn, verdict)
        return fn
    return deco


def run_experiment(spec: ExperimentSpec) -> ExperimentRecord:
    """Run a registered experiment and apply its verdict rule to the statistics."""
    exp = REGISTRY[spec.name]
    statistics, series, diagnostic = exp.run(spec)
    verdict = exp.verdict(statistics)
    params = dict(spec.params, ensemble_size=spec.ensemble_size, burn_in=spec.burn_in_time,
                  observables=list(spec.observables))
    return ExperimentRecord(spec.name, params, statistics, verdict, spec.config.seed,
                            config_hash(spec.config), series, None, diagnostic)
