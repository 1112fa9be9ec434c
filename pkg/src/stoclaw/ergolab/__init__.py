"""Named numerical experiments with statistics and pass/fail verdicts."""

from . import experiments as _experiments  # noqa: F401  (populates the registry)
from .core import REGISTRY, ExperimentRecord, ExperimentSpec, Verdict, run_experiment
from .experiments import EXPERIMENTS, observable, ou_covariance
from .fixtures import default_spec

__all__ = ["REGISTRY", "EXPERIMENTS", "ExperimentRecord", "ExperimentSpec", "Verdict", "default_spec",
           "observable", "ou_covariance", "run_experiment"]
