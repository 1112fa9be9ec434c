"""Command-line front end: ``stoclaw <subcommand> [options]``.

This is the only part of the package that touches files, streams or the
environment; every other module is pure computation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import dynamics, lattice, malliavin
from ..errors import StoclawError
from ..ergolab import EXPERIMENTS, ExperimentSpec, Verdict, default_spec, run_experiment
from ..field import SpectralField
from .config import RunConfig, parse_config

SUBCOMMANDS = ("check", "simulate", "tangent", "malliavin", "experiment", "report")
EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stoclaw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    def common(sp, config_required=True):
        sp.add_argument("--config", type=Path, required=config_required, help="configuration file")
        sp.add_argument("--seed", type=_u64, help="override the configured seed")
        sp.add_argument("--out", type=Path, help="output file (NDJSON or CSV); default stdout")
        return sp

    for name, helptext in (("check", "lattice verdicts for the configured flux and noise"),
                           ("simulate", "integrate one path and write its trajectory"),
                           ("tangent", "finite-difference validation of the tangent and adjoint flows"),
                           ("malliavin", "write the Malliavin Gram record of one path")):
        sp = common(sub.add_parser(name, help=helptext))
        if name == "check":
            sp.add_argument("--radius", type=int, help="sup-norm radius of the checked ball")
            sp.add_argument("--margin", type=int, help="extra search margin beyond the radius")
    ex = common(sub.add_parser("experiment", help="run a registered experiment"), config_required=False)
    ex.add_argument("name", choices=EXPERIMENTS, metavar="name", help=", ".join(EXPERIMENTS))
    rp = sub.add_parser("report", help="summarise NDJSON experiment records as CSV")
    rp.add_argument("inputs", type=Path, nargs="+", help="NDJSON result files")
    rp.add_argument("--out", type=Path, help="CSV path; default stdout")
    return p


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


# -- helpers ----------------------------------------------------------------


def load_config(path: Path, seed: int | None = None) -> RunConfig:
    cfg = parse_config(path.read_text(encoding="utf-8"))
    return cfg if seed is None else cfg.with_(seed=seed)


class _Sink:
    """NDJSON writer to a file (append) or stdout."""

    def __init__(self, path: Path | None, mode: str = "a"):
        self.path = path
        self.handle = path.open(mode, encoding="utf-8") if path is not None else sys.stdout

    def write(self, record: dict):
        self.handle.write(json.dumps(record, separators=(",", ":")) + "\n")

    def close(self):
        if self.path is not None:
            self.handle.close()


def _out_path(args, cfg: RunConfig | None):
    if args.out is not None:
        return args.out
    if cfg is not None and cfg.out is not None:
        return Path(cfg.out)
    return None


# -- subcommands ------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = load_config(args.config, args.seed)
    radius = args.radius if args.radius is not None else cfg.radius
    margin = args.margin if args.margin is not None else cfg.margin
    flux, noise = cfg.flux(), cfg.noise_set()
    report = lattice.check_condition(flux, noise, radius=radius, margin=margin, cap=cfg.cap)
    record = report.to_dict()
    record["algebraically_nondegenerate"] = lattice.check_algebraic_nondegeneracy(flux, noise)
    record["real_kernel_trivial"] = lattice.real_kernel_trivial(flux)
    sink = _Sink(_out_path(args, cfg))
    sink.write(record)
    sink.close()
    print(f"verdict: {report.verdict.value}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    traj = dynamics.simulate(cfg.sim_config())
    sink = _Sink(_out_path(args, cfg), "w")
    sink.write(traj.header())
    for i in range(0, traj.n_steps + 1, cfg.write_every):
        sink.write({"type": "state", "step": i, "t": float(traj.times[i]),
                    "hnorm": float(traj.hnorm_trace[i]) if i < len(traj.hnorm_trace) else None,
                    "coeffs": traj.states[i].tolist()})
    sink.close()
    return EXIT_OK


def tangent_validation(cfg: RunConfig) -> list[dict]:
    """Finite-difference and duality checks of the linearised flows on one path."""
    sc = cfg.sim_config()
    traj = dynamics.simulate(sc)
    t = cfg.tangent_t if cfg.tangent_t is not None else sc.t_end
    if cfg.tangent_direction is not None:
        xi = SpectralField.unit(sc.dim, sc.cutoff, cfg.tangent_direction)
    else:
        xi = SpectralField.unit(sc.dim, sc.cutoff, (1,) + (0,) * (sc.dim - 1))
    j = dynamics.tangent_flow(traj, xi, 0.0, t).coeffs
    base = traj.state(traj.index_of(t)).coeffs
    records = []
    for eps in cfg.tangent_eps:
        pert = dynamics.simulate(sc.with_(t_end=t, u0=sc.initial() + xi * eps))
        fd = (pert.final().coeffs - base) / eps
        err = float(np.linalg.norm(fd - j) / max(np.linalg.norm(j), 1e-300))
        records.append({"type": "tangent_check", "eps": eps, "relative_error": err})
    phi = SpectralField.unit(sc.dim, sc.cutoff, (1,) + (0,) * (sc.dim - 1))
    k = dynamics.adjoint_solve(traj, phi, t, 0.0).coeffs
    lhs, rhs = float(k @ xi.coeffs), float(phi.coeffs @ j)
    records.append({"type": "duality_check", "adjoint_pairing": lhs, "tangent_pairing": rhs,
                    "relative_gap": abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)})
    return records


def cmd_tangent(args) -> int:
    cfg = load_config(args.config, args.seed)
    records = tangent_validation(cfg)
    sink = _Sink(_out_path(args, cfg))
    for r in records:
        sink.write(r)
    sink.close()
    errs = [r["relative_error"] for r in records if r["type"] == "tangent_check"]
    ratios = [a / b for a, b in zip(errs, errs[1:]) if b > 0]
    eps = list(cfg.tangent_eps)
    steps = [a / b for a, b in zip(eps, eps[1:])]
    first_order = all(0.5 * s <= r <= 2 * s for r, s in zip(ratios, steps))
    return EXIT_OK if first_order and records[-1]["relative_gap"] <= 1e-8 else EXIT_FAIL


def cmd_malliavin(args) -> int:
    cfg = load_config(args.config, args.seed)
    sc = cfg.sim_config()
    traj = dynamics.simulate(sc)
    t = cfg.malliavin_t if cfg.malliavin_t is not None else sc.t_end
    basis = None
    if cfg.track_radius is not None:
        basis = malliavin.basis_ball(sc.dim, sc.cutoff, cfg.track_radius)
    gram = malliavin.malliavin_gram(traj, cfg.malliavin_s, t, basis)
    record = gram.to_dict()
    record["cap_minimum"] = malliavin.min_quadratic_on_cap(gram, cfg.alpha, cfg.n_low)
    record["alpha"], record["n_low"] = cfg.alpha, cfg.n_low
    sink = _Sink(_out_path(args, cfg))
    sink.write(traj.header())
    sink.write(record)
    sink.close()
    return EXIT_OK


def experiment_spec(cfg: RunConfig, name: str) -> ExperimentSpec:
    if cfg.experiment is not None and cfg.experiment != name:
        raise StoclawError(f"config describes experiment {cfg.experiment!r}, not {name!r}")
    params = dict(cfg.params)
    return ExperimentSpec(name, cfg.sim_config(), params, cfg.ensemble_size, cfg.burn_in, cfg.observables)


def write_series(record, directory: Path) -> Path:
    """One CSV per record; columns are the flattened raw series."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{record.name}_{record.config_hash}.csv"
    cols = {}
    for key, arr in record.series.items():
        a = np.asarray(arr, dtype=float)
        if a.ndim <= 1:
            cols[key] = a
        else:
            a = a.reshape(a.shape[0], -1)
            for j in range(a.shape[1]):
                cols[f"{key}_{j}"] = a[:, j]
    n = max((len(v) for v in cols.values()), default=0)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for i in range(n):
            w.writerow([repr(float(v[i])) if i < len(v) else "" for v in cols.values()])
    return path


def cmd_experiment(args) -> int:
    if args.config is not None:
        cfg = load_config(args.config, args.seed)
        spec = experiment_spec(cfg, args.name)
    else:
        cfg = None
        spec = default_spec(args.name)
        if args.seed is not None:
            spec = replace(spec, config=spec.config.with_(seed=args.seed))
    record = run_experiment(spec)
    out = _out_path(args, cfg)
    series_dir = Path(cfg.series_dir) if cfg is not None and cfg.series_dir else None
    if series_dir is None and out is not None:
        series_dir = out.parent / "series"
    if series_dir is not None and record.series:
        record.raw_series = str(write_series(record, series_dir))
    sink = _Sink(out)
    sink.write(record.to_dict())
    sink.close()
    print(f"{record.name}: {record.verdict.value}" + (f" ({record.diagnostic})" if record.diagnostic else ""),
          file=sys.stderr)
    return EXIT_FAIL if record.verdict is Verdict.FAIL else EXIT_OK


def summarise(lines) -> str:
    """CSV summary of experiment records: identity columns plus scalar statistics."""
    rows, keys = [], []
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoclawError(f"record {n}: invalid JSON ({exc.msg})") from None
        if rec.get("type") != "experiment_record":
            continue
        row = {"name": rec["name"], "verdict": rec["verdict"], "seed": rec["seed"],
               "config_hash": rec["config_hash"], "diagnostic": rec.get("diagnostic", "")}
        for k, v in rec.get("statistics", {}).items():
            if isinstance(v, (int, float, bool)):
                row[k] = v
                if k not in keys:
                    keys.append(k)
        rows.append(row)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["name", "verdict", "seed", "config_hash", "diagnostic"] + keys,
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_report(args) -> int:
    lines = []
    for path in args.inputs:
        lines.extend(path.read_text(encoding="utf-8").splitlines())
    text = summarise(lines)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "tangent": cmd_tangent, "malliavin": cmd_malliavin,
            "experiment": cmd_experiment, "report": cmd_report}


def dispatch(args) -> int:
    try:
        return COMMANDS[args.command](args)
    except (StoclawError, OSError, ValueError, KeyError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"stoclaw: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
