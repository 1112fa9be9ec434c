"""The registered experiments.

Each runner returns ``(statistics, series, diagnostic)``; the verdict rule
registered next to it sees only the statistics block.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

from ..dynamics import Model, SimConfig, integrate_batch, simulate
from ..errors import ValidationError
from ..field import SpectralField, fast_odd_size, l1_norm, mode_set, spectral_grid
from ..lattice import FluxPoly, NoiseSet, exact_dot, polynomial_degree, reachable_set
from ..malliavin import basis_ball, control_residual_run, malliavin_gram, min_quadratic_on_cap
from . import stats
from .core import ExperimentSpec, Verdict, register

# -- shared helpers ---------------------------------------------------------


def _field(value, config: SimConfig, default=None) -> np.ndarray:
    """Coordinates of a field parameter given as SpectralField or ``{k: value}``."""
    if value is None:
        value = default
    if value is None:
        return config.initial().coeffs.copy()
    if isinstance(value, SpectralField):
        return value.resized(config.cutoff).coeffs.copy()
    return SpectralField.from_modes(config.dim, config.cutoff, dict(value)).coeffs.copy()


def _mode(k, dim) -> tuple:
    if k is None:
        raise ValidationError("a wavevector parameter is required")
    k = tuple(int(x) for x in np.atleast_1d(k))
    if len(k) != dim:
        raise ValidationError(f"mode {k} does not have dimension {dim}")
    return k


def _steps(config: SimConfig, t: float) -> int:
    return int(round(t / config.dt))


def _random_smooth(rng, config: SimConfig, radius: float, norm: float) -> np.ndarray:
    ms = mode_set(config.dim, config.cutoff)
    a = rng.standard_normal(ms.size) / ms.ksq
    a[ms.kabs > radius] = 0.0
    return a * (norm / np.linalg.norm(a))


def _in_perp(flux: FluxPoly, k) -> bool:
    if polynomial_degree(flux) == 0:
        return True
    return all(exact_dot(flux.c(j), k).is_zero() for j in range(1, flux.degree + 1))


def _reachable(config: SimConfig, k) -> bool:
    if polynomial_degree(config.flux) == 0 or not config.noise.amplitudes:
        return k in set(config.noise.wavevectors)
    radius = max(config.cutoff, max(abs(x) for x in k))
    found, _ = reachable_set(config.flux, config.noise, radius, margin=2 * polynomial_degree(config.flux))
    return k in found


def _summary(samples) -> dict:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size >= stats.MIN_BATCHES:
        return stats.batch_means(x)
    return {"n": int(x.size), "mean": float(x.mean()) if x.size else math.nan,
            "variance": float(x.var(ddof=1)) if x.size > 1 else 0.0}


def observable(descriptor: str, config: SimConfig):
    """Vectorised observable ``f(a)`` on coordinate arrays from a descriptor string.

    ``mode:k1,k2`` reads one orthonormal coordinate, ``l2`` the L2 norm and
    ``hnorm`` the ``H^n`` norm used by the blowup guard.
    """
    name, _, arg = descriptor.partition(":")
    if name == "mode":
        k = _mode([int(x) for x in arg.split(",")], config.dim)
        i = mode_set(config.dim, config.cutoff).index[k]
        return lambda a: a[..., i]
    if name == "l2":
        return lambda a: np.linalg.norm(a, axis=-1)
    if name == "hnorm":
        return Model(config).hnorm
    raise ValidationError(f"unknown observable {descriptor!r}")


def observable_stats(spec: ExperimentSpec, states: np.ndarray) -> dict:
    return {d: _summary(observable(d, spec.config)(states)) for d in spec.observables}


# -- energy identity --------------------------------------------------------


def _energy_verdict(s):
    return Verdict.PASS if s["max_relative_defect"] <= s["threshold"] else Verdict.FAIL


@register("energy_identity", _energy_verdict)
def energy_identity(spec: ExperimentSpec):
    c = spec.config
    if c.noise.amplitudes:
        raise ValidationError("energy identity requires an unforced configuration")
    model = Model(c)
    a = _field(spec.param("u0"), c)
    # exact heat dissipation of each mode over one step
    loss = -np.expm1(-2 * model.lam * c.dt)
    weight = model.modes.ksq
    zero = np.zeros(0)
    n = c.n_steps
    rel = np.empty(n)
    literal = np.empty(n)
    energy = np.empty(n + 1)
    energy[0] = a @ a
    trace = []
    for i in range(n):
        b = model.step(a, zero)
        energy[i + 1] = b @ b
        diss = float(np.sum(a * a * loss))
        change = energy[i + 1] - energy[i]
        rel[i] = abs(change + diss) / diss if diss > 0 else abs(change)
        grad2 = 0.5 * (np.sum(weight * a * a) + np.sum(weight * b * b))
        rate = 2 * c.nu * grad2
        literal[i] = abs(change / c.dt + rate) / rate if rate > 0 else abs(change / c.dt)
        if (i + 1) % 64 == 0:
            model.check(b, i + 1, trace)
        a = b
    statistics = {"max_relative_defect": float(rel.max()) if n else 0.0,
                  "max_literal_defect": float(literal.max()) if n else 0.0,
                  "threshold": 10 * c.dt, "steps": n,
                  "energy_start": float(energy[0]), "energy_end": float(energy[-1]),
                  "observables": observable_stats(spec, a[None, :])}
    return statistics, {"relative_defect": rel, "energy": energy}, ""


# -- L1 contraction ---------------------------------------------------------


def _l1_verdict(s):
    return Verdict.PASS if s["violations"] == 0 else Verdict.FAIL


@register("l1_contraction", _l1_verdict)
def l1_contraction(spec: ExperimentSpec):
    c = spec.config
    pairs = spec.ensemble_size
    rng = np.random.default_rng([c.seed, 11])
    radius = spec.param("init_radius", 4)
    if spec.param("u0") is not None or spec.param("v0") is not None:
        u = np.tile(_field(spec.param("u0"), c), (pairs, 1))
        v = np.tile(_field(spec.param("v0"), c), (pairs, 1))
    else:
        u = np.stack([_random_smooth(rng, c, radius, spec.param("init_norm", 1.0)) for _ in range(pairs)])
        v = np.stack([_random_smooth(rng, c, radius, spec.param("init_norm", 1.0)) for _ in range(pairs)])
    rel_tol = spec.param("rel_tol", 1e-6)
    abs_tol = spec.param("abs_tol", 1e-8)
    m = spec.param("l1_grid") or fast_odd_size(8 * c.cutoff + 1)
    grid = spectral_grid(c.dim, c.cutoff, m)
    stride = max(1, _steps(c, spec.param("check_every", 0.05)))
    times, dist = [], []

    def observe(step, a):
        times.append(step * c.dt)
        dist.append(l1_norm(grid.to_grid(a[:pairs] - a[pairs:]), c.dim))

    ids = c.stream_id + np.arange(pairs)
    final = integrate_batch(c, np.vstack([u, v]), c.n_steps, np.concatenate([ids, ids]), observe, stride)
    d = np.array(dist)  # (checkpoints, pairs)
    bound = np.minimum.accumulate(d * (1 + rel_tol) + abs_tol, axis=0)
    excess = d[1:] - bound[:-1]
    violations = int(np.sum(excess > 0))
    statistics = {"violations": violations, "pairs": pairs, "checkpoints": len(times),
                  "max_excess": float(excess.max()) if excess.size else 0.0,
                  "strictly_decreasing": bool(np.all(np.diff(d, axis=0) < 0)) if len(d) > 1 else True,
                  "distance_initial": _summary(d[0]), "distance_final": _summary(d[-1]),
                  "observables": observable_stats(spec, final[:pairs])}
    diag = "" if violations == 0 else f"{violations} checkpoint pairs grew by up to {statistics['max_excess']:.3e}"
    return statistics, {"time": np.array(times), "distance": d}, diag


# -- decay of a mode orthogonal to the flux ---------------------------------


def _perp_verdict(s):
    ok = s["k_in_a_perp"] and not s["k_reachable"]
    ok = ok and s["relative_rate_error"] <= 0.01 and s["r2"] > 0.999
    return Verdict.PASS if ok else Verdict.FAIL


@register("perp_decay", _perp_verdict)
def perp_decay(spec: ExperimentSpec):
    c = spec.config
    k = _mode(spec.param("k_star"), c.dim)
    minus = tuple(-x for x in k)
    ms = mode_set(c.dim, c.cutoff)
    ip, im = ms.index[k], ms.index[minus]
    in_perp = _in_perp(c.flux, k)
    reachable = _reachable(c, k)
    forced = k in set(c.noise.wavevectors)
    a0 = _field(spec.param("u0"), c)
    a0[[ip, im]] += 1 / math.sqrt(2)
    members = spec.ensemble_size
    stride = max(1, _steps(c, spec.param("sample_every", 0.1)))
    times, energy = [], []

    def observe(step, a):
        times.append(step * c.dt)
        energy.append(a[:, ip] ** 2 + a[:, im] ** 2)

    final = integrate_batch(c, np.tile(a0, (members, 1)), c.n_steps,
                            c.stream_id + np.arange(members), observe, stride)
    t = np.array(times)
    e = np.array(energy).mean(axis=1)
    fit = stats.loglinear_fit(t, e)
    expected = 2 * c.nu * sum(x * x for x in k)
    rate = -fit["slope"]
    statistics = {"k_star": list(k), "k_in_a_perp": in_perp, "k_reachable": reachable, "k_forced": forced,
                  "fitted_rate": rate, "expected_rate": expected,
                  "relative_rate_error": abs(rate - expected) / expected if math.isfinite(rate) else math.inf,
                  "r2": fit["r2"] if math.isfinite(fit["r2"]) else 0.0,
                  "energy_start": float(e[0]), "energy_end": float(e[-1]),
                  "observables": observable_stats(spec, final)}
    diag = ""
    if forced or reachable:
        diag = (f"mode {k} is {'forced' if forced else 'reachable'}: pair energy plateaus at "
                f"{e[-1]:.3e} instead of decaying to {e[0] * math.exp(-expected * t[-1]):.3e}")
    elif not in_perp:
        diag = f"mode {k} is not orthogonal to the flux coefficients"
    return statistics, {"time": t, "pair_energy": e}, diag


# -- stationary law of a linear flux ----------------------------------------


def _ou_verdict(s):
    ok = all(abs(v["estimate"] - v["exact"]) <= max(0.05 * abs(v["exact"]), 3 * v["se"])
             for v in s["entries"].values())
    return Verdict.PASS if ok else Verdict.FAIL


def ou_covariance(config: SimConfig, k) -> np.ndarray:
    """Analytic stationary covariance of the coordinates on ``(k, -k)`` for a linear flux."""
    model = Model(config)
    ms = model.modes
    pair = [ms.index[k], ms.index[tuple(-x for x in k)]]
    eye = np.zeros((2, ms.size))
    eye[[0, 1], pair] = 1.0
    drift = -model.flux.divergence(eye)[:, pair].T - np.diag(model.lam[pair])
    diffusion = np.zeros((2, 2))
    forced = {int(i): b for i, b in zip(model.forced, model.b_tilde)}
    for r, i in enumerate(pair):
        diffusion[r, r] = forced.get(i, 0.0)
    return stats.lyapunov_covariance(drift, diffusion)


@register("ou_law", _ou_verdict)
def ou_law(spec: ExperimentSpec):
    c = spec.config
    if polynomial_degree(c.flux) > 1:
        raise ValidationError("ou_law requires a flux of degree 1")
    ms = mode_set(c.dim, c.cutoff)
    forced = [k for k in c.noise.wavevectors if ms.positive[ms.index[k]]]
    k = _mode(spec.param("k", forced[0] if forced else (1,) + (0,) * (c.dim - 1)), c.dim)
    ip, im = ms.index[k], ms.index[tuple(-x for x in k)]
    lam = c.nu * sum(x * x for x in k)
    spacing = spec.param("sample_spacing", 2.0 / lam)
    per_path = int(spec.param("samples_per_path", 10))
    burn = _steps(c, spec.burn_in_time)
    gap = max(1, _steps(c, spacing))
    paths = spec.ensemble_size
    a0 = np.tile(_field(spec.param("u0"), c), (paths, 1))
    a = integrate_batch(c, a0, burn, c.stream_id + np.arange(paths))
    xs, ys = [a[:, ip]], [a[:, im]]
    step = burn
    for _ in range(per_path - 1):
        a = integrate_batch(c, a, gap, c.stream_id + np.arange(paths), start_step=step)
        step += gap
        xs.append(a[:, ip])
        ys.append(a[:, im])
    x = np.stack(xs, axis=1)  # (paths, samples), path-major for batch means
    y = np.stack(ys, axis=1)
    exact = ou_covariance(c, k)
    rho = math.exp(-lam * gap * c.dt)
    n_eff = paths * (1 + (per_path - 1) * (1 - rho ** 2) / (1 + rho ** 2))
    entries = {}
    for name, prod, ex in (("xx", x * x, exact[0, 0]), ("yy", y * y, exact[1, 1]), ("xy", x * y, exact[0, 1])):
        s = stats.batch_means(prod.ravel())
        entries[name] = {"estimate": s["mean"], "exact": float(ex), "se": s["se"],
                         "ci_low": s["ci_low"], "ci_high": s["ci_high"], "variance": s["variance"]}
    statistics = {"k": list(k), "entries": entries, "effective_samples": float(n_eff),
                  "samples": int(x.size), "ci_width_xx": entries["xx"]["ci_high"] - entries["xx"]["ci_low"],
                  "observables": observable_stats(spec, a)}
    return statistics, {"x": x.ravel(), "y": y.ravel()}, ""


# -- uniqueness probe -------------------------------------------------------


def _report_only(_s):
    return Verdict.REPORT_ONLY


@register("uniqueness_probe", _report_only)
def uniqueness_probe(spec: ExperimentSpec):
    c = spec.config
    m = spec.ensemble_size
    u0 = _field(spec.param("u0"), c)
    v0 = _field(spec.param("v0"), c)
    horizons = sorted(spec.param("horizons", [c.t_end / 4, c.t_end / 2, 3 * c.t_end / 4, c.t_end]))
    if not horizons or horizons[0] < 0 or horizons[-1] > c.t_end + 1e-12:
        raise ValidationError("horizons must lie in [0, t_end]")
    ms = mode_set(c.dim, c.cutoff)
    low = np.flatnonzero(ms.kabs <= spec.param("low_radius", 2) + 1e-12)
    n_perm = int(spec.param("permutations", 999))
    prng = np.random.default_rng([c.seed, 23])
    ids = c.stream_id + np.arange(2 * m)
    a = np.vstack([np.tile(u0, (m, 1)), np.tile(v0, (m, 1))])
    step = 0
    dists, pvals = [], []
    for t in horizons:
        target = _steps(c, t)
        a = integrate_batch(c, a, target - step, ids, start_step=step)
        step = target
        d, p = stats.permutation_test(a[:m, low], a[m:, low], n_perm, prng)
        dists.append(d)
        pvals.append(p)
    statistics = {"horizons": horizons, "energy_distance": dists, "p_values": pvals,
                  "p_value_final": pvals[-1], "paths_per_arm": m, "low_modes": int(len(low)),
                  "distance_decreasing": bool(all(x >= y for x, y in zip(dists, dists[1:]))),
                  "observables": observable_stats(spec, a)}
    return statistics, {"horizon": np.array(horizons), "energy_distance": np.array(dists),
                        "p_value": np.array(pvals)}, ""


# -- irreducibility ---------------------------------------------------------


def _irreducibility_verdict(s):
    ok = s["ensemble"] >= 200 and s["hits"] > 0 and s["cp_low"] > 0
    return Verdict.PASS if ok else Verdict.FAIL


def pilot_time(config: SimConfig, a0: np.ndarray, gamma: float, limit: float) -> float:
    """Time for the unforced dynamics to bring the ``H^n`` norm below ``gamma / 2``, times 1.5."""
    quiet = config.with_(noise=NoiseSet.empty(config.dim), u0=None)
    model = Model(quiet)
    a = a0.copy()
    zero = np.zeros(0)
    for i in range(_steps(quiet, limit)):
        if model.hnorm(a) <= gamma / 2:
            return 1.5 * max(i, 1) * quiet.dt
        a = model.step(a, zero)
    return limit


@register("irreducibility", _irreducibility_verdict)
def irreducibility(spec: ExperimentSpec):
    c = spec.config
    gamma = float(spec.param("gamma", 0.5))
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    model = Model(c)
    a0 = _field(spec.param("u0"), c, default={(1,) + (0,) * (c.dim - 1): 1.0})
    size = spec.param("u0_norm")
    if size is not None:
        a0 *= size / model.hnorm(a0)
    horizon = spec.param("T")
    if horizon is None:
        horizon = pilot_time(c, a0, gamma, spec.param("pilot_limit", 200.0))
    n = spec.ensemble_size
    final = integrate_batch(c, np.tile(a0, (n, 1)), _steps(c, horizon), c.stream_id + np.arange(n))
    norms = model.hnorm(final)
    hits = int(np.sum(norms <= gamma))
    lo, hi = stats.clopper_pearson(hits, n)
    statistics = {"gamma": gamma, "T": float(horizon), "initial_norm": float(model.hnorm(a0)),
                  "ensemble": n, "hits": hits, "frequency": hits / n, "cp_low": lo, "cp_high": hi,
                  "final_norm": _summary(norms), "observables": observable_stats(spec, final)}
    return statistics, {"final_norm": norms}, ""


# -- e-property -------------------------------------------------------------


@register("eproperty", _report_only)
def eproperty(spec: ExperimentSpec):
    c = spec.config
    m = spec.ensemble_size
    deltas = sorted(spec.param("deltas", [0.1, 0.05, 0.025]), reverse=True)
    horizons = sorted(spec.param("horizons", [1, 2, 5, 10, 20, 50]))
    ms = mode_set(c.dim, c.cutoff)
    first = (1,) + (0,) * (c.dim - 1)
    probe = ms.index[_mode(spec.param("probe_mode", first), c.dim)]
    xi = _field(spec.param("xi"), c, default={first: 1.0})
    xi /= np.linalg.norm(xi)
    u0 = _field(spec.param("u0"), c)
    arms = [u0] + [u0 + d * xi for d in deltas]
    a = np.vstack([np.tile(x, (m, 1)) for x in arms])
    ids = np.tile(c.stream_id + np.arange(m), len(arms))  # common random numbers
    step = 0
    diffs = []
    for t in horizons:
        target = _steps(c, t)
        a = integrate_batch(c, a, target - step, ids, start_step=step)
        step = target
        f = np.tanh(a[:, probe]).reshape(len(arms), m).mean(axis=1)
        diffs.append(np.abs(f[1:] - f[0]))
    diffs = np.array(diffs)  # (horizons, deltas)
    modulus = diffs.max(axis=0)
    at_end = diffs[-1]
    statistics = {"deltas": deltas, "horizons": horizons, "modulus": modulus.tolist(),
                  "difference_at_last_horizon": at_end.tolist(),
                  "modulus_nonincreasing": bool(all(x >= y for x, y in zip(modulus, modulus[1:]))),
                  "smallest_below_largest_at_end": bool(at_end[-1] < at_end[0]),
                  "observables": observable_stats(spec, a[:m])}
    return statistics, {"horizon": np.array(horizons), "difference": diffs}, ""


# -- density proxy ----------------------------------------------------------


def _density_verdict(s):
    ok = s["k_cont_reachable"] and s["k_atom_in_a_perp"] and not s["k_atom_reachable"]
    ok = ok and s["cont_max_bin_mass"] <= 0.5 and s["atom_fraction_small"] >= 0.99
    return Verdict.PASS if ok else Verdict.FAIL


def max_bin_mass(samples, width_fraction: float = 0.1) -> float:
    """Largest histogram bin mass at bin width ``width_fraction * std``."""
    x = np.asarray(samples, dtype=float)
    sd = x.std()
    if sd == 0:
        return 1.0
    width = width_fraction * sd
    edges = np.arange(x.min(), x.max() + width, width)
    if len(edges) < 2:
        return 1.0
    counts, _ = np.histogram(x, bins=edges)
    return float(counts.max() / x.size)


@register("density_proxy", _density_verdict)
def density_proxy(spec: ExperimentSpec):
    c = spec.config
    kc = _mode(spec.param("k_cont"), c.dim)
    ka = _mode(spec.param("k_atom"), c.dim)
    ms = mode_set(c.dim, c.cutoff)
    ic, ia = ms.index[kc], ms.index[ka]
    atom_rate = c.nu * sum(x * x for x in ka)
    burn_t = max(spec.burn_in_time, 5.0 / atom_rate)
    burn = _steps(c, burn_t)
    gap = max(1, _steps(c, spec.param("sample_spacing", 1.0)))
    per_path = int(spec.param("samples_per_path", 20))
    paths = spec.ensemble_size
    ids = c.stream_id + np.arange(paths)
    a = integrate_batch(c, np.tile(_field(spec.param("u0"), c), (paths, 1)), burn, ids)
    cont, atom = [a[:, ic]], [a[:, ia]]
    step = burn
    for _ in range(per_path - 1):
        a = integrate_batch(c, a, gap, ids, start_step=step)
        step += gap
        cont.append(a[:, ic])
        atom.append(a[:, ia])
    cont = np.stack(cont, axis=1).ravel()
    atom = np.stack(atom, axis=1).ravel()
    tol = spec.param("atom_tol", 1e-6)
    normal_p = float(sps.normaltest(cont).pvalue) if cont.size >= 20 else math.nan
    statistics = {"k_cont": list(kc), "k_atom": list(ka), "burn_in": burn_t,
                  "k_cont_reachable": _reachable(c, kc), "k_atom_reachable": _reachable(c, ka),
                  "k_atom_in_a_perp": _in_perp(c.flux, ka),
                  "cont_max_bin_mass": max_bin_mass(cont),
                  "atom_fraction_small": float(np.mean(np.abs(atom) <= tol)),
                  "atom_max_abs": float(np.abs(atom).max()),
                  "cont_normality_p": normal_p,
                  "cont": _summary(cont), "atom": _summary(atom),
                  "observables": observable_stats(spec, a)}
    return statistics, {"cont": cont, "atom": atom}, ""


# -- Malliavin spectrum -----------------------------------------------------


def _spectrum_verdict(s):
    ok = s["holding_min"] > 1e-8 and s["control_min"] <= 1e-12
    return Verdict.PASS if ok else Verdict.FAIL


def _cap_values(config: SimConfig, paths: int, alpha, n_low, radius):
    basis = basis_ball(config.dim, config.cutoff, radius)
    vals, grams = [], []
    for i in range(paths):
        traj = simulate(config.with_(stream_id=config.stream_id + i))
        g = malliavin_gram(traj, 0.0, config.t_end, basis)
        vals.append(min_quadratic_on_cap(g, alpha, n_low))
        grams.append(g)
    return np.array(vals), grams


@register("malliavin_spectrum", _spectrum_verdict)
def malliavin_spectrum(spec: ExperimentSpec):
    c = spec.config
    alpha = spec.param("alpha", 0.5)
    n_low = spec.param("n_low", 2)
    radius = spec.param("track_radius", 4)
    control = spec.param("control")
    if control is None:
        control = c.with_(flux=FluxPoly.zero(c.dim))
    paths = spec.ensemble_size
    held, _ = _cap_values(c, paths, alpha, n_low, radius)
    ctl, grams = _cap_values(control, paths, alpha, n_low, radius)
    axis = _mode(spec.param("control_axis", (2,) + (0,) * (c.dim - 1)), c.dim)
    pos = grams[0].basis_indices.index(axis) if axis in grams[0].basis_indices else None
    axis_value = max(abs(g.quadratic(np.eye(g.dim)[pos])) for g in grams) if pos is not None else math.nan
    statistics = {"alpha": alpha, "n_low": n_low, "track_radius": radius, "paths": paths,
                  "holding_values": held.tolist(), "holding_min": float(held.min()),
                  "control_values": ctl.tolist(), "control_min": float(ctl.min()),
                  "control_axis": list(axis), "control_axis_value": axis_value,
                  "holding": _summary(held)}
    return statistics, {"holding": held, "control": ctl}, ""


# -- control residual decay -------------------------------------------------


def _residual_verdict(s):
    ok = any(r["slope"] < 0 and r["r2"] > 0.9 for r in s["sweep"])
    return Verdict.PASS if ok else Verdict.FAIL


@register("residual_decay", _residual_verdict)
def residual_decay(spec: ExperimentSpec):
    c = spec.config
    n_windows = int(spec.param("n_windows", 6))
    if c.t_end < 2 * n_windows - 1e-12:
        raise ValidationError(f"t_end must be at least {2 * n_windows}")
    factors = spec.param("beta_factors", [1e-1, 1e-2, 1e-3])
    big = spec.param("beta_limit_factor", 1e12)
    first = (1,) + (0,) * (c.dim - 1)
    xi = _field(spec.param("xi"), c, default={first: 1.0})
    xi = SpectralField(c.dim, c.cutoff, xi / np.linalg.norm(xi))
    traj = simulate(c)
    g0 = malliavin_gram(traj, 0.0, 1.0)
    scale = float(np.trace(g0.matrix)) / g0.dim
    n = np.arange(1, n_windows + 1)
    sweep = []
    series = {"n": n}
    for f in factors:
        _, windows = control_residual_run(traj, xi, f * scale, n_windows)
        norms = np.array([w.rho_norm for w in windows])
        fit = stats.loglinear_fit(n, norms)
        sweep.append({"beta_factor": f, "beta": f * scale, "slope": fit["slope"], "r2": fit["r2"],
                      "rho_norms": norms.tolist(),
                      "max_identity_defect": max(w.identity_defect for w in windows)})
        series[f"rho_{f:g}"] = norms
    _, windows = control_residual_run(traj, xi, big * scale, n_windows)
    rho = np.array([w.rho_norm for w in windows])
    plain = np.array([w.plain_norm for w in windows])
    limit_gap = float(np.max(np.abs(rho - plain) / plain))
    plain_fit = stats.loglinear_fit(n, plain)
    statistics = {"sweep": sweep, "beta_scale": scale, "limit_factor": big,
                  "limit_relative_gap": limit_gap, "plain_slope": plain_fit["slope"],
                  "limit_slope": stats.loglinear_fit(n, rho)["slope"]}
    series["plain"] = plain
    return statistics, series, ""


EXPERIMENTS = ("energy_identity", "l1_contraction", "perp_decay", "ou_law", "uniqueness_probe",
               "irreducibility", "eproperty", "density_proxy", "malliavin_spectrum", "residual_decay")
