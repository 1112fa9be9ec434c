"""Statistical reductions shared by the experiments."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg, stats

MIN_BATCHES = 20


def batch_means(samples, n_batches: int = MIN_BATCHES, level: float = 0.95) -> dict:
    """Mean, variance and a batch-means confidence interval.

    ``samples`` is ordered so that consecutive entries may be correlated but
    distant batches are not (e.g. grouped by ensemble member). Trailing
    samples that do not fill a batch are dropped from the CI, not the mean.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if n_batches < MIN_BATCHES:
        raise ValueError(f"at least {MIN_BATCHES} batches required")
    n = x.size
    out = {"n": int(n), "batches": int(n_batches), "mean": float(x.mean()) if n else math.nan,
           "variance": float(x.var(ddof=1)) if n > 1 else 0.0}
    size = n // n_batches
    if size == 0:
        out.update(ci_low=math.nan, ci_high=math.nan, se=math.nan)
        return out
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    se = float(means.std(ddof=1) / math.sqrt(n_batches))
    half = float(stats.t.ppf(0.5 + level / 2, n_batches - 1)) * se
    out.update(se=se, ci_low=out["mean"] - half, ci_high=out["mean"] + half)
    return out


def energy_distance(x, y) -> float:
    """Multivariate energy distance ``2E|X-Y| - E|X-X'| - E|Y-Y'|`` (V-statistic)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.vstack([x, y])
    d = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    return _energy_from_distances(d, len(x))


def _energy_from_distances(d, n):
    a = d[:n, :n].mean()
    b = d[n:, n:].mean()
    c = d[:n, n:].mean()
    return float(2 * c - a - b)


def permutation_test(x, y, n_perm: int = 999, rng: np.random.Generator | None = None):
    """Energy distance and its permutation p-value ``(1 + #{E* >= E}) / (1 + n_perm)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    rng = rng if rng is not None else np.random.default_rng(0)
    z = np.vstack([x, y])
    d = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    n = len(x)
    obs = _energy_from_distances(d, n)
    hits = 0
    for _ in range(n_perm):
        p = rng.permutation(len(z))
        if _energy_from_distances(d[np.ix_(p, p)], n) >= obs - 1e-15:
            hits += 1
    return obs, (1 + hits) / (1 + n_perm)


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise ValueError("n must be positive")
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def loglinear_fit(x, y) -> dict:
    """Least-squares fit of ``log y`` against ``x``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return {"slope": math.nan, "intercept": math.nan, "r2": math.nan}
    fit = stats.linregress(np.asarray(x, dtype=float), np.log(y))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r2": float(fit.rvalue ** 2)}


def lyapunov_covariance(drift, diffusion) -> np.ndarray:
    """Stationary covariance ``S`` with ``drift S + S drift^T + diffusion diffusion^T = 0``."""
    b = np.asarray(diffusion, dtype=float)
    return linalg.solve_continuous_lyapunov(np.asarray(drift, dtype=float), -b @ b.T)
