"""Noise-to-state operators, the Malliavin Gram matrix and the control residual.

All time integrals use the trapezoid rule on the integrator grid, so quadrature
nodes are exactly the stored checkpoints. In orthonormal coordinates the noise
map is ``Q z = sum_j b~_j z_j ehat_j`` with ``b~_j = b_j ||e_j||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import TrajectoryCheckpoints, adjoint_path, tangent_flow
from .errors import CapExceeded, OutOfRange, SolveFailure
from .field import SpectralField, mode_set

DEFAULT_CAP = 512


def trapezoid_weights(n_nodes: int, dt: float) -> np.ndarray:
    if n_nodes < 1:
        raise OutOfRange("empty quadrature window")
    w = np.full(n_nodes, dt)
    if n_nodes == 1:
        return np.zeros(1)
    w[0] = w[-1] = dt / 2
    return w


def _noise_data(traj):
    model = traj.model()
    return model.forced, model.b_tilde


def apply_A(traj: TrajectoryCheckpoints, v: np.ndarray, s: float, t: float) -> SpectralField:
    """``sum_r w_r J_{r,t} Q v_r`` for node values ``v`` of shape (n_nodes, n_forced)."""
    i0, i1 = traj.index_of(s), traj.index_of(t)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != i1 - i0 + 1:
        raise OutOfRange(f"control has {v.shape[0]} nodes, window has {i1 - i0 + 1}")
    model = traj.model()
    forced, bt = _noise_data(traj)
    w = trapezoid_weights(i1 - i0 + 1, traj.dt)
    y = np.zeros(v.shape[1:-1] + (model.n,))
    for n, i in enumerate(range(i0, i1)):
        y[..., forced] += w[n] * bt * v[n]
        y = model.tangent_step(model.flux.grid(traj.states[i]), y)
    y[..., forced] += w[-1] * bt * v[-1]
    return SpectralField(traj.config.dim, traj.config.cutoff, y) if y.ndim == 1 else y


def apply_A_star(traj: TrajectoryCheckpoints, phi, s: float, t: float) -> np.ndarray:
    """Node values ``b~_j <K_{r,t} phi, ehat_j>`` with shape (n_nodes, ..., n_forced)."""
    forced, bt = _noise_data(traj)
    k = adjoint_path(traj, phi, s, t)
    return k[..., forced] * bt


def weighted_pairing(traj, v, u, s, t) -> float:
    """Inner product on controls matching the quadrature: ``sum_r w_r v_r . u_r``."""
    i0, i1 = traj.index_of(s), traj.index_of(t)
    w = trapezoid_weights(i1 - i0 + 1, traj.dt)
    return float(np.einsum("n,nj,nj->", w, np.asarray(v), np.asarray(u)))


@dataclass
class MalliavinGram:
    basis_indices: list
    matrix: np.ndarray
    window: tuple
    quad_nodes: int
    trajectory_hash: str
    pairings: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis_indices)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def quadratic(self, phi: np.ndarray) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(phi @ self.matrix @ phi)

    def to_dict(self, window_index=None) -> dict:
        return {
            "type": "gram",
            "window": window_index if window_index is not None else list(self.window),
            "time_window": list(self.window),
            "basis": [list(k) for k in self.basis_indices],
            "matrix": self.matrix.ravel().tolist(),
            "eigenvalues": self.eigenvalues().tolist(),
            "quad_nodes": self.quad_nodes,
            "trajectory_hash": self.trajectory_hash,
        }


def basis_all(dim: int, cutoff: int) -> list:
    return mode_set(dim, cutoff).wavevectors()


def basis_ball(dim: int, cutoff: int, radius: float) -> list:
    """Tracked modes with Euclidean ``|k| <= radius``."""
    ms = mode_set(dim, cutoff)
    return [k for k, r in zip(ms.wavevectors(), ms.kabs) if r <= radius + 1e-12]


def malliavin_gram(traj: TrajectoryCheckpoints, s: float, t: float, basis_indices=None,
                   cap: int = DEFAULT_CAP, keep_pairings: bool = False) -> MalliavinGram:
    """Gram matrix ``<M_{s,t} ehat_a, ehat_b>`` on the tracked basis.

    One batched backward adjoint sweep over all basis vectors yields the
    per-node pairings ``P[r, a, j] = b~_j <K_{r,t} ehat_a, ehat_j>``; the Gram
    is their weighted outer product, hence symmetric PSD by construction.
    """
    from .dynamics import config_hash

    ms = mode_set(traj.config.dim, traj.config.cutoff)
    if basis_indices is None:
        basis_indices = ms.wavevectors()
    basis_indices = [tuple(int(x) for x in k) for k in basis_indices]
    if len(basis_indices) > cap:
        raise CapExceeded(f"{len(basis_indices)} basis vectors exceed cap {cap}")
    idx = [ms.index[k] for k in basis_indices]
    eye = np.zeros((len(idx), ms.size))
    eye[np.arange(len(idx)), idx] = 1.0
    p = apply_A_star(traj, eye, s, t)  # (nodes, D, U)
    w = trapezoid_weights(p.shape[0], traj.dt)
    g = np.einsum("n,naj,nbj->ab", w, p, p)
    g = 0.5 * (g + g.T)
    return MalliavinGram(basis_indices, g, (s, t), p.shape[0], config_hash(traj.config),
                         p if keep_pairings else None)


@dataclass
class CapResult:
    value: float
    lambda_min_full: float
    lambda_min_low: float
    multiplier: float
    minimizer: np.ndarray


def min_quadratic_on_cap(gram: MalliavinGram, alpha: float, n_low: float, details: bool = False):
    """Minimum of ``phi^T G phi`` over unit ``phi`` with ``||P_low phi|| >= alpha``.

    If the global minimiser already satisfies the cap constraint, the answer is
    ``lambda_min(G)``. Otherwise the constraint is active and the value is
    ``max_{mu >= 0} lambda_min(G - mu P) + mu alpha^2``, located by bisection on
    the sign of its supergradient; the joint range of two
    quadratic forms on a sphere of dimension >= 3 is convex, so this dual is
    exact. Two-dimensional spans are solved on the circle directly.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    g = np.asarray(gram.matrix, dtype=float)
    low = np.array([np.sqrt(sum(x * x for x in k)) <= n_low + 1e-12 for k in gram.basis_indices])
    if not low.any():
        raise ValueError("tracked basis has no mode with |k| <= n_low")
    pm = np.diag(low.astype(float))
    evals, evecs = np.linalg.eigh(g)
    lam_full = float(evals[0])
    lam_low = float(np.linalg.eigvalsh(g[np.ix_(low, low)])[0])

    def result(value, mu, vec):
        r = CapResult(float(value), lam_full, lam_low, float(mu), vec)
        return r if details else r.value

    if low.all():
        return result(lam_full, 0.0, evecs[:, 0])
    # any vector in the lowest eigenspace meeting the constraint is optimal
    ev0 = evecs[:, np.abs(evals - evals[0]) <= 1e-13 * max(1.0, abs(evals[-1]))]
    low_mass = np.linalg.eigvalsh(ev0[low].T @ ev0[low])[-1]
    if low_mass >= alpha ** 2:
        return result(lam_full, 0.0, evecs[:, 0])
    if alpha == 1.0:
        lv, lvec = np.linalg.eigh(g[np.ix_(low, low)])
        vec = np.zeros(len(low))
        vec[low] = lvec[:, 0]
        return result(lv[0], np.inf, vec)
    if g.shape[0] == 2:
        return result(*_circle_min(g, low, alpha))

    def dual(mu):
        vals, vecs = np.linalg.eigh(g - mu * pm)
        # value and a supergradient of the concave dual
        return vals[0] + mu * alpha ** 2, alpha ** 2 - np.sum(vecs[low, 0] ** 2), vecs[:, 0]

    scale = max(np.abs(evals).max(), 1e-300)
    lo, hi = 0.0, scale
    while dual(hi)[1] > 0 and hi < 1e12 * scale:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if dual(mid)[1] > 0:
            lo = mid
        else:
            hi = mid
    (v_lo, _, x_lo), (v_hi, _, x_hi) = dual(lo), dual(hi)
    mu, value, vec = (lo, v_lo, x_lo) if v_lo >= v_hi else (hi, v_hi, x_hi)
    value = max(value, lam_full)
    return result(min(value, lam_low), mu, vec)


def _circle_min(g, low, alpha):
    # phi = (cos t, sin t) with the low coordinate first; constraint cos^2 t >= alpha^2
    order = np.argsort(~low)
    gg = g[np.ix_(order, order)]
    tmax = np.arccos(alpha)
    a, b, c = gg[0, 0], gg[0, 1], gg[1, 1]
    cands = [-tmax, tmax, 0.0]
    theta = 0.5 * np.arctan2(2 * b, a - c)
    for th in (theta, theta + np.pi / 2, theta - np.pi / 2):
        if abs(th) <= tmax:
            cands.append(th)
    best = min(cands, key=lambda t: a * np.cos(t) ** 2 + 2 * b * np.cos(t) * np.sin(t) + c * np.sin(t) ** 2)
    val = a * np.cos(best) ** 2 + 2 * b * np.cos(best) * np.sin(best) + c * np.sin(best) ** 2
    vec = np.empty(2)
    vec[order] = [np.cos(best), np.sin(best)]
    return val, np.nan, vec


# -- control residual -------------------------------------------------------


@dataclass
class ControlState:
    beta: float
    rho: SpectralField
    v_segments: list
    window: int


@dataclass
class ResidualWindow:
    n: int
    rho_norm: float
    plain_norm: float
    identity_defect: float
    gram_trace: float
    gram_min_eig: float
    update_defect: float

    def to_dict(self):
        return {"type": "residual_window", "n": self.n, "rho_norm": self.rho_norm,
                "plain_norm": self.plain_norm, "identity_defect": self.identity_defect,
                "update_defect": self.update_defect, "gram_trace": self.gram_trace,
                "gram_min_eig": self.gram_min_eig}


def control_residual_run(traj: TrajectoryCheckpoints, xi: SpectralField, beta: float,
                         n_windows: int, basis_indices=None, check_tol: float = 1e-6):
    """Run the two-window control scheme on a stored path of length ``2 n_windows``.

    On each control window ``[2n, 2n+1]`` the control is ``A^*(G + beta)^{-1} J rho``
    and the residual update is the closed form ``beta (G + beta)^{-1} J rho``;
    the free window propagates with ``J`` only. The closed form is cross-checked
    against ``J_{0,t} xi - A_{0,t} v`` at every window end and against the direct
    ``J rho - A v`` on each control window. Returns ``(ControlState, windows)``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if abs(xi.norm() - 1.0) > 1e-9:
        raise ValueError("xi must have unit L2 norm")
    traj.index_of(2.0 * n_windows)
    ms = mode_set(traj.config.dim, traj.config.cutoff)
    if basis_indices is None:
        basis_indices = ms.wavevectors()
    idx = np.array([ms.index[tuple(k)] for k in basis_indices])
    rho = xi.coeffs.copy()
    plain = xi.coeffs.copy()  # J_{0,t} xi
    av = np.zeros_like(rho)  # A_{0,t} v
    segments = []
    windows = []
    for n in range(n_windows):
        t0, t1, t2 = 2.0 * n, 2.0 * n + 1, 2.0 * n + 2
        gram = malliavin_gram(traj, t0, t1, basis_indices, cap=max(DEFAULT_CAP, len(idx)),
                              keep_pairings=True)
        g = gram.matrix
        tr = float(np.trace(g))
        if beta < 1e-12 * tr / len(idx):
            raise SolveFailure(f"beta {beta:.3e} below 1e-12 * trace/D")
        y_full = tangent_flow(traj, rho, t0, t1)
        y = y_full[idx]
        try:
            w = scipy.linalg.solve(g + beta * np.eye(len(idx)), y, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise SolveFailure(str(exc)) from exc
        v = np.einsum("a,naj->nj", w, gram.pairings)
        segments.append(v)
        rho_mid = y_full.copy()
        rho_mid[idx] = beta * w
        direct = y_full - apply_A(traj, v, t0, t1).coeffs
        upd = np.linalg.norm(direct - rho_mid) / max(np.linalg.norm(y_full), 1e-300)
        plain = tangent_flow(traj, plain, t0, t1)
        av = tangent_flow(traj, av, t0, t1) + (y_full - direct)
        rho = tangent_flow(traj, rho_mid, t1, t2)
        plain = tangent_flow(traj, plain, t1, t2)
        av = tangent_flow(traj, av, t1, t2)
        scale = max(np.linalg.norm(plain), np.linalg.norm(av), np.linalg.norm(rho), 1e-300)
        ident = np.linalg.norm(plain - av - rho) / scale
        if ident > check_tol or upd > check_tol:
            raise SolveFailure(f"residual identity drifted: {ident:.2e} / {upd:.2e} at window {n}")
        windows.append(ResidualWindow(n + 1, float(np.linalg.norm(rho)), float(np.linalg.norm(plain)),
                                      float(ident), tr, float(gram.eigenvalues()[0]), float(upd)))
    state = ControlState(beta, SpectralField(xi.dim, xi.cutoff, rho), segments, n_windows)
    return state, windows
