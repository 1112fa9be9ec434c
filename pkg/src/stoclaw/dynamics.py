"""Time integration of the stochastic conservation law and its linearisations.

State update per orthonormal mode (exponential Euler)::

    u_k <- E_k u_k + h_k (-div A(u))_k + sigma_k dW_k
    E_k = exp(-nu |k|^2 dt),  h_k = dt * phi1(-nu |k|^2 dt)

with ``sigma_k`` chosen so the forced modes carry the exact Ornstein-Uhlenbeck
convolution variance over one step. The tangent, adjoint and second-variation
steppers are the exact first/second derivatives (and transpose) of this map,
so discrete duality holds to roundoff.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import Blowup, GridTooSmall, OutOfRange, ValidationError
from .field import FluxOperator, SpectralField, fast_odd_size, min_flux_grid, mode_set, basis_norm
from .lattice import FluxPoly, NoiseSet, polynomial_degree


class Scheme(str, enum.Enum):
    EXP_EULER = "EXP_EULER"
    SEMI_IMPLICIT_EULER = "SEMI_IMPLICIT_EULER"


def sobolev_index(dim: int) -> int:
    """``floor(d/2 + 1)``: the regularity index of the state space."""
    return math.floor(dim / 2 + 1)


def moment_index(degree: int, dim: int) -> int:
    """The large even moment ``40 k d (d + 14 k)^2`` used in the a-priori bounds."""
    return 40 * degree * dim * (dim + 14 * degree) ** 2


def phi1(z):
    """``(e^z - 1)/z`` with a series branch for ``|z| < 1e-5``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2 + z * z / 6, np.expm1(safe) / safe)


@dataclass(frozen=True)
class SimConfig:
    nu: float
    flux: FluxPoly
    noise: NoiseSet
    cutoff: int
    dt: float
    t_end: float
    grid_size: int | None = None
    scheme: Scheme = Scheme.EXP_EULER
    seed: int = 0
    stream_id: int = 0
    blowup_threshold: float = 1e6
    u0: SpectralField | None = None

    def __post_init__(self):
        errors = []
        if not self.nu > 0:
            errors.append("nu must be positive")
        if not self.dt > 0:
            errors.append("dt must be positive")
        if self.t_end < 0:
            errors.append("t_end must be nonnegative")
        if self.cutoff < 1:
            errors.append("cutoff must be >= 1")
        if self.flux.dim != self.noise.dim:
            errors.append("flux and noise dimensions differ")
        if errors:
            raise ValidationError(errors)
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        need = min_flux_grid(self.cutoff, max(polynomial_degree(self.flux), 1))
        if self.grid_size is None:
            object.__setattr__(self, "grid_size", fast_odd_size(need))
        elif self.grid_size < need:
            raise GridTooSmall(f"grid_size {self.grid_size} < {need} needed for exact dealiasing")
        elif self.grid_size % 2 == 0:
            raise ValidationError("grid_size must be odd")
        for k in self.noise.wavevectors:
            if max(abs(x) for x in k) > self.cutoff:
                raise ValidationError(f"forced mode {k} lies outside cutoff {self.cutoff}")
        if self.u0 is not None and (self.u0.dim, self.u0.cutoff) != (self.dim, self.cutoff):
            object.__setattr__(self, "u0", self.u0.resized(self.cutoff))

    @property
    def dim(self) -> int:
        return self.flux.dim

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def initial(self) -> SpectralField:
        return self.u0 if self.u0 is not None else SpectralField.zeros(self.dim, self.cutoff)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


class Model:
    """Precomputed operators for one configuration; all methods are batch-aware."""

    def __init__(self, config: SimConfig):
        self.config = config
        c = config
        self.modes = mode_set(c.dim, c.cutoff)
        self.n = self.modes.size
        self.flux = FluxOperator(c.flux.float_coeffs(), c.cutoff, c.grid_size)
        lam = c.nu * self.modes.ksq
        self.lam = lam
        self.hn_weight = self.modes.ksq ** sobolev_index(c.dim)
        forced = c.noise.wavevectors
        self.forced = np.array([self.modes.index[k] for k in forced], dtype=np.int64)
        self.b_tilde = np.array([b for _, b in c.noise.amplitudes]) * basis_norm(c.dim)
        lam_f = lam[self.forced]
        if c.scheme is Scheme.EXP_EULER:
            self.decay = np.exp(-lam * c.dt)
            self.h = c.dt * phi1(-lam * c.dt)
            self.sigma = self.b_tilde * np.sqrt(-np.expm1(-2 * lam_f * c.dt) / (2 * lam_f * c.dt))
            self.inv = None
        else:
            self.inv = 1.0 / (1.0 + lam * c.dt)
            self.sigma = self.b_tilde.copy()

    @property
    def n_forced(self) -> int:
        return len(self.forced)

    def hnorm(self, a):
        return np.sqrt(np.sum(self.hn_weight * a * a, axis=-1))

    def _linear(self, a, rhs):
        """Apply the scheme's linear propagator to ``a`` with explicit forcing ``rhs``."""
        if self.inv is None:
            return self.decay * a + self.h * rhs
        return self.inv * (a + self.config.dt * rhs)

    def step(self, a, dw, ugrid=None):
        if ugrid is None:
            ugrid = self.flux.grid(a)
        rhs = -self.flux.divergence(u=ugrid)
        out = self._linear(a, rhs)
        if self.n_forced:
            noise = np.zeros(np.broadcast_shapes(np.shape(a), out.shape))
            noise[..., self.forced] = self.sigma * dw
            if self.inv is None:
                out = out + noise
            else:
                out = out + self.inv * noise
        return out

    def tangent_step(self, ugrid, xi):
        return self._linear(xi, -self.flux.tangent(xi, ugrid))

    def adjoint_step(self, ugrid, zeta):
        """Transpose of :meth:`tangent_step` at the same base state."""
        if self.inv is None:
            return self.decay * zeta - self.flux.tangent_adjoint(self.h * zeta, ugrid)
        w = self.inv * zeta
        return w - self.config.dt * self.flux.tangent_adjoint(w, ugrid)

    def second_step(self, ugrid, j2, p, q):
        rhs = -self.flux.tangent(j2, ugrid) - self.flux.second(p, q, ugrid)
        return self._linear(j2, rhs)

    def check(self, a, step, trace):
        hn = self.hnorm(a)
        worst = float(np.max(hn)) if np.size(hn) else 0.0
        trace.append(worst)
        if not np.isfinite(worst) or worst > self.config.blowup_threshold:
            raise Blowup(f"H^n norm {worst:.3e} exceeded {self.config.blowup_threshold:.3e} at step {step}",
                         trace)


def step_spde(state: SpectralField, config: SimConfig, increments: dict) -> SpectralField:
    """One scheme step with supplied ``N(0, dt)`` increments keyed by forced wavevector."""
    model = _model(config)
    dw = np.array([increments.get(k, 0.0) for k in config.noise.wavevectors])
    out = model.step(state.coeffs, dw)
    model.check(out, 1, [])
    return state.with_coeffs(out)


_MODEL_CACHE: dict = {}


def _model(config: SimConfig) -> Model:
    key = id(config)
    hit = _MODEL_CACHE.get(key)
    if hit is not None and hit[0] is config:
        return hit[1]
    model = Model(config)
    if len(_MODEL_CACHE) > 32:
        _MODEL_CACHE.clear()
    _MODEL_CACHE[key] = (config, model)
    return model


@dataclass
class TrajectoryCheckpoints:
    """Every-step snapshots of one path plus the increments that produced them."""

    config: SimConfig
    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray
    hnorm_trace: np.ndarray
    lp_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lp_order: int = 0

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.config.dim, self.config.cutoff, self.states[i])

    def final(self) -> SpectralField:
        return self.state(-1)

    def index_of(self, t: float) -> int:
        i = int(round(t / self.dt))
        if i < 0 or i > self.n_steps or abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise OutOfRange(f"time {t} is not on the checkpoint grid [0, {self.times[-1]}] / dt={self.dt}")
        return i

    def model(self) -> Model:
        return _model(self.config)

    def replay(self, i: int) -> np.ndarray:
        """Recompute state ``i + 1`` from state ``i`` and the stored increments."""
        return self.model().step(self.states[i], self.increments[i])

    def header(self) -> dict:
        c = self.config
        return {"type": "trajectory_header", "seed": c.seed, "stream_id": c.stream_id,
                "dt": c.dt, "scheme": c.scheme.value, "nu": c.nu, "cutoff": c.cutoff,
                "grid_size": c.grid_size, "n_steps": self.n_steps,
                "config_hash": config_hash(c)}


def config_hash(c: SimConfig) -> str:
    import hashlib

    text = repr((c.nu, str(c.flux), c.noise.amplitudes, c.cutoff, c.grid_size, c.dt, c.t_end,
                 c.scheme.value, c.seed, c.stream_id,
                 None if c.u0 is None else tuple(np.round(c.u0.coeffs, 17))))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def simulate(config: SimConfig, u0: SpectralField | None = None, lp_order: int | None = None) -> TrajectoryCheckpoints:
    """Integrate one path, keeping every step.

    Monitors the ``H^n`` norm (blowup guard) and an ``L^p`` quadrature on the
    flux grid with ``p = min(40 k d (d + 14 k)^2, 8)``; the latter is only a
    diagnostic, since the grid does not resolve ``u^p`` exactly.
    """
    model = _model(config)
    u0 = config.initial() if u0 is None else u0.resized(config.cutoff)
    n = config.n_steps
    if lp_order is None:
        lp_order = min(moment_index(max(polynomial_degree(config.flux), 1), config.dim), 8)
    stream = rng.IncrementStream(config.seed, [config.stream_id], model.n_forced, config.dt)
    states = np.empty((n + 1, model.n))
    incs = np.empty((n, model.n_forced))
    lp = np.empty(n + 1)
    states[0] = u0.coeffs
    trace: list[float] = []
    model.check(states[0], 0, trace)
    quad = (2 * math.pi / config.grid_size) ** config.dim
    for i in range(n):
        dw = stream(i)[0]
        ug = model.flux.grid(states[i])
        lp[i] = (quad * np.sum(ug ** lp_order)) ** (1.0 / lp_order)
        states[i + 1] = model.step(states[i], dw, ug)
        incs[i] = dw
        model.check(states[i + 1], i + 1, trace)
    ug = model.flux.grid(states[n])
    lp[n] = (quad * np.sum(ug ** lp_order)) ** (1.0 / lp_order)
    times = np.arange(n + 1) * config.dt
    return TrajectoryCheckpoints(config, times, states, incs, np.array(trace), lp, lp_order)


def integrate_batch(config: SimConfig, a0, n_steps: int, stream_ids, observer=None,
                    stride: int = 1, start_step: int = 0):
    """Advance a batch of states with one increment stream per member.

    ``a0`` has shape (batch, n_modes); ``stream_ids`` one id per member (equal
    ids give common-noise coupling). ``observer(step, a)`` is called at step 0
    and every ``stride`` steps. Returns the final batch.
    """
    model = _model(config)
    a = np.array(a0, dtype=float, copy=True)
    stream = rng.IncrementStream(config.seed, stream_ids, model.n_forced, config.dt)
    trace: list[float] = []
    if observer is not None:
        observer(start_step, a)
    for i in range(start_step, start_step + n_steps):
        a = model.step(a, stream(i))
        if (i + 1 - start_step) % 64 == 0 or i + 1 == start_step + n_steps:
            model.check(a, i + 1, trace)
        if observer is not None and (i + 1 - start_step) % stride == 0:
            observer(i + 1, a)
    return a


# -- linearised flows along a stored trajectory -----------------------------


@dataclass
class TangentState:
    field: SpectralField
    base_time: float


def step_tangent(u: SpectralField, tangent: TangentState, config: SimConfig, dt: float | None = None) -> TangentState:
    if dt is not None and abs(dt - config.dt) > 1e-15:
        config = config.with_(dt=dt)
    model = _model(config)
    out = model.tangent_step(model.flux.grid(u.coeffs), tangent.field.coeffs)
    model.check(out, 1, [])
    return TangentState(tangent.field.with_coeffs(out), tangent.base_time + config.dt)


def step_second_variation(u: SpectralField, tangent_phi: TangentState, tangent_psi: TangentState,
                          j2: TangentState, config: SimConfig, dt: float | None = None) -> TangentState:
    if dt is not None and abs(dt - config.dt) > 1e-15:
        config = config.with_(dt=dt)
    model = _model(config)
    ug = model.flux.grid(u.coeffs)
    out = model.second_step(ug, j2.field.coeffs, tangent_phi.field.coeffs, tangent_psi.field.coeffs)
    return TangentState(j2.field.with_coeffs(out), j2.base_time + config.dt)


def _as_coeffs(x):
    return x.coeffs if isinstance(x, SpectralField) else np.asarray(x, dtype=float)


def tangent_flow(traj: TrajectoryCheckpoints, xi, s: float, t: float, record: bool = False):
    """``J_{s,t} xi`` along the stored path; ``xi`` may be a field or a coordinate batch."""
    i0, i1 = traj.index_of(s), traj.index_of(t)
    if i1 < i0:
        raise OutOfRange("need s <= t")
    model = traj.model()
    x = _as_coeffs(xi).copy()
    path = [x] if record else None
    for i in range(i0, i1):
        x = model.tangent_step(model.flux.grid(traj.states[i]), x)
        if record:
            path.append(x)
    if record:
        return np.stack(path)
    return _wrap(xi, x, traj)


def adjoint_path(traj: TrajectoryCheckpoints, phi, r: float, t: float) -> np.ndarray:
    """``K_{r_n,t} phi`` at every grid node ``r_n`` in ``[r, t]``, ascending in time.

    Output shape is (n_nodes,) + shape of ``phi``'s coordinates.
    """
    i0, i1 = traj.index_of(r), traj.index_of(t)
    if i1 < i0:
        raise OutOfRange("need r <= t")
    model = traj.model()
    z = _as_coeffs(phi).copy()
    out = np.empty((i1 - i0 + 1,) + z.shape)
    out[-1] = z
    for i in range(i1 - 1, i0 - 1, -1):
        z = model.adjoint_step(model.flux.grid(traj.states[i]), z)
        out[i - i0] = z
    return out


def adjoint_solve(traj: TrajectoryCheckpoints, phi, t: float, r: float):
    """``K_{r,t} phi``: backward sweep of the exact discrete adjoint."""
    z = adjoint_path(traj, phi, r, t)[0]
    return _wrap(phi, z, traj)


def second_variation(traj: TrajectoryCheckpoints, phi, psi, s: float, t: float):
    """``J2_{s,t}(phi, psi)`` along the stored path."""
    i0, i1 = traj.index_of(s), traj.index_of(t)
    model = traj.model()
    p, q = _as_coeffs(phi).copy(), _as_coeffs(psi).copy()
    j2 = np.zeros(np.broadcast_shapes(p.shape, q.shape))
    for i in range(i0, i1):
        ug = model.flux.grid(traj.states[i])
        j2 = model.second_step(ug, j2, p, q)
        p = model.tangent_step(ug, p)
        q = model.tangent_step(ug, q)
    return _wrap(phi, j2, traj)


def _wrap(like, coeffs, traj):
    if isinstance(like, SpectralField):
        return SpectralField(traj.config.dim, traj.config.cutoff, coeffs)
    return coeffs
