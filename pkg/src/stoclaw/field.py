"""Mean-zero real fields on the torus [-pi, pi)^d in the sine/cosine basis.

A field is stored as coordinates in the orthonormalised basis
``ehat_k = e_k / ||e_k||`` where ``e_k = sin<k,x>`` for "positive" wavevectors
(first nonzero entry > 0) and ``e_k = -cos<k,x>`` otherwise. Tracked modes are
the nonzero ``k`` with ``|k|_inf <= cutoff`` in lexicographic order, which puts
``-k`` at the mirrored position.

Grid transforms go through the complex exponential representation; that
conversion never leaks out of this module.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import GridTooSmall

#: ``||e_k||_{L^2}`` on [-pi, pi)^d is ``sqrt((2 pi)^d / 2)``; see :func:`basis_norm`.


def basis_norm(dim: int) -> float:
    """L2 norm of an unnormalised basis function ``e_k`` in dimension ``dim``."""
    return math.sqrt((2 * math.pi) ** dim / 2)


def is_positive(k) -> bool:
    for x in k:
        if x:
            return x > 0
    raise ValueError("zero wavevector has no parity")


def basis_eval(k, point) -> float:
    """Unnormalised basis function ``e_k`` at ``point``."""
    phase = float(np.dot(np.asarray(k, dtype=float), np.asarray(point, dtype=float)))
    return math.sin(phase) if is_positive(k) else -math.cos(phase)


class ModeSet:
    """Index bookkeeping for the modes ``0 < |k|_inf <= cutoff`` in dimension ``dim``."""

    def __init__(self, dim: int, cutoff: int):
        if dim < 1 or cutoff < 1:
            raise ValueError("need dim >= 1 and cutoff >= 1")
        self.dim = dim
        self.cutoff = cutoff
        ks = [k for k in itertools.product(range(-cutoff, cutoff + 1), repeat=dim) if any(k)]
        self.k = np.array(ks, dtype=np.int64).reshape(-1, dim)
        self.size = len(ks)
        self.index = {k: i for i, k in enumerate(ks)}
        self.partner = np.arange(self.size)[::-1].copy()
        self.positive = np.array([is_positive(k) for k in ks])
        self.ksq = (self.k ** 2).sum(axis=1).astype(float)
        self.kabs = np.sqrt(self.ksq)

    def __len__(self):
        return self.size

    def wavevectors(self):
        return [tuple(int(x) for x in row) for row in self.k]

    def embed_index(self, other: "ModeSet") -> np.ndarray:
        """Positions of ``other``'s modes inside this (larger) set."""
        return np.array([self.index[tuple(int(x) for x in k)] for k in other.k], dtype=np.int64)


@lru_cache(maxsize=None)
def mode_set(dim: int, cutoff: int) -> ModeSet:
    return ModeSet(dim, cutoff)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable field value: orthonormal coordinates over :func:`mode_set` order."""

    dim: int
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (len(mode_set(self.dim, self.cutoff)),):
            raise ValueError(f"expected {len(mode_set(self.dim, self.cutoff))} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def modes(self) -> ModeSet:
        return mode_set(self.dim, self.cutoff)

    @classmethod
    def zeros(cls, dim, cutoff):
        return cls(dim, cutoff, np.zeros(len(mode_set(dim, cutoff))))

    @classmethod
    def from_modes(cls, dim, cutoff, values: dict):
        """Build from ``{wavevector: orthonormal coordinate}``."""
        ms = mode_set(dim, cutoff)
        c = np.zeros(len(ms))
        for k, v in values.items():
            k = tuple(int(x) for x in np.atleast_1d(k))
            if k not in ms.index:
                raise KeyError(f"mode {k} is outside cutoff {cutoff}")
            c[ms.index[k]] += v
        return cls(dim, cutoff, c)

    @classmethod
    def unit(cls, dim, cutoff, k):
        return cls.from_modes(dim, cutoff, {tuple(np.atleast_1d(k)): 1.0})

    def coefficient(self, k) -> float:
        return float(self.coeffs[self.modes.index[tuple(int(x) for x in np.atleast_1d(k))]])

    def items(self):
        for k, v in zip(self.modes.wavevectors(), self.coeffs):
            yield k, float(v)

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.dim, self.cutoff, coeffs)

    def resized(self, cutoff) -> "SpectralField":
        """Same field on another cutoff (truncating modes that no longer fit)."""
        return resize(self, cutoff)

    def __add__(self, other):
        _same_space(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_space(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return self.with_coeffs(self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def dot(self, other) -> float:
        _same_space(self, other)
        return float(self.coeffs @ other.coeffs)

    def norm(self, alpha: float = 0.0) -> float:
        return sobolev_norm(self, alpha)

    def to_dict(self) -> dict:
        return {
            "type": "field",
            "dim": self.dim,
            "cutoff": self.cutoff,
            "coeffs": [[list(k), float(repr_17(v))] for k, v in self.items() if v != 0.0],
        }

    @classmethod
    def from_dict(cls, data) -> "SpectralField":
        return cls.from_modes(data["dim"], data["cutoff"],
                              {tuple(k): float(v) for k, v in data["coeffs"]})


def repr_17(x: float) -> str:
    return format(float(x), ".17g")


def _same_space(a, b):
    if (a.dim, a.cutoff) != (b.dim, b.cutoff):
        raise ValueError("fields live on different mode sets")


def resize(f: SpectralField, cutoff: int) -> SpectralField:
    if cutoff == f.cutoff:
        return f
    src, dst = f.modes, mode_set(f.dim, cutoff)
    out = np.zeros(len(dst))
    if cutoff > f.cutoff:
        out[dst.embed_index(src)] = f.coeffs
    else:
        out[:] = f.coeffs[src.embed_index(dst)]
    return SpectralField(f.dim, cutoff, out)


def sobolev_norm(field: SpectralField, alpha: float) -> float:
    """``(sum_k |k|^(2 alpha) u_k^2)^(1/2)`` with Euclidean ``|k|``."""
    w = field.modes.ksq ** alpha
    return float(np.sqrt(np.sum(w * field.coeffs ** 2)))


def project_low(field: SpectralField, n: float) -> SpectralField:
    """Keep modes with Euclidean ``|k| <= n``."""
    mask = field.modes.kabs <= n + 1e-12
    return field.with_coeffs(np.where(mask, field.coeffs, 0.0))


def project_high(field: SpectralField, n: float) -> SpectralField:
    return field - project_low(field, n)


class SpectralGrid:
    """Transforms between coordinates on ``mode_set(dim, cutoff)`` and an ``M**dim`` grid.

    Arrays carry arbitrary leading batch axes. The grid is
    ``x_j = -pi + 2 pi j / M`` in each direction; ``M`` must be odd.
    """

    def __init__(self, dim: int, cutoff: int, m: int):
        if m % 2 == 0:
            raise ValueError("grid size must be odd")
        if m < 2 * cutoff + 1:
            raise GridTooSmall(f"grid {m} cannot hold cutoff {cutoff} (need >= {2 * cutoff + 1})")
        self.dim, self.cutoff, self.m = dim, cutoff, m
        ms = mode_set(dim, cutoff)
        self.modes = ms
        s = 1.0 / basis_norm(dim)
        self.s = s
        k = ms.k
        self.half = k[:, -1] >= 0
        kh = k[self.half]
        self.half_idx = tuple((kh[:, i] % m) for i in range(dim))
        sign = np.where(kh.sum(axis=1) % 2 == 0, 1.0, -1.0)
        self.half_sign = sign
        self.half_shape = (m,) * (dim - 1) + (m // 2 + 1,)
        self.grid_shape = (m,) * dim
        self.axes = tuple(range(-dim, 0))
        self.scale = float(m) ** dim
        self.pos = np.flatnonzero(ms.positive)
        self.pos_partner = ms.partner[self.pos]
        # for each positive mode: where its complex coefficient is read from
        half_pos = np.full(ms.size, -1)
        half_pos[np.flatnonzero(self.half)] = np.arange(self.half.sum())
        p_in_half = half_pos[self.pos]
        q_in_half = half_pos[self.pos_partner]
        self.read_direct = p_in_half >= 0
        self.read_from = np.where(self.read_direct, p_in_half, q_in_half)

    def points(self) -> list[np.ndarray]:
        x = -np.pi + 2 * np.pi * np.arange(self.m) / self.m
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def complex_coeffs(self, a: np.ndarray) -> np.ndarray:
        """Coefficients of ``exp(i<k,x>)`` for every tracked mode."""
        c = np.empty(a.shape, dtype=complex)
        ap = a[..., self.pos]
        aq = a[..., self.pos_partner]
        cp = -0.5 * self.s * (aq + 1j * ap)
        c[..., self.pos] = cp
        c[..., self.pos_partner] = np.conj(cp)
        return c

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        batch = a.shape[:-1]
        c = self.complex_coeffs(a)[..., self.half] * self.half_sign
        h = np.zeros(batch + self.half_shape, dtype=complex)
        h[(...,) + self.half_idx] = c
        return sfft.irfftn(h, s=self.grid_shape, axes=self.axes) * self.scale

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        batch = values.shape[: values.ndim - self.dim]
        f = sfft.rfftn(values, axes=self.axes) / self.scale
        ch = f[(...,) + self.half_idx] * self.half_sign
        cpos = np.where(self.read_direct, ch[..., self.read_from], np.conj(ch[..., self.read_from]))
        out = np.empty(batch + (self.modes.size,))
        out[..., self.pos] = -2.0 / self.s * cpos.imag
        out[..., self.pos_partner] = -2.0 / self.s * cpos.real
        return out

    def derivative(self, a: np.ndarray, axis: int) -> np.ndarray:
        """Coordinates of ``d/dx_axis`` of the field: ``k_axis * a[partner]``."""
        return self.modes.k[:, axis] * a[..., self.modes.partner]


@lru_cache(maxsize=None)
def spectral_grid(dim: int, cutoff: int, m: int) -> SpectralGrid:
    return SpectralGrid(dim, cutoff, m)


def to_grid(field: SpectralField, m: int) -> np.ndarray:
    return spectral_grid(field.dim, field.cutoff, m).to_grid(field.coeffs)


def from_grid(values: np.ndarray, dim: int, cutoff: int) -> SpectralField:
    m = values.shape[-1]
    return SpectralField(dim, cutoff, spectral_grid(dim, cutoff, m).from_grid(values))


def min_flux_grid(cutoff: int, degree: int) -> int:
    """Smallest odd grid resolving a degree-``degree`` power of a cutoff-``cutoff`` field."""
    return 2 * degree * cutoff + 1


def fast_odd_size(n: int) -> int:
    """Smallest odd ``m >= n`` whose prime factors are 3, 5 or 7."""
    m = n if n % 2 else n + 1
    while True:
        r = m
        for p in (3, 5, 7):
            while r % p == 0:
                r //= p
        if r == 1:
            return m
        m += 2


def lp_norm(field: SpectralField, p: int, grid_size: int) -> float:
    """Exact L^p norm for even ``p`` via quadrature on a resolving grid."""
    if p < 2 or p % 2:
        raise ValueError("p must be a positive even integer")
    if grid_size < p * field.cutoff + 1:
        raise GridTooSmall(f"grid {grid_size} cannot resolve u^{p} (need >= {p * field.cutoff + 1})")
    if grid_size % 2 == 0:
        grid_size += 1
    u = to_grid(field, grid_size)
    h = (2 * math.pi / grid_size) ** field.dim
    return float((h * np.sum(u ** p)) ** (1.0 / p))


def l1_norm(values: np.ndarray, dim: int) -> np.ndarray:
    """Grid quadrature of ``|u|`` over the trailing ``dim`` axes (approximate)."""
    m = values.shape[-1]
    h = (2 * math.pi / m) ** dim
    return h * np.abs(values).sum(axis=tuple(range(-dim, 0)))


class FluxOperator:
    """Dealiased pseudo-spectral evaluation of ``div A(u)`` and its derivatives.

    All methods act on coordinate arrays with leading batch axes and return
    coordinates on the ``out_cutoff`` mode set. The grid must resolve the
    highest product exactly, so the projection onto tracked modes carries no
    aliasing error.
    """

    def __init__(self, coeffs: np.ndarray, cutoff: int, grid_size: int, out_cutoff: int | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        self.dim = coeffs.shape[0]
        self.degree = coeffs.shape[1] - 1
        self.coeffs = coeffs.copy()
        self.coeffs[:, 0] = 0.0  # constants drop out of the divergence
        self.cutoff = cutoff
        self.out_cutoff = cutoff if out_cutoff is None else out_cutoff
        need = min_flux_grid(cutoff, max(self.degree, 1))
        if grid_size < need:
            raise GridTooSmall(f"grid {grid_size} < {need} required for degree {self.degree}, cutoff {cutoff}")
        self.m = grid_size
        self.inp = spectral_grid(self.dim, cutoff, grid_size)
        self.out = spectral_grid(self.dim, self.out_cutoff, grid_size)
        # rows that are multiples of one another share a single evaluation
        self.groups = _proportional_groups(self.coeffs)
        ko = self.out.modes.k.astype(float)
        self.weights = [ko @ lam for _, lam in self.groups]
        j = np.arange(self.degree + 1)
        self.d1 = [(row * j)[1:] for row, _ in self.groups]
        self.d2 = [(row * j * (j - 1))[2:] for row, _ in self.groups]
        self.linear = self.degree <= 1

    @staticmethod
    def _horner(poly, u):
        if len(poly) == 0:
            return np.zeros_like(u)
        out = np.full_like(u, poly[-1])
        for c in poly[-2::-1]:
            out *= u
            if c:
                out += c
        return out

    def _div_of_grid(self, fields, batch):
        """Coordinates of ``sum_i d/dx_i F_i`` given grid values of each group's flux."""
        ms = self.out.modes
        acc = None
        for w, fg in zip(self.weights, fields):
            term = w * self.out.from_grid(fg)[..., ms.partner]
            acc = term if acc is None else acc + term
        if acc is None:
            return np.zeros(batch + (ms.size,))
        return np.broadcast_to(acc, batch + (ms.size,)).copy()

    def _batch(self, g):
        return g.shape[: g.ndim - self.dim]

    def grid(self, a):
        return self.inp.to_grid(a)

    def divergence(self, a=None, u=None):
        """``div A(u)``; pass grid values ``u`` to skip the forward transform."""
        if u is None:
            u = self.grid(a)
        fields = [self._horner(row, u) for row, _ in self.groups]
        return self._div_of_grid(fields, self._batch(u))

    def tangent(self, xi, u):
        """``div(A'(u) xi)`` for grid values ``u`` of the base state."""
        xg = self.inp.to_grid(xi)
        fields = [self._horner(row, u) * xg for row in self.d1]
        return self._div_of_grid(fields, self._batch(xg))

    def tangent_adjoint(self, zeta, u):
        """L2 adjoint of :meth:`tangent`: ``-P[sum_i A_i'(u) d_i zeta]``.

        Takes coordinates on the output mode set and returns coordinates on the
        input mode set.
        """
        ms = self.out.modes
        acc = None
        for w, row in zip(self.weights, self.d1):
            dz = self.out.to_grid(w * zeta[..., ms.partner])
            term = self._horner(row, u) * dz
            acc = term if acc is None else acc + term
        if acc is None:
            return np.zeros(np.shape(zeta)[:-1] + (self.inp.modes.size,))
        return -self.inp.from_grid(acc)

    def second(self, p, q, u):
        """``div(A''(u) p q)``, the source of the second variation."""
        pg = self.inp.to_grid(p)
        qg = self.inp.to_grid(q)
        batch = np.broadcast_shapes(self._batch(pg), self._batch(qg))
        if self.degree < 2:
            return np.zeros(batch + (self.out.modes.size,))
        fields = [self._horner(row, u) * pg * qg for row in self.d2]
        return self._div_of_grid(fields, batch)


def _proportional_groups(coeffs):
    """Split nonzero rows into ``(base_row, multipliers)`` with ``row_i = lam_i * base``."""
    groups = []
    for i, row in enumerate(coeffs):
        if not np.any(row):
            continue
        for base, lam in groups:
            piv = np.flatnonzero(base)[0]
            ratio = row[piv] / base[piv]
            if np.array_equal(row, ratio * base):
                lam[i] = ratio
                break
        else:
            lam = np.zeros(len(coeffs))
            lam[i] = 1.0
            groups.append((row.copy(), lam))
    return groups


def flux_divergence(field: SpectralField, flux, grid_size: int, out_cutoff: int | None = None) -> SpectralField:
    """``div A(u)`` truncated to ``out_cutoff`` (default ``degree * cutoff``)."""
    coeffs = flux.float_coeffs()
    deg = coeffs.shape[1] - 1
    if out_cutoff is None:
        out_cutoff = deg * field.cutoff
    op = FluxOperator(coeffs, field.cutoff, grid_size, out_cutoff)
    if grid_size < 2 * out_cutoff + 1:
        raise GridTooSmall(f"grid {grid_size} cannot hold output cutoff {out_cutoff}")
    return SpectralField(field.dim, out_cutoff, op.divergence(field.coeffs))
