"""Exact flux/noise index sets and the reachability condition on Fourier modes.

Coefficients live in Q extended by square roots of squarefree integers, so every
test of the form ``<c_j, k> == 0`` with integer ``k`` reduces to integer linear
algebra: each squarefree component contributes one rational equation.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .errors import AllLinearTermsZero, WindowOverflow

Vec = tuple[int, ...]

DEFAULT_RADIUS = 8
DEFAULT_CAP = 10**6


def squarefree_split(n: int) -> tuple[int, int]:
    """Write ``n = s**2 * m`` with ``m`` squarefree; returns ``(s, m)``."""
    if n <= 0:
        raise ValueError(f"expected a positive integer, got {n}")
    s, m, p = 1, 1, 2
    while p * p <= n:
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        s *= p ** (e // 2)
        if e % 2:
            m *= p
        p += 1
    return s, m * n


def is_squarefree(n: int) -> bool:
    return n > 0 and squarefree_split(n)[0] == 1


@dataclass(frozen=True)
class ExactScalar:
    """Finite sum ``sum_m q_m * sqrt(m)`` over squarefree ``m`` with rational ``q_m``.

    Zero terms are never stored, so ``is_zero`` is an emptiness test; this is
    exact because square roots of distinct squarefree integers are linearly
    independent over Q.
    """

    terms: tuple[tuple[int, Fraction], ...] = ()

    def __post_init__(self):
        for m, q in self.terms:
            if not is_squarefree(m):
                raise ValueError(f"radicand {m} is not squarefree")
            if q == 0:
                raise ValueError("zero terms must be dropped")

    @classmethod
    def from_map(cls, terms: Mapping[int, Fraction | int]) -> "ExactScalar":
        acc: dict[int, Fraction] = {}
        for m, q in terms.items():
            q = Fraction(q)
            if q == 0:
                continue
            s, sf = squarefree_split(int(m))
            acc[sf] = acc.get(sf, Fraction(0)) + q * s
        return cls(tuple(sorted((m, q) for m, q in acc.items() if q != 0)))

    @classmethod
    def rational(cls, q) -> "ExactScalar":
        return cls.from_map({1: Fraction(q)})

    @classmethod
    def sqrt(cls, n: int) -> "ExactScalar":
        if n == 0:
            return cls()
        return cls.from_map({n: 1})

    @property
    def as_map(self) -> dict[int, Fraction]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return not self.is_zero()

    def __add__(self, other):
        other = _coerce(other)
        acc = self.as_map
        for m, q in other.terms:
            acc[m] = acc.get(m, Fraction(0)) + q
        return ExactScalar.from_map(acc)

    __radd__ = __add__

    def __neg__(self):
        return ExactScalar(tuple((m, -q) for m, q in self.terms))

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, ExactScalar):
            if len(other.terms) == 1 and other.terms[0][0] == 1:
                other = other.terms[0][1]
            elif len(self.terms) == 1 and self.terms[0][0] == 1:
                return other * self.terms[0][1]
            else:
                raise TypeError("products of two irrational ExactScalars are not supported")
        if not isinstance(other, (int, Fraction)):
            return NotImplemented
        q = Fraction(other)
        return ExactScalar.from_map({m: c * q for m, c in self.terms})

    __rmul__ = __mul__

    def __float__(self):
        return float(sum(float(q) * math.sqrt(m) for m, q in self.terms))

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, q in self.terms:
            if m == 1:
                parts.append(str(q))
            elif q == 1:
                parts.append(f"sqrt({m})")
            else:
                parts.append(f"{q}*sqrt({m})")
        return " + ".join(parts)


ZERO = ExactScalar()


def _coerce(x) -> ExactScalar:
    if isinstance(x, ExactScalar):
        return x
    if isinstance(x, (int, Fraction)):
        return ExactScalar.rational(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to ExactScalar")


def exact_dot(coeffs: Iterable[ExactScalar], k: Iterable[int]) -> ExactScalar:
    out = ZERO
    for c, ki in zip(coeffs, k):
        if ki:
            out = out + c * int(ki)
    return out


@dataclass(frozen=True)
class FluxPoly:
    """Polynomial flux ``A_i(u) = sum_j c[i][j] u**j`` for ``i = 1..dim``."""

    dim: int
    coeffs: tuple[tuple[ExactScalar, ...], ...]

    def __post_init__(self):
        if self.dim < 1 or len(self.coeffs) != self.dim:
            raise ValueError("coeffs must have one row per spatial dimension")
        width = max(len(r) for r in self.coeffs)
        rows = tuple(tuple(r) + (ZERO,) * (width - len(r)) for r in self.coeffs)
        object.__setattr__(self, "coeffs", rows)

    @classmethod
    def from_rows(cls, rows) -> "FluxPoly":
        rows = [[_coerce(c) if not isinstance(c, float) else _float_err(c) for c in r] for r in rows]
        return cls(len(rows), tuple(tuple(r) for r in rows))

    @property
    def degree(self) -> int:
        return flux_degree(self)

    def c(self, j: int) -> tuple[ExactScalar, ...]:
        """Coefficient vector ``c_j = (c_{1,j}, ..., c_{d,j})``."""
        width = len(self.coeffs[0])
        return tuple(self.coeffs[i][j] if j < width else ZERO for i in range(self.dim))

    @classmethod
    def zero(cls, dim: int) -> "FluxPoly":
        """The trivial flux; only meaningful for the heat-equation limit of the dynamics."""
        return cls(dim, tuple((ZERO, ZERO) for _ in range(dim)))

    def float_coeffs(self) -> np.ndarray:
        """Float table of shape (dim, max(degree, 1) + 1); constant column zeroed."""
        k = max(polynomial_degree(self), 1)
        out = np.zeros((self.dim, k + 1))
        for i in range(self.dim):
            for j in range(1, k + 1):
                out[i, j] = float(self.coeffs[i][j])
        return out

    def __str__(self):
        comps = []
        for i, row in enumerate(self.coeffs):
            terms = [f"({c})u^{j}" for j, c in enumerate(row) if c]
            comps.append(f"A{i + 1} = " + (" + ".join(terms) or "0"))
        return "; ".join(comps)


def _float_err(c):
    raise TypeError(f"float coefficient {c!r} is not exact; use a rational or sqrt literal")


@dataclass(frozen=True)
class NoiseSet:
    """Finite symmetric forced set with nonzero amplitudes on the unnormalised basis."""

    dim: int
    amplitudes: tuple[tuple[Vec, float], ...]

    def __post_init__(self):
        amps = {}
        for k, b in self.amplitudes:
            k = tuple(int(x) for x in k)
            if len(k) != self.dim:
                raise ValueError(f"wavevector {k} has wrong dimension")
            if not any(k):
                raise ValueError("the zero mode cannot be forced")
            if b == 0:
                raise ValueError(f"amplitude of {k} must be nonzero")
            amps[k] = float(b)
        for k in amps:
            if tuple(-x for x in k) not in amps:
                raise ValueError(f"forced set is not symmetric: {k} present without its negative")
        object.__setattr__(self, "amplitudes", tuple(sorted(amps.items())))

    @classmethod
    def from_modes(cls, dim: int, modes: Iterable[Vec], amplitude=1.0) -> "NoiseSet":
        modes = list(modes)
        if isinstance(amplitude, Mapping):
            return cls(dim, tuple((tuple(k), amplitude[tuple(k)]) for k in modes))
        return cls(dim, tuple((tuple(k), amplitude) for k in modes))

    @classmethod
    def empty(cls, dim: int) -> "NoiseSet":
        return cls(dim, ())

    @property
    def wavevectors(self) -> tuple[Vec, ...]:
        return tuple(k for k, _ in self.amplitudes)

    @property
    def amplitude_map(self) -> dict[Vec, float]:
        return dict(self.amplitudes)

    def __len__(self):
        return len(self.amplitudes)


def unit_pattern(dim: int) -> list[Vec]:
    """The forced set ``{+-e_i, +-2 e_i}`` used by the product-flux corollaries."""
    out = []
    for i in range(dim):
        for s in (1, -1, 2, -2):
            k = [0] * dim
            k[i] = s
            out.append(tuple(k))
    return out


def polynomial_degree(flux: FluxPoly) -> int:
    """Highest ``j >= 1`` with a nonzero ``c_j``; 0 for a flux that is constant."""
    best = 0
    for row in flux.coeffs:
        for j in range(1, len(row)):
            if row[j]:
                best = max(best, j)
    return best


def flux_degree(flux: FluxPoly) -> int:
    best = polynomial_degree(flux)
    if best == 0:
        raise AllLinearTermsZero("every coefficient of degree >= 1 is zero")
    return best


# -- integer linear algebra -------------------------------------------------


def constraint_matrix(vectors: Iterable[tuple[ExactScalar, ...]], dim: int) -> np.ndarray:
    """Integer rows whose joint kernel is ``{k : <c, k> = 0 for every c}``.

    Each exact vector splits into one rational row per squarefree radicand;
    denominators are cleared row by row.
    """
    rows = []
    for vec in vectors:
        radicands = sorted({m for c in vec for m, _ in c.terms})
        for m in radicands:
            qs = [c.as_map.get(m, Fraction(0)) for c in vec]
            lcm = 1
            for q in qs:
                lcm = lcm * q.denominator // math.gcd(lcm, q.denominator)
            row = [int(q * lcm) for q in qs]
            g = 0
            for x in row:
                g = math.gcd(g, x)
            rows.append([x // g for x in row] if g else row)
    if not rows:
        return np.zeros((0, dim), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def integer_kernel(mat) -> list[Vec]:
    """Basis of ``{k in Z^d : mat @ k = 0}`` via unimodular column reduction.

    Column operations reduce ``mat`` to echelon form while the same operations
    are applied to an identity matrix; the transformed identity columns that
    sit under zero columns of the reduced matrix span the integer kernel.
    """
    a = [[int(x) for x in row] for row in np.asarray(mat, dtype=object).tolist()]
    d = len(a[0]) if a else np.asarray(mat).shape[1]
    u = [[int(i == j) for j in range(d)] for i in range(d)]

    def col_axpy(dst, src, q):
        for row in a:
            row[dst] -= q * row[src]
        for row in u:
            row[dst] -= q * row[src]

    def col_swap(i, j):
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in u:
            row[i], row[j] = row[j], row[i]

    pivot = 0
    for r in range(len(a)):
        if pivot >= d:
            break
        while True:
            nz = [c for c in range(pivot, d) if a[r][c] != 0]
            if not nz:
                break
            best = min(nz, key=lambda c: abs(a[r][c]))
            col_swap(pivot, best)
            done = True
            for c in range(pivot + 1, d):
                if a[r][c]:
                    col_axpy(c, pivot, a[r][c] // a[r][pivot])
                    if a[r][c]:
                        done = False
            if done:
                pivot += 1
                break
    basis = [tuple(u[i][c] for i in range(d)) for c in range(pivot, d)]
    return _reduce_basis(basis)


def _reduce_basis(basis: list[Vec]) -> list[Vec]:
    # pairwise size reduction and a sign convention; lattice is unchanged
    vecs = [np.array(v, dtype=object) for v in basis]
    changed = True
    while changed:
        changed = False
        vecs.sort(key=lambda v: int(np.dot(v, v)))
        for i in range(len(vecs)):
            for j in range(len(vecs)):
                if i == j:
                    continue
                nj = int(np.dot(vecs[j], vecs[j]))
                if nj == 0:
                    continue
                q = round(Fraction(int(np.dot(vecs[i], vecs[j])), nj))
                if q:
                    cand = vecs[i] - q * vecs[j]
                    if int(np.dot(cand, cand)) < int(np.dot(vecs[i], vecs[i])):
                        vecs[i] = cand
                        changed = True
    out = []
    for v in vecs:
        v = tuple(int(x) for x in v)
        first = next(x for x in v if x)
        out.append(v if first > 0 else tuple(-x for x in v))
    return sorted(out)


def a_perp_kernel(flux: FluxPoly) -> list[Vec]:
    """Integer basis of ``{k : <c_j, k> = 0 for j = 1..degree}``; empty means only 0."""
    k = flux_degree(flux)
    mat = constraint_matrix((flux.c(j) for j in range(1, k + 1)), flux.dim)
    if mat.shape[0] == 0:
        return [tuple(int(i == j) for j in range(flux.dim)) for i in range(flux.dim)]
    return integer_kernel(mat)


def leading_kernel(flux: FluxPoly) -> list[Vec]:
    """Integer basis of ``{k : <c_top, k> = 0}`` for the top-degree vector."""
    mat = constraint_matrix([flux.c(flux_degree(flux))], flux.dim)
    return integer_kernel(mat)


def minkowski_power(noise: NoiseSet, k_degree: int) -> set[Vec]:
    """Sums of exactly ``k_degree - 1`` forced wavevectors; ``{0}`` when degree is 1."""
    if k_degree < 1:
        raise ValueError("flux degree must be >= 1")
    zero = (0,) * noise.dim
    if k_degree == 1:
        return {zero}
    out = set()
    for combo in itertools.combinations_with_replacement(noise.wavevectors, k_degree - 1):
        out.add(tuple(sum(c) for c in zip(*combo)))
    return out


class _Membership:
    """Fast exact kernel tests using the integer constraint rows."""

    def __init__(self, flux: FluxPoly):
        k = flux_degree(flux)
        self.top = constraint_matrix([flux.c(k)], flux.dim)
        self.all = constraint_matrix((flux.c(j) for j in range(1, k + 1)), flux.dim)

    @staticmethod
    def _zero(mat, k) -> bool:
        if mat.shape[0] == 0:
            return True
        return not np.any(mat @ np.asarray(k, dtype=np.int64))

    def top_zero(self, k) -> bool:
        return self._zero(self.top, k)

    def in_perp(self, k) -> bool:
        return self._zero(self.all, k)


def reachable_set(flux: FluxPoly, noise: NoiseSet, radius: int, margin: int,
                  cap: int = DEFAULT_CAP) -> tuple[set[Vec], bool]:
    """Windowed fixed point of the mode-reachability recursion.

    Returns the reachable modes inside the sup-norm ball of ``radius`` and a
    saturation flag. The search runs in the ball of ``radius + margin``;
    ``saturated`` is True when no admissible candidate was ever discarded for
    leaving that window, in which case the full (finite) reachable set was
    found.
    """
    if noise.wavevectors and radius < max(max(abs(x) for x in k) for k in noise.wavevectors):
        raise ValueError("radius must cover the forced set")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    deg = flux_degree(flux)
    test = _Membership(flux)
    steps = [s for s in minkowski_power(noise, deg)]
    window = radius + margin
    seen: set[Vec] = set(noise.wavevectors)
    frontier = list(seen)
    saturated = True
    while frontier:
        nxt = []
        for kappa in frontier:
            for ell in steps:
                cand = tuple(a + b for a, b in zip(kappa, ell))
                if cand in seen or test.top_zero(cand):
                    continue
                if max(abs(x) for x in cand) > window:
                    saturated = False
                    continue
                seen.add(cand)
                nxt.append(cand)
                if len(seen) > cap:
                    raise WindowOverflow(f"working set exceeded {cap} nodes")
        frontier = nxt
    inside = {k for k in seen if max(abs(x) for x in k) <= radius}
    return inside, saturated


class Verdict(str, enum.Enum):
    HOLDS_EXACT = "HOLDS_EXACT"
    HOLDS_UP_TO_RADIUS = "HOLDS_UP_TO_RADIUS"
    VIOLATED = "VIOLATED"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class ConditionReport:
    verdict: Verdict
    explored_radius: int
    margin: int
    witness: Vec | None
    z_infty_in_ball: set[Vec]
    a_perp_kernel_basis: list[Vec]
    saturated: bool
    certificate: str = ""
    degree: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "type": "condition_report",
            "verdict": self.verdict.value,
            "explored_radius": self.explored_radius,
            "margin": self.margin,
            "witness": list(self.witness) if self.witness is not None else None,
            "z_infty_in_ball": sorted(list(k) for k in self.z_infty_in_ball),
            "a_perp_kernel_basis": [list(v) for v in self.a_perp_kernel_basis],
            "saturated": self.saturated,
            "certificate": self.certificate,
            "degree": self.degree,
            "notes": list(self.notes),
        }


def ball(dim: int, radius: int):
    for k in itertools.product(range(-radius, radius + 1), repeat=dim):
        if any(k):
            yield k


def check_pattern_lemma_b1(flux: FluxPoly, noise: NoiseSet) -> bool:
    """True when the forced set is exactly ``{+-e_i, +-2e_i}``, degree >= 2 and the top vector is nonzero."""
    deg = flux_degree(flux)
    if deg < 2 or not any(flux.c(deg)):
        return False
    return set(noise.wavevectors) == set(unit_pattern(flux.dim))


def check_condition(flux: FluxPoly, noise: NoiseSet, radius: int = DEFAULT_RADIUS,
                    margin: int | None = None, cap: int = DEFAULT_CAP) -> ConditionReport:
    """Decide whether every unreachable mode is annihilated by the flux.

    Violation certificates: C1 (a mode outside the forced set with vanishing
    top-degree pairing that is not annihilated can never be reached) and C2
    (saturated search, so the reachable set is exact, leaves a mode that is not
    annihilated). A global certificate is issued when the forced set has the
    axis pattern, which makes every mode with nonzero top pairing reachable,
    and the top-degree kernel coincides with the annihilated lattice.
    """
    deg = flux_degree(flux)
    if margin is None:
        margin = 2 * deg
    z_inf, saturated = reachable_set(flux, noise, radius, margin, cap)
    test = _Membership(flux)
    perp_basis = a_perp_kernel(flux)
    forced = set(noise.wavevectors)
    notes = []
    if deg == 1:
        notes.append("degree-1 flux: the reachability condition requires degree >= 2, "
                     "but the linear (Ornstein-Uhlenbeck) case has its own uniqueness result")

    def report(verdict, witness=None, cert=""):
        return ConditionReport(verdict, radius, margin, witness, z_inf, perp_basis,
                               saturated, cert, deg, notes)

    uncovered = []
    for k in ball(flux.dim, radius):
        if k in z_inf or test.in_perp(k):
            continue
        if k not in forced and test.top_zero(k):
            return report(Verdict.VIOLATED, k, "C1")
        uncovered.append(k)
    if saturated and uncovered:
        return report(Verdict.VIOLATED, _smallest(uncovered), "C2")
    if not uncovered:
        if check_pattern_lemma_b1(flux, noise) and len(leading_kernel(flux)) == len(perp_basis):
            return report(Verdict.HOLDS_EXACT, None, "pattern+kernel")
        return report(Verdict.HOLDS_UP_TO_RADIUS)
    return report(Verdict.INCONCLUSIVE)


def _smallest(ks):
    return min(ks, key=lambda k: (max(abs(x) for x in k), sum(abs(x) for x in k), [-x for x in k]))


def check_algebraic_nondegeneracy(flux: FluxPoly, noise: NoiseSet) -> bool:
    """``A_perp`` inside ``Z0 + {0}``; a nonzero lattice is infinite, so this means ``A_perp = {0}``."""
    return not a_perp_kernel(flux)


def real_kernel_trivial(flux: FluxPoly) -> bool:
    """Whether ``{beta in R^d : <c_j, beta> = 0, j = 2..degree}`` is ``{0}``.

    Real rank of the coefficient matrix, computed exactly with sympy radicals.
    Degree-1 fluxes give an empty constraint set, hence a nontrivial kernel.
    """
    import sympy

    deg = flux_degree(flux)
    rows = []
    for j in range(2, deg + 1):
        rows.append([sum((sympy.Rational(q.numerator, q.denominator) * sympy.sqrt(m)
                          for m, q in c.terms), sympy.Integer(0)) for c in flux.c(j)])
    if not rows:
        return False
    return sympy.Matrix(rows).rank(simplify=True) == flux.dim
