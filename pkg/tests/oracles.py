"""Independent reference computations shared by the lattice and acceptance tests."""

import itertools
from fractions import Fraction

from stoclaw.lattice import ExactScalar, FluxPoly, NoiseSet, exact_dot, unit_pattern


def sq(n):
    return ExactScalar.sqrt(n)


def brute_dot(row, k):
    return sum(Fraction(c) * ki for c, ki in zip(row, k))


def brute_reachable(top, forced, degree, window):
    """Plain sweep of the mode recursion over the whole window until nothing changes."""
    dim = len(top)
    if degree == 1:
        steps = {(0,) * dim}
    else:
        steps = {tuple(map(sum, zip(*c))) for c in itertools.product(forced, repeat=degree - 1)}
    box = [k for k in itertools.product(range(-window, window + 1), repeat=dim)]
    reached = set(forced)
    changed = True
    while changed:
        changed = False
        for k in box:
            if k in reached or brute_dot(top, k) == 0:
                continue
            if any(tuple(a - b for a, b in zip(k, ell)) in reached for ell in steps):
                reached.add(k)
                changed = True
    return reached


def brute_kernel(rows, dim, r):
    return {k for k in itertools.product(range(-r, r + 1), repeat=dim)
            if any(k) and all(exact_dot(row, k).is_zero() for row in rows)}


def span(basis, dim, r):
    out = set()
    for coef in itertools.product(range(-2 * r, 2 * r + 1), repeat=len(basis)):
        k = tuple(sum(c * b[i] for c, b in zip(coef, basis)) for i in range(dim))
        if any(k) and max(abs(x) for x in k) <= r:
            out.add(k)
    return out


def random_instance(rng):
    dim = rng.randint(1, 3)
    degree = rng.randint(1, 4)
    rows = []
    for _ in range(dim):
        row = [Fraction(0)] * (degree + 1)
        for j in range(1, degree + 1):
            if rng.random() < 0.6:
                num = rng.randint(-5, 5)
                den = rng.choice([d for d in range(-5, 6) if d])
                row[j] = Fraction(num, den)
        rows.append(row)
    if all(r[degree] == 0 for r in rows):
        rows[rng.randrange(dim)][degree] = Fraction(rng.choice([-3, -1, 1, 2]))
    # only (5**dim - 1) / 2 wavevectors up to sign fit in [-2, 2]^dim
    half, size = set(), rng.randint(1, min(4, (5 ** dim - 1) // 2))
    while len(half) < size:
        k = tuple(rng.randint(-2, 2) for _ in range(dim))
        if any(k) and tuple(-x for x in k) not in half:
            half.add(k)
    forced = sorted(half | {tuple(-x for x in k) for k in half})
    return FluxPoly.from_rows(rows), NoiseSet.from_modes(dim, forced), rows, degree


def pattern(dim):
    return NoiseSet.from_modes(dim, unit_pattern(dim), Fraction(1, 2))


CONDITION_HOLDS = {
    "product-flux": (FluxPoly.from_rows([[0, 0, 1], [0, 0, 1]]), pattern(2)),
    "independent-top": (FluxPoly.from_rows([[0, 3, sq(2)], [1, -1, sq(3)]]), pattern(2)),
    "one-dimensional": (FluxPoly.from_rows([[0, 1, 2, Fraction(1, 3)]]), pattern(1)),
}


