import itertools
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stoclaw.errors import AllLinearTermsZero, WindowOverflow
from oracles import CONDITION_HOLDS, pattern, brute_kernel, brute_reachable, random_instance, span
from stoclaw.lattice import (
    ExactScalar,
    FluxPoly,
    NoiseSet,
    Verdict,
    a_perp_kernel,
    check_algebraic_nondegeneracy,
    check_condition,
    check_pattern_lemma_b1,
    exact_dot,
    flux_degree,
    integer_kernel,
    minkowski_power,
    reachable_set,
    real_kernel_trivial,
    unit_pattern,
)

SQUAREFREE = [1, 2, 3, 5, 6, 7, 10, 11, 13, 14, 15]


def sq(n):
    return ExactScalar.sqrt(n)


def mp_value(x):
    with mpmath.workprec(256):
        return sum((mpmath.mpf(q.numerator) / q.denominator) * mpmath.sqrt(m) for m, q in x.terms)


# -- exact scalars -------------------------------------------------------------


def test_exact_zero_cancelling_and_not():
    rng = random.Random(11)
    for _ in range(1000):
        terms = {m: Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for m in rng.sample(SQUAREFREE, 3)}
        x = ExactScalar.from_map(terms)
        # symbolic cancellation through a scaled radicand: sqrt(4m) = 2 sqrt(m)
        m = rng.choice(SQUAREFREE)
        y = x + ExactScalar.from_map({4 * m: Fraction(1, 2)}) - sq(m)
        assert (y - x).is_zero()
        assert abs(mp_value(y - x)) < mpmath.mpf("1e-30")
        z = x + ExactScalar.from_map({m: Fraction(1, rng.randint(1, 50))})
        assert not (z - x).is_zero()
        assert abs(mp_value(z - x)) > mpmath.mpf("1e-30")


def test_exact_scalar_rejects_bad_terms():
    with pytest.raises(ValueError):
        ExactScalar(((4, Fraction(1)),))
    with pytest.raises(TypeError):
        sq(2) * sq(3)
    assert str(ExactScalar.from_map({8: 1})) == "2*sqrt(2)"


# -- degree, kernel, Minkowski -----------------------------------------------


def test_flux_degree_examples():
    assert flux_degree(FluxPoly.from_rows([[0, 0, Fraction(1, 2)]])) == 2
    assert flux_degree(FluxPoly.from_rows([[0, 1, 0, 1], [0, 1]])) == 3
    assert flux_degree(FluxPoly.from_rows([[0, 0, sq(2)], [0, 0, sq(3)]])) == 2
    with pytest.raises(AllLinearTermsZero):
        flux_degree(FluxPoly.from_rows([[5, 0], [0]]))


@pytest.mark.parametrize("rows,expected", [
    ([[0, 0, Fraction(1, 2)]], set()),
    ([[0, 0, 1], [0, 0, 1]], {(1, -1)}),
    ([[0, 0, 1], [0, 0, sq(2)]], set()),
])
def test_a_perp_examples(rows, expected):
    basis = a_perp_kernel(FluxPoly.from_rows(rows))
    assert {tuple(b) if b[0] >= 0 else tuple(-x for x in b) for b in basis} == expected


@settings(max_examples=60)
@given(st.lists(st.lists(st.integers(-4, 4), min_size=3, max_size=3), min_size=1, max_size=2))
def test_integer_kernel_matches_brute_force(mat):
    basis = integer_kernel(mat)
    rows = [[ExactScalar.rational(x) for x in r] for r in mat]
    assert span(basis, 3, 3) == brute_kernel(rows, 3, 3)


def test_a_perp_spans_brute_kernel_with_radicals():
    flux = FluxPoly.from_rows([[0, 1, sq(2)], [0, 2, sq(8)], [0, 0, 1]])
    rows = [flux.c(1), flux.c(2)]
    assert span(a_perp_kernel(flux), 3, 4) == brute_kernel(rows, 3, 4)


def test_minkowski_power_examples():
    z1 = NoiseSet.from_modes(1, [(1,), (-1,)])
    assert minkowski_power(z1, 2) == {(1,), (-1,)}
    assert minkowski_power(z1, 1) == {(0,)}
    z2 = NoiseSet.from_modes(1, [(1,), (-1,), (2,), (-2,)])
    assert minkowski_power(z2, 3) == {(i,) for i in range(-4, 5)}


# -- reachability ---------------------------------------------------------------


def test_reachable_examples():
    burgers = FluxPoly.from_rows([[0, 0, Fraction(1, 2)]])
    z, _ = reachable_set(burgers, NoiseSet.from_modes(1, [(1,), (-1,)]), 5, 2)
    assert z == {(i,) for i in range(-5, 6) if i}
    x_only = FluxPoly.from_rows([[0, 0, 1], [0]])
    y_noise = NoiseSet.from_modes(2, [(0, 1), (0, -1), (0, 2), (0, -2)])
    for r in (2, 4, 7):
        z, sat = reachable_set(x_only, y_noise, r, 4)
        assert z == set(y_noise.wavevectors) and sat
    linear = FluxPoly.from_rows([[0, 3]])
    z, sat = reachable_set(linear, NoiseSet.from_modes(1, [(1,), (-1,)]), 4, 2)
    assert z == {(1,), (-1,)} and sat


def test_reachable_oracle_equivalence_twenty_instances():
    rng = random.Random(2024)
    for _ in range(20):
        flux, noise, rows, degree = random_instance(rng)
        top = [r[degree] for r in rows]
        oracle = brute_reachable(top, noise.wavevectors, degree, 10)
        inner = {k for k in oracle if max(map(abs, k)) <= 6}
        got, _ = reachable_set(flux, noise, 6, 4)
        assert got == inner
        full, _ = reachable_set(flux, noise, 10, 0)
        assert full == oracle


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_reachable_symmetric_and_monotone(seed):
    flux, noise, _, _ = random_instance(random.Random(seed))
    small, _ = reachable_set(flux, noise, 3, 1)
    wide, _ = reachable_set(flux, noise, 3, 3)
    big, _ = reachable_set(flux, noise, 4, 3)
    assert small == {tuple(-x for x in k) for k in small}
    assert small <= wide
    assert wide <= big


PATTERN_FLUXES = [
    ([[0, 0, 0, 1]], 1),
    ([[0, 0, 1], [0, 0, sq(2)]], 2),
    ([[0, 1, 1], [0, 0, 1]], 2),
    ([[0, 0, 0, 1], [0, 0, 0, -2], [0, 0, 0, 1]], 3),
]


# the three-dimensional case only at R=4 to keep the ball small
@pytest.mark.parametrize("rows,dim,radius", [(r, d, R) for r, d in PATTERN_FLUXES for R in (4, 6, 8)
                                             if d < 3 or R == 4])
def test_unit_pattern_reaches_nonzero_pairing(rows, dim, radius):
    flux = FluxPoly.from_rows(rows)
    noise = NoiseSet.from_modes(dim, unit_pattern(dim))
    assert check_pattern_lemma_b1(flux, noise)
    deg = flux_degree(flux)
    z, _ = reachable_set(flux, noise, radius, 2 * deg)
    top = flux.c(deg)
    want = {k for k in itertools.product(range(-radius, radius + 1), repeat=dim)
            if not exact_dot(top, k).is_zero()}
    assert want <= z


def test_unit_pattern_detection():
    assert check_pattern_lemma_b1(FluxPoly.from_rows([[0, 0, 0, 1]]), NoiseSet.from_modes(1, unit_pattern(1)))
    assert not check_pattern_lemma_b1(FluxPoly.from_rows([[0, 0, 0, 1]]), NoiseSet.from_modes(1, [(1,), (-1,)]))


# -- verdicts ---------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(CONDITION_HOLDS))
def test_condition_holds(name):
    flux, noise = CONDITION_HOLDS[name]
    report = check_condition(flux, noise, radius=8)
    assert report.verdict in (Verdict.HOLDS_EXACT, Verdict.HOLDS_UP_TO_RADIUS)
    assert report.witness is None


def test_y_axis_noise_violates_with_axis_witness():
    flux = FluxPoly.from_rows([[0, 0, 1], [0]])
    noise = NoiseSet.from_modes(2, [(0, 1), (0, -1), (0, 2), (0, -2)])
    report = check_condition(flux, noise, radius=4)
    assert report.verdict is Verdict.VIOLATED
    assert report.witness == (1, 0)
    assert report.certificate == "C2"


def test_linear_flux_violation_and_note():
    report = check_condition(FluxPoly.from_rows([[0, 2]]), NoiseSet.from_modes(1, [(1,), (-1,)]), radius=4)
    assert report.verdict is Verdict.VIOLATED
    assert report.witness == (2,)
    assert report.notes


def test_first_certificate_fires_without_exploration():
    # top vector (1, 0) kills the y-axis, lower order does not
    flux = FluxPoly.from_rows([[0, 0, 1], [0, 1, 0]])
    noise = NoiseSet.from_modes(2, [(1, 0), (-1, 0)])
    report = check_condition(flux, noise, radius=3)
    assert report.verdict is Verdict.VIOLATED and report.certificate == "C1"
    assert exact_dot(flux.c(2), report.witness).is_zero()


def test_window_overflow():
    flux = FluxPoly.from_rows([[0, 0, 1], [0, 0, sq(2)]])
    with pytest.raises(WindowOverflow):
        reachable_set(flux, pattern(2), 8, 4, cap=50)


def test_report_serialises():
    flux, noise = CONDITION_HOLDS["product-flux"]
    d = check_condition(flux, noise, radius=4).to_dict()
    assert d["type"] == "condition_report"
    assert d["a_perp_kernel_basis"] in ([[1, -1]], [[-1, 1]])


def test_algebraic_nondegeneracy():
    assert check_algebraic_nondegeneracy(FluxPoly.from_rows([[0, 0, Fraction(1, 2)]]), NoiseSet.empty(1))
    assert not check_algebraic_nondegeneracy(FluxPoly.from_rows([[0, 0, 1], [0, 0, 1]]), pattern(2))
    assert check_algebraic_nondegeneracy(FluxPoly.from_rows([[0, 0, 1], [0, 0, sq(2)]]), pattern(2))


def test_real_kernel():
    assert not real_kernel_trivial(FluxPoly.from_rows([[0, 0, 1], [0, 0, sq(2)]]))
    assert real_kernel_trivial(FluxPoly.from_rows([[0, 0, 1, 0], [0, 0, 0, 1]]))
