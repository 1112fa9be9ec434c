import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from stoclaw.dynamics import SimConfig, simulate, tangent_flow
from stoclaw.errors import CapExceeded, OutOfRange, SolveFailure
from stoclaw.field import SpectralField, basis_norm, mode_set
from stoclaw.lattice import FluxPoly, NoiseSet
from stoclaw.malliavin import (
    MalliavinGram,
    apply_A,
    apply_A_star,
    basis_ball,
    control_residual_run,
    malliavin_gram,
    min_quadratic_on_cap,
    trapezoid_weights,
    weighted_pairing,
)

BURGERS = FluxPoly.from_rows([[0, 0, Fraction(1, 2)]])


def heat_traj(nu=0.2, dt=1e-3, t_end=1.0, amp=0.5):
    c = SimConfig(nu=nu, flux=FluxPoly.zero(1), noise=NoiseSet.from_modes(1, [(1,), (-1,), (2,), (-2,)], amp),
                  cutoff=3, dt=dt, t_end=t_end, seed=1)
    return simulate(c)


def burgers_traj(**kw):
    base = dict(nu=0.1, flux=BURGERS, noise=NoiseSet.from_modes(1, [(1,), (-1,)], 1), cutoff=6, dt=1e-2,
                t_end=2.0, seed=4, u0=SpectralField.unit(1, 6, (1,)))
    base.update(kw)
    return simulate(SimConfig(**base))


def test_trapezoid_weights():
    assert np.allclose(trapezoid_weights(5, 0.25), [0.125, 0.25, 0.25, 0.25, 0.125])
    assert trapezoid_weights(1, 0.1).tolist() == [0.0]
    with pytest.raises(OutOfRange):
        trapezoid_weights(0, 0.1)


def test_heat_gram_closed_form():
    traj = heat_traj()
    g = malliavin_gram(traj, 0.0, 1.0)
    ms = mode_set(1, 3)
    bt2 = (0.5 * basis_norm(1)) ** 2
    for k in ms.wavevectors():
        i = ms.index[k]
        lam = 0.2 * k[0] ** 2
        if abs(k[0]) <= 2:
            exact = bt2 * -math.expm1(-2 * lam) / (2 * lam)
            assert g.matrix[i, i] == pytest.approx(exact, rel=1e-6)
        else:
            assert g.matrix[i, i] == 0.0
    off = g.matrix - np.diag(np.diag(g.matrix))
    assert np.abs(off).max() == 0.0
    assert g.eigenvalues()[0] == pytest.approx(0.0, abs=1e-15)


def test_heat_gram_equals_trapezoid_sum():
    traj = heat_traj(dt=0.05)
    g = malliavin_gram(traj, 0.0, 1.0, [(1,)]).matrix[0, 0]
    r = np.arange(21) * 0.05
    w = np.full(21, 0.05)
    w[[0, -1]] = 0.025
    ref = (0.5 * basis_norm(1)) ** 2 * np.sum(w * np.exp(-2 * 0.2 * (1.0 - r)))
    assert g == pytest.approx(ref, rel=1e-13)


def test_gram_is_adjoint_of_control_map():
    traj = burgers_traj()
    gen = np.random.default_rng(3)
    v = gen.standard_normal((101, 2))
    phi = gen.standard_normal(mode_set(1, 6).size)
    lhs = phi @ apply_A(traj, v, 0.0, 1.0).coeffs
    rhs = weighted_pairing(traj, apply_A_star(traj, phi, 0.0, 1.0), v, 0.0, 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-11)
    g = malliavin_gram(traj, 0.0, 1.0)
    a_astar = apply_A(traj, apply_A_star(traj, phi, 0.0, 1.0), 0.0, 1.0).coeffs
    assert np.allclose(g.matrix @ phi, a_astar, atol=1e-12 * np.abs(a_astar).max())


def test_gram_symmetric_psd_and_serialises():
    traj = burgers_traj()
    g = malliavin_gram(traj, 0.5, 1.5, basis_ball(1, 6, 3))
    assert np.array_equal(g.matrix, g.matrix.T)
    assert g.eigenvalues()[0] > -1e-14
    d = g.to_dict()
    assert d["type"] == "gram" and len(d["matrix"]) == g.dim ** 2 and d["quad_nodes"] == 101


def test_gram_cap():
    with pytest.raises(CapExceeded):
        malliavin_gram(burgers_traj(t_end=0.1), 0.0, 0.1, cap=3)


def test_burgers_gram_nondegenerate_low_modes():
    g = malliavin_gram(burgers_traj(t_end=1.0), 0.0, 1.0, basis_ball(1, 6, 3))
    assert min_quadratic_on_cap(g, 0.5, 2) > 1e-8


def brute_cap_min(g, low, alpha, starts=12, seed=0):
    gen = np.random.default_rng(seed)
    best = np.inf
    cons = [{"type": "eq", "fun": lambda x: x @ x - 1},
            {"type": "ineq", "fun": lambda x: x[low] @ x[low] - alpha ** 2 - 1e-10}]
    for _ in range(starts):
        x0 = gen.standard_normal(len(g))
        x0 /= np.linalg.norm(x0)
        res = minimize(lambda x: x @ g @ x, x0, constraints=cons, method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        x = res.x / np.linalg.norm(res.x)
        if x[low] @ x[low] >= alpha ** 2:
            best = min(best, float(x @ g @ x))
    return best


@settings(max_examples=20)
@given(st.integers(2, 5), st.floats(0.1, 0.95), st.integers(0, 2 ** 31))
def test_cap_minimum_matches_constrained_search(n, alpha, seed):
    gen = np.random.default_rng(seed)
    m = gen.standard_normal((n, n))
    scales = np.r_[np.full(1, 1e-3), np.ones(n - 1)]
    g = (m * scales) @ (m * scales).T
    basis = [(i + 1,) for i in range(n)]
    gram = MalliavinGram(basis, g, (0.0, 1.0), 2, "x")
    low = np.array([i + 1 <= max(1, n // 2) for i in range(n)])
    value = min_quadratic_on_cap(gram, alpha, max(1, n // 2))
    oracle = brute_cap_min(g, low, alpha, seed=seed)
    assert value <= oracle + 1e-9 * (1 + abs(oracle))
    assert value >= oracle - 1e-6 * (1 + abs(oracle))


def test_cap_minimum_edge_cases():
    g = np.diag([5.0, 1.0, 0.0])
    gram = MalliavinGram([(1,), (2,), (3,)], g, (0, 1), 2, "x")
    assert min_quadratic_on_cap(gram, 1.0, 1) == pytest.approx(5.0)
    assert min_quadratic_on_cap(gram, 0.5, 3) == 0.0
    # rotate so the low mode mixes into the null direction
    r = min_quadratic_on_cap(gram, 0.5, 1, details=True)
    assert r.value == pytest.approx(5.0 * 0.25)
    with pytest.raises(ValueError):
        min_quadratic_on_cap(gram, 0.0, 1)
    with pytest.raises(ValueError):
        min_quadratic_on_cap(MalliavinGram([(3,)], np.eye(1), (0, 1), 2, "x"), 0.5, 1)


def test_control_residual_identities_and_limit():
    traj = burgers_traj(noise=NoiseSet.from_modes(1, [(1,), (-1,), (2,), (-2,)], 1), t_end=6.0, seed=9)
    xi = SpectralField.unit(1, 6, (3,))
    g0 = malliavin_gram(traj, 0.0, 1.0).matrix
    scale = np.trace(g0) / len(g0)
    _, windows = control_residual_run(traj, xi, 0.1 * scale, 3)
    assert all(w.identity_defect < 1e-8 and w.update_defect < 1e-8 for w in windows)
    assert windows[-1].rho_norm < windows[-1].plain_norm
    _, lim = control_residual_run(traj, xi, 1e12 * scale, 3)
    for w in lim:
        assert abs(w.rho_norm - w.plain_norm) <= 1e-8 * w.plain_norm
    assert windows[-1].plain_norm == pytest.approx(tangent_flow(traj, xi, 0.0, 6.0).norm(), rel=1e-12)


def test_control_residual_rejects_bad_input():
    traj = burgers_traj(t_end=2.0)
    with pytest.raises(ValueError):
        control_residual_run(traj, SpectralField.unit(1, 6, (3,)) * 2, 1.0, 1)
    with pytest.raises(ValueError):
        control_residual_run(traj, SpectralField.unit(1, 6, (3,)), 0.0, 1)
    with pytest.raises(OutOfRange):
        control_residual_run(traj, SpectralField.unit(1, 6, (3,)), 1.0, 2)
    with pytest.raises(SolveFailure):
        control_residual_run(traj, SpectralField.unit(1, 6, (3,)), 1e-30, 1)
