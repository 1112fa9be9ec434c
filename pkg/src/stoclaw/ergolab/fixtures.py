"""Fixed-seed configurations used by the acceptance runs.

Every stochastic threshold in the acceptance suite is paired with one of
these specs, so a record can be regenerated bit-for-bit from the repository.
"""

from __future__ import annotations

from fractions import Fraction

from ..dynamics import SimConfig
from ..field import SpectralField, basis_norm
from ..lattice import FluxPoly, NoiseSet, unit_pattern
from .core import ExperimentSpec


def burgers() -> FluxPoly:
    return FluxPoly.from_rows([[0, 0, Fraction(1, 2)]])


def diagonal_square() -> FluxPoly:
    """``A = (u^2, u^2)`` in two dimensions."""
    return FluxPoly.from_rows([[0, 0, 1], [0, 0, 1]])


def noise_1d(modes, amplitude) -> NoiseSet:
    return NoiseSet.from_modes(1, [(k,) for k in modes], amplitude)


def pattern_noise(dim: int, amplitude) -> NoiseSet:
    return NoiseSet.from_modes(dim, unit_pattern(dim), amplitude)


def energy_identity() -> ExperimentSpec:
    u0 = SpectralField.from_modes(1, 64, {(1,): basis_norm(1)})  # sin x
    c = SimConfig(nu=0.1, flux=burgers(), noise=NoiseSet.empty(1), cutoff=64, dt=1e-3, t_end=2.0, u0=u0)
    return ExperimentSpec("energy_identity", c)


def l1_contraction() -> ExperimentSpec:
    c = SimConfig(nu=0.1, flux=burgers(), noise=noise_1d([1, -1, 2, -2], Fraction(1, 2)),
                  cutoff=64, dt=1e-3, t_end=5.0, seed=101)
    return ExperimentSpec("l1_contraction", c, {"check_every": 0.05}, ensemble_size=100)


def perp_decay() -> ExperimentSpec:
    u0 = SpectralField.from_modes(2, 4, {(1, 0): 0.5, (0, 1): -0.5})
    c = SimConfig(nu=0.1, flux=diagonal_square(), noise=pattern_noise(2, Fraction(1, 2)),
                  cutoff=4, dt=1e-2, t_end=10.0, seed=202, u0=u0)
    return ExperimentSpec("perp_decay", c, {"k_star": (1, -1), "sample_every": 0.1})


def ou_law() -> ExperimentSpec:
    c = SimConfig(nu=0.2, flux=FluxPoly.from_rows([[0, 1]]), noise=noise_1d([1, -1], Fraction(1, 2)),
                  cutoff=1, dt=2.5e-3, t_end=125.0, seed=303)
    params = {"k": (1,), "samples_per_path": 11, "sample_spacing": 10.0}
    return ExperimentSpec("ou_law", c, params, ensemble_size=1024, burn_in=25.0)


def uniqueness_probe() -> ExperimentSpec:
    c = SimConfig(nu=0.5, flux=diagonal_square(), noise=pattern_noise(2, Fraction(1, 2)),
                  cutoff=3, dt=1e-2, t_end=200.0, seed=404)
    v0 = {(1, 0): 2.0, (0, 1): -2.0, (1, -1): 1.0, (2, 1): 1.0}
    params = {"v0": v0, "horizons": [25.0, 50.0, 100.0, 200.0], "permutations": 999}
    return ExperimentSpec("uniqueness_probe", c, params, ensemble_size=64)


def irreducibility() -> ExperimentSpec:
    c = SimConfig(nu=0.5, flux=burgers(), noise=noise_1d([1, -1, 2, -2], Fraction(1, 20)),
                  cutoff=16, dt=2e-3, t_end=20.0, seed=505)
    params = {"gamma": 0.5, "u0": {(1,): 1.0, (2,): 1.0}, "u0_norm": 10.0}
    return ExperimentSpec("irreducibility", c, params, ensemble_size=200)


def eproperty() -> ExperimentSpec:
    c = SimConfig(nu=0.5, flux=burgers(), noise=noise_1d([1, -1, 2, -2], Fraction(1, 2)),
                  cutoff=8, dt=1e-2, t_end=50.0, seed=606)
    params = {"deltas": [0.1, 0.05, 0.025], "horizons": [1, 2, 5, 10, 20, 50]}
    return ExperimentSpec("eproperty", c, params, ensemble_size=128)


def density_proxy() -> ExperimentSpec:
    u0 = SpectralField.from_modes(2, 3, {(1, -1): 1.0, (1, 0): 0.5})
    c = SimConfig(nu=0.5, flux=diagonal_square(), noise=pattern_noise(2, Fraction(1, 2)),
                  cutoff=3, dt=1e-2, t_end=40.0, seed=707, u0=u0)
    params = {"k_cont": (1, 0), "k_atom": (1, -1), "samples_per_path": 20, "sample_spacing": 1.0}
    return ExperimentSpec("density_proxy", c, params, ensemble_size=64, burn_in=20.0)


def malliavin_spectrum() -> ExperimentSpec:
    u0 = SpectralField.unit(1, 8, (1,))
    c = SimConfig(nu=0.1, flux=burgers(), noise=noise_1d([1, -1], 1), cutoff=8, dt=1e-2, t_end=1.0,
                  seed=808, u0=u0)
    params = {"alpha": 0.5, "n_low": 2, "track_radius": 4, "control_axis": (2,)}
    return ExperimentSpec("malliavin_spectrum", c, params, ensemble_size=20)


def residual_decay() -> ExperimentSpec:
    u0 = SpectralField.unit(1, 8, (1,))
    c = SimConfig(nu=0.1, flux=burgers(), noise=noise_1d([1, -1, 2, -2], 1), cutoff=8, dt=1e-2,
                  t_end=12.0, seed=909, u0=u0)
    params = {"beta_factors": [1e-1, 1e-2, 1e-3], "n_windows": 6, "xi": {(3,): 1.0}}
    return ExperimentSpec("residual_decay", c, params)


DEFAULTS = {f.__name__: f for f in (energy_identity, l1_contraction, perp_decay, ou_law, uniqueness_probe,
                                    irreducibility, eproperty, density_proxy, malliavin_spectrum,
                                    residual_decay)}


def default_spec(name: str) -> ExperimentSpec:
    return DEFAULTS[name]()
