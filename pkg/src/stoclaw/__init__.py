"""Stochastic viscous scalar conservation laws on the torus.

Exact lattice diagnostics for the mode-reachability condition, a dealiased
pseudo-spectral integrator with tangent and adjoint flows, Malliavin Gram
matrices and the control-residual scheme, and a lab of reproducible
experiments driven from the ``stoclaw`` command line.
"""

__version__ = "0.1.0"
