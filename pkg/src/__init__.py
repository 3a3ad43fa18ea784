"""
magdecay - numerical toolkit for dispersive decay of magnetic Schrödinger operators.

This package provides the potential classes and their norms, the free
resolvent, ellipsoidal quadrature, the rho-kernel algebra, the discrete
Hamiltonian with its spectral diagnostics, and the time evolution used to
check |t|^{-3/2} decay.
"""

__version__ = "0.1.0"
__author__ = "magdecay developers"
__email__ = "magdecay@users.noreply.github.com"

from .errors import MagdecayError
from .evolve import decay_experiment, propagate, wave_bound_checks, wave_sine_kernel
from .fields import Bump, Grid3D, PotentialSpec, build_field
from .norms import membership_report, space_norm
from .settings import NumericsSettings, get_settings
from .spectral import HamiltonianOperator, assemble_h, eigensolve, zero_regularity

__all__ = [
    "MagdecayError",
    "NumericsSettings",
    "get_settings",
    "Bump",
    "PotentialSpec",
    "Grid3D",
    "build_field",
    "space_norm",
    "membership_report",
    "HamiltonianOperator",
    "assemble_h",
    "eigensolve",
    "zero_regularity",
    "propagate",
    "decay_experiment",
    "wave_sine_kernel",
    "wave_bound_checks",
]
