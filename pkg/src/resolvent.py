"""
Free resolvent R0(lambda^2) = (-Delta - lambda^2)^{-1} in three dimensions.

Closed-form kernels, convolution on the periodic box with the kernel
truncated at radius L/2, and the sphere-measure mass identity.
"""

import logging
from enum import Enum

import numpy as np
from scipy import fft

from .errors import PreconditionError, SingularityError, WindowError
from .fields import ScalarField
from .settings import worker_count

logger = logging.getLogger(__name__)

# regularization of real spectral parameters for applied operators
LIMIT_EPSILON = 1e-6


class ResolventKernelKind(str, Enum):
    R0 = 'R0'
    R0_GRAD = 'R0_GRAD'
    DLAMBDA_R0 = 'DLAMBDA_R0'
    GRAD_DLAMBDA_R0 = 'GRAD_DLAMBDA_R0'

    @property
    def is_vector(self):
        return self in (ResolventKernelKind.R0_GRAD, ResolventKernelKind.GRAD_DLAMBDA_R0)


def _check_lambda(lam):
    lam = complex(lam)
    if lam.imag < 0:
        raise PreconditionError(f"Spectral parameter must satisfy Im lambda >= 0, got {lam}")
    return lam


def resolvent_kernel(kind, lam, x, y):
    """
    Kernel of ``kind`` at (x, y); x and y broadcast as (..., 3) arrays.

    Vector kinds return shape (..., 3).
    """
    kind = ResolventKernelKind(kind)
    lam = _check_lambda(lam)
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    s = np.linalg.norm(d, axis=-1)
    if np.any(s == 0):
        raise SingularityError("Resolvent kernel evaluated at x = y")
    phase = np.exp(1j * lam * s)
    if kind is ResolventKernelKind.R0:
        return phase / (4 * np.pi * s)
    if kind is ResolventKernelKind.DLAMBDA_R0:
        return 1j * phase / (4 * np.pi) * np.ones_like(s)
    unit = d / s[..., None]
    if kind is ResolventKernelKind.R0_GRAD:
        radial = (1j * lam * phase / s - phase / s ** 2) / (4 * np.pi)
        return radial[..., None] * unit
    return (-lam / (4 * np.pi) * phase)[..., None] * unit


def _expm1_over(u, R):
    """(exp(i u R) - 1) / u, with its Taylor series near u = 0."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u * R) < 1e-3
    safe = np.where(small, 1.0, u)
    iR = 1j * R
    series = iR + iR ** 2 * u / 2 + iR ** 3 * u ** 2 / 6 + iR ** 4 * u ** 3 / 24
    return np.where(small, series, np.expm1(1j * safe * R) / safe)


def r0_multiplier(lam, k, R):
    """
    Fourier transform at |xi| = k of the R0 kernel truncated to |x| < R.

    Equals (1/k) int_0^R exp(i lam r) sin(k r) dr, and 1/(k^2 - lam^2) in the
    limit R -> infinity for Im lambda > 0.
    """
    lam = complex(lam)
    k = np.asarray(k, dtype=float)
    out = np.empty(k.shape, dtype=complex)
    zero = k == 0
    kk = np.where(zero, 1.0, k)
    out[...] = -(_expm1_over(lam + kk, R) - _expm1_over(lam - kk, R)) / (2 * kk)
    if np.any(zero):
        if abs(lam * R) < 1e-3:
            at_zero = R ** 2 / 2 + 1j * lam * R ** 3 / 3 - lam ** 2 * R ** 4 / 8
        else:
            e = np.exp(1j * lam * R)
            at_zero = -1j * R * e / lam + (e - 1) / lam ** 2
        out[zero] = at_zero
    return out


def r0_symbol(grid, lam, R=None):
    """Multiplier of the truncated R0 on the FFT grid of ``grid``."""
    R = grid.L / 2 if R is None else R
    return r0_multiplier(lam, np.sqrt(grid.k_squared()), R)


def regularize(lam):
    """Real lambda becomes lambda + i eps (the outgoing limit)."""
    lam = _check_lambda(lam)
    if lam.imag == 0:
        lam = lam + 1j * LIMIT_EPSILON
    return lam


def r0_apply(lam, f):
    """
    Convolution of ``f`` with the R0(lambda^2) kernel truncated at radius L/2.

    The truncated kernel fits inside the periodic box, so its Fourier
    coefficients make the periodic convolution exact, self cell included.
    """
    lam = regularize(lam)
    workers = worker_count()
    f_hat = fft.fftn(f.values, workers=workers)
    out = fft.ifftn(r0_symbol(f.grid, lam) * f_hat, workers=workers)
    return ScalarField(f.grid, out)


def sphere_fourier_check(x, y, rho_max, n_rho=4001):
    """
    Total rho-mass of the sphere-measure kernel delta(|x - y| - rho) / (4 pi rho).

    The delta is mollified on a uniform rho grid; returns (lhs, rhs) with
    rhs = 1 / (4 pi |x - y|).
    """
    d = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if d == 0:
        raise SingularityError("Sphere-measure kernel requested at x = y")
    if rho_max <= d:
        raise WindowError(f"rho_max = {rho_max} does not exceed |x - y| = {d}")
    rho = np.linspace(0.0, rho_max, n_rho)
    step = rho[1] - rho[0]
    sigma = 4 * step
    bump = np.exp(-0.5 * ((rho - d) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    density = np.zeros_like(rho)
    density[1:] = bump[1:] / (4 * np.pi * rho[1:])
    lhs = float(np.sum(np.abs(density)) * step)
    rhs = 1.0 / (4 * np.pi * d)
    logger.debug("sphere mass at |x-y|=%g: %.8g vs %.8g", d, lhs, rhs)
    return lhs, rhs
