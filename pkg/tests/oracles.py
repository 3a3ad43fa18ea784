"""Closed forms the numerics are checked against."""

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import spherical_jn


def _zeros_below(ell, k):
    """Number of positive zeros of the spherical Bessel function j_ell below k."""
    x = np.linspace(1e-6, k, 4000)
    values = spherical_jn(ell, x)
    return int(np.sum(np.sign(values[1:]) != np.sign(values[:-1])))


def square_well_count(depth, radius=1.0):
    """Bound states of -Delta - depth * 1_{|x| < radius}, with multiplicity."""
    k = math.sqrt(depth) * radius
    count = int(math.floor(k / math.pi + 0.5))
    ell = 1
    while True:
        zeros = _zeros_below(ell - 1, k)
        if zeros == 0:
            return count
        count += (2 * ell + 1) * zeros
        ell += 1


def square_well_ground_energy(depth, radius=1.0):
    """s-wave ground energy from k cot(k a) = -kappa, k^2 + kappa^2 = depth."""
    top = math.sqrt(depth)
    if top * radius <= math.pi / 2:
        raise ValueError("no bound state")

    def f(k):
        return k / math.tan(k * radius) + math.sqrt(depth - k ** 2)

    hi = min(math.pi / radius, top) - 1e-12
    k = brentq(f, math.pi / (2 * radius) + 1e-12, hi)
    return -(depth - k ** 2)


def free_gaussian_sup(t):
    """sup |e^{it Delta} e^{-|x|^2}|."""
    return (1 + 16 * np.asarray(t, dtype=float) ** 2) ** -0.75


def free_wave_kernel(t, distance, sigma):
    """sin(t sqrt(-Delta)) / sqrt(-Delta) between gaussians of total variance sigma^2 per axis."""
    t = np.asarray(t, dtype=float)
    pulse = np.exp(-(t - distance) ** 2 / (2 * sigma ** 2)) - np.exp(-(t + distance) ** 2 / (2 * sigma ** 2))
    return pulse / (4 * np.pi * distance * math.sqrt(2 * np.pi) * sigma)
