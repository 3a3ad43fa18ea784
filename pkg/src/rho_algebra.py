"""
Operator-valued kernels T(rho, y, x) and their convolution algebra.

A ``RhoKernel`` maps functions sampled on ``in_points`` (with quadrature
weights ``in_weights``) to functions on ``out_points``:

    (T u)(rho, y) = sum_x T(rho, y, x) u(x) w_x.

It has a density part sampled on rho nodes with weights, plus symbolic Dirac
atoms (position, matrix, derivative order). Composition convolves in rho and
multiplies the spatial kernels; the transform is int exp(i lam rho) T(rho) drho.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import fft

from .errors import (ConvergenceError, GridMismatchError, NotContractiveError, UnsupportedDerivativeError,
                     UnsupportedPairError)
from .settings import get_settings, worker_count

logger = logging.getLogger(__name__)

U_NORM_PAIRS = (('L1', 'LINF'), ('LINF', 'LINF'), ('K', 'LINF'), ('L1', 'KSTAR_SURR'))


@dataclass
class Atom:
    """Dirac component matrix * delta^(order)(rho - position)."""

    position: float
    matrix: np.ndarray
    order: int = 0

    def scaled(self, c):
        return Atom(self.position, c * self.matrix, self.order)


@dataclass
class RhoKernel:
    rho: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    out_points: np.ndarray
    in_points: np.ndarray
    in_weights: np.ndarray
    atoms: List[Atom] = field(default_factory=list)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.density = np.asarray(self.density, dtype=complex)
        self.out_points = np.asarray(self.out_points, dtype=float)
        self.in_points = np.asarray(self.in_points, dtype=float)
        self.in_weights = np.asarray(self.in_weights, dtype=float)
        expected = (len(self.rho), len(self.out_points), len(self.in_points))
        if self.density.shape != expected:
            raise GridMismatchError(f"density has shape {self.density.shape}, expected {expected}")
        if not np.isfinite(self.density).all():
            raise GridMismatchError("kernel density contains non-finite values")

    @property
    def shape(self):
        return self.density.shape[1:]

    @property
    def rho_max(self):
        return float(self.rho[-1]) if len(self.rho) else 0.0

    @property
    def step(self):
        return float(self.rho[1] - self.rho[0]) if len(self.rho) > 1 else 0.0

    @property
    def is_lattice(self):
        """Nodes k * step from zero, each weighted by the step."""
        if len(self.rho) < 2 or self.rho[0] != 0:
            return False
        step = self.step
        return (np.allclose(np.diff(self.rho), step, rtol=1e-12, atol=0)
                and np.allclose(self.weights, step, rtol=1e-12, atol=0))

    def like(self, density=None, atoms=None):
        return RhoKernel(self.rho, self.weights,
                         np.zeros_like(self.density) if density is None else density,
                         self.out_points, self.in_points, self.in_weights,
                         [] if atoms is None else atoms)

    def _check_same(self, other):
        if (self.density.shape != other.density.shape or not np.allclose(self.rho, other.rho)
                or not np.allclose(self.out_points, other.out_points)
                or not np.allclose(self.in_points, other.in_points)):
            raise GridMismatchError("kernels live on different rho or spatial grids")

    def __add__(self, other):
        self._check_same(other)
        return self.like(self.density + other.density,
                         _merge_atoms(self.atoms + other.atoms)).truncated(self.rho_max)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return self.like(c * self.density, [a.scaled(c) for a in self.atoms])

    __rmul__ = __mul__

    def truncated(self, rho_max):
        """Drop atoms beyond rho_max and zero the density there."""
        density = np.where((self.rho <= rho_max + 1e-12)[:, None, None], self.density, 0)
        atoms = [a for a in self.atoms if a.position <= rho_max + 1e-12]
        return self.like(density, atoms)

    def tail(self, radius):
        """chi_{rho >= radius} T."""
        density = np.where((self.rho >= radius)[:, None, None], self.density, 0)
        atoms = [a for a in self.atoms if a.position >= radius]
        return self.like(density, atoms)

    def header(self):
        return {
            'rho_max': self.rho_max,
            'n_rho': len(self.rho),
            'n_out': len(self.out_points),
            'n_in': len(self.in_points),
            'lattice': self.is_lattice,
            'atomic': [{'position': a.position, 'order': a.order} for a in self.atoms],
        }


def _merge_atoms(atoms):
    merged = {}
    for atom in atoms:
        key = (round(atom.position, 12), atom.order)
        if key in merged:
            merged[key] = Atom(merged[key].position, merged[key].matrix + atom.matrix, atom.order)
        else:
            merged[key] = atom
    return sorted(merged.values(), key=lambda a: (a.position, a.order))


def lattice(rho_max, n_rho):
    """Uniform rho nodes 0, step, ..., rho_max and their lattice weights."""
    rho = np.linspace(0.0, rho_max, n_rho)
    return rho, np.full(n_rho, rho[1] - rho[0])


def zero_kernel(rho, weights, out_points, in_points, in_weights):
    density = np.zeros((len(rho), len(out_points), len(in_points)), dtype=complex)
    return RhoKernel(rho, weights, density, out_points, in_points, in_weights)


def identity_kernel(rho, weights, points, point_weights):
    """Unit of composition: delta(rho) times the discrete identity diag(1 / w)."""
    kernel = zero_kernel(rho, weights, points, points, point_weights)
    kernel.atoms = [Atom(0.0, np.diag(1.0 / np.asarray(point_weights, dtype=float)).astype(complex))]
    return kernel


def _spread(n, step, position, values, out):
    """Add ``values`` / step at rho = position into ``out`` split linearly between nodes."""
    s = position / step
    i = int(np.floor(s + 1e-12))
    frac = s - i
    if frac < 1e-12:
        frac = 0.0
    if 0 <= i < n:
        out[i] += (1 - frac) * values / step
    if frac > 0 and 0 <= i + 1 < n:
        out[i + 1] += frac * values / step


def _shift_density(density, step, offset):
    """density(rho - offset) on the lattice, linear between nodes."""
    n = density.shape[0]
    s = offset / step
    i = int(np.floor(s + 1e-12))
    frac = s - i
    if frac < 1e-12:
        frac = 0.0
    out = np.zeros_like(density)
    if i < n:
        out[i:] += (1 - frac) * density[:n - i]
    if frac > 0 and i + 1 < n:
        out[i + 1:] += frac * density[:n - i - 1]
    return out


def _require_lattice(T, S):
    if not (T.is_lattice and S.is_lattice):
        raise GridMismatchError("composition needs kernels on a uniform rho lattice")
    if len(T.rho) != len(S.rho) or not np.isclose(T.step, S.step, rtol=1e-12):
        raise GridMismatchError(
            f"rho lattices differ: {len(T.rho)} x {T.step:g} vs {len(S.rho)} x {S.step:g}")
    if T.in_points.shape != S.out_points.shape or not np.allclose(T.in_points, S.out_points):
        raise GridMismatchError("T's input points are not S's output points")


def compose(T, S):
    """
    [T o S](rho, z, x) = int sum_y T(rho1, z, y) w_y S(rho - rho1, y, x) drho1.

    Densities convolve by FFT along rho; atoms shift densities and multiply
    each other symbolically. The result is truncated at rho_max.
    """
    _require_lattice(T, S)
    n, step = len(T.rho), T.step
    W = T.in_weights
    density = np.zeros((n, T.shape[0], S.shape[1]), dtype=complex)

    if np.any(T.density) and np.any(S.density):
        workers = worker_count()
        t_hat = fft.fft(T.density, n=2 * n, axis=0, workers=workers)
        s_hat = fft.fft(S.density, n=2 * n, axis=0, workers=workers)
        prod = np.einsum('fab,b,fbc->fac', t_hat, W, s_hat)
        density += step * fft.ifft(prod, axis=0, workers=workers)[:n]

    for atom in T.atoms:
        if atom.order and np.any(S.density):
            raise UnsupportedDerivativeError("derivative atoms cannot be composed with a density")
        if np.any(S.density):
            density += _shift_density(np.einsum('ab,b,kbc->kac', atom.matrix, W, S.density),
                                      step, atom.position)
    for atom in S.atoms:
        if atom.order and np.any(T.density):
            raise UnsupportedDerivativeError("derivative atoms cannot be composed with a density")
        if np.any(T.density):
            density += _shift_density(np.einsum('kab,b,bc->kac', T.density, W, atom.matrix),
                                      step, atom.position)

    atoms = [Atom(a.position + b.position, a.matrix @ (W[:, None] * b.matrix), a.order + b.order)
             for a in T.atoms for b in S.atoms]
    result = RhoKernel(T.rho, T.weights, density, T.out_points, S.in_points, S.in_weights,
                       _merge_atoms(atoms))
    return result.truncated(T.rho_max)


def hat(T, lam):
    """int exp(i lam rho) T(rho) drho: density by its rho rule, atoms exactly."""
    lam = complex(lam)
    phase = np.exp(1j * lam * T.rho) * T.weights
    out = np.tensordot(phase, T.density, axes=(0, 0))
    for atom in T.atoms:
        out = out + (-1j * lam) ** atom.order * np.exp(1j * lam * atom.position) * atom.matrix
    return out


@dataclass
class HatKernel:
    """Transformed kernel sampled at several spectral parameters."""

    lams: np.ndarray
    matrices: np.ndarray

    @classmethod
    def sample(cls, T, lams):
        lams = np.asarray(lams)
        return cls(lams, np.stack([hat(T, lam) for lam in lams]))


def total_variation(T):
    """M(y, x) = int |T(rho, y, x)| drho (order-zero atoms only)."""
    M = np.tensordot(T.weights, np.abs(T.density), axes=(0, 0))
    for atom in T.atoms:
        if atom.order:
            raise UnsupportedDerivativeError("total variation of a derivative atom is infinite")
        M = M + np.abs(atom.matrix)
    return M


def _pole_rows(M, points):
    """For each row: min over poles x0 in ``points`` of max_x |M(row, x)| |x - x0|."""
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return np.array([np.max(row[:, None] * dist, axis=0).min() for row in M])


def u_norm(T, in_space, out_space):
    """
    Operator norm between function spaces of the total-variation kernel.

    Supported pairs: (L1, LINF), (LINF, LINF), (K, LINF), (L1, KSTAR_SURR).
    """
    if (in_space, out_space) not in U_NORM_PAIRS:
        raise UnsupportedPairError(
            f"u_norm pair ({in_space}, {out_space}) is not available; supported: {list(U_NORM_PAIRS)}")
    M = total_variation(T)
    if M.size == 0:
        return 0.0
    if (in_space, out_space) == ('L1', 'LINF'):
        return float(M.max())
    if (in_space, out_space) == ('LINF', 'LINF'):
        return float((M @ T.in_weights).max())
    if (in_space, out_space) == ('K', 'LINF'):
        return float(_pole_rows(M, T.in_points).max())
    return float(_pole_rows(M.T, T.out_points).max())


@dataclass
class WienerDiagnostics:
    shifts: list
    continuity: list
    radii: list
    tail: list

    def to_dict(self):
        return {'shifts': self.shifts, 'continuity': self.continuity,
                'radii': self.radii, 'tail': self.tail}


def shift(T, offset):
    """T(rho - offset), truncated at rho_max."""
    atoms = [Atom(a.position + offset, a.matrix, a.order) for a in T.atoms]
    if not T.is_lattice:
        raise GridMismatchError("shift needs a uniform rho lattice")
    return T.like(_shift_density(T.density, T.step, offset), atoms).truncated(T.rho_max)


def truncate(T, rho_max):
    return T.truncated(rho_max)


def wiener_diagnostics(T, pair=('LINF', 'LINF'), n_radii=8):
    """Continuity modulus over shifts h, 2h, 4h and tail norms over a radius grid."""
    shifts = [T.step * m for m in (1, 2, 4)]
    # room past rho_max so shifted mass is not truncated away
    extra = 5
    rho = T.step * np.arange(len(T.rho) + extra)
    pad = np.zeros((extra,) + T.shape, dtype=complex)
    padded = RhoKernel(rho, np.full(len(rho), T.step), np.concatenate([T.density, pad]),
                       T.out_points, T.in_points, T.in_weights, list(T.atoms))
    continuity = [u_norm(shift(padded, delta) - padded, *pair) for delta in shifts]
    radii = [float(r) for r in np.linspace(0.0, T.rho_max, n_radii)]
    tail = [u_norm(T.tail(R), *pair) for R in radii]
    return WienerDiagnostics(shifts, continuity, radii, tail)


def invert_neumann(T, settings=None, pair=('LINF', 'LINF'), max_terms=10000):
    """
    S with (I + T)^{-1} = I + S, S = sum_{n >= 1} (-T)^n.

    Requires the operator norm of T (``pair``, L-infinity by default) below one.
    """
    settings = get_settings(settings)
    norm = u_norm(T, *pair)
    if norm >= 1:
        raise NotContractiveError(f"Neumann series needs ||T|| < 1, got {norm:.6g}")
    minus = -T
    term = minus
    total = minus
    terms = 1
    while u_norm(term, *pair) >= settings.neumann_tol:
        if terms >= max_terms:
            raise ConvergenceError(f"Neumann series not converged after {terms} terms")
        term = compose(term, minus)
        total = total + term
        terms += 1
    logger.debug("Neumann series stopped after %d terms (||T|| = %.4g)", terms, norm)
    return total


def free_resolvent_kernel(points, point_weights, rho_max, n_rho):
    """
    Sphere-measure kernel delta(rho - |y - x|) / (4 pi |y - x|) on a rho lattice.

    Each pair's mass is split linearly between the two neighboring nodes;
    coincident pairs are left out.
    """
    points = np.asarray(points, dtype=float)
    rho, weights = lattice(rho_max, n_rho)
    step = rho[1] - rho[0]
    kernel = zero_kernel(rho, weights, points, points, point_weights)
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    for i, j in zip(*np.nonzero(dist > 0)):
        d = dist[i, j]
        if d <= rho_max:
            column = np.zeros(n_rho, dtype=complex)
            _spread(n_rho, step, d, 1.0 / (4 * np.pi * d), column)
            kernel.density[:, i, j] += column
    return kernel


def mollified_free_resolvent_kernel(points, point_weights, rho_max, n_rho, sigma=None):
    """Sphere-measure kernel with the delta replaced by a gaussian of width sigma (4 steps)."""
    points = np.asarray(points, dtype=float)
    rho, weights = lattice(rho_max, n_rho)
    sigma = 4 * (rho[1] - rho[0]) if sigma is None else sigma
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    mass = np.where(dist > 0, 1.0 / (4 * np.pi * np.where(dist > 0, dist, 1.0)), 0.0)
    profile = np.exp(-0.5 * ((rho[:, None, None] - dist[None]) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    density = profile * mass[None]
    return RhoKernel(rho, weights, density, points, points, point_weights)


def dlambda(T):
    """Kernel whose transform is d/dlam of hat(T): i rho T(rho), atoms differentiated."""
    atoms = []
    for a in T.atoms:
        if a.order:
            atoms.append(Atom(a.position, -1j * a.order * a.matrix, a.order - 1))
        atoms.append(Atom(a.position, 1j * a.position * a.matrix, a.order))
    return T.like(1j * T.rho[:, None, None] * T.density, _merge_atoms(atoms))


def save_kernel(T, path):
    """Write arrays plus a JSON header to an .npz file."""
    arrays = {
        'header': np.array(json.dumps(T.header(), sort_keys=True)),
        'rho': T.rho, 'weights': T.weights, 'density': T.density,
        'out_points': T.out_points, 'in_points': T.in_points, 'in_weights': T.in_weights,
    }
    for i, atom in enumerate(T.atoms):
        arrays[f'atom_{i}'] = atom.matrix
    np.savez(path, **arrays)


def load_kernel(path):
    with np.load(path) as data:
        header = json.loads(str(data['header']))
        atoms = [Atom(entry['position'], data[f'atom_{i}'], entry['order'])
                 for i, entry in enumerate(header['atomic'])]
        return RhoKernel(data['rho'], data['weights'], data['density'], data['out_points'],
                         data['in_points'], data['in_weights'], atoms)
