"""
Potentials, periodic grids and sampled fields.

A ``PotentialSpec`` is an analytic sum of bumps for the scalar potential V
and, per component, for the magnetic potential A. Smooth bumps provide exact
partial derivatives up to order four; ball indicators provide values only.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy import fft
from scipy.special import eval_hermite

from .errors import InvalidFieldError, UnsupportedDerivativeError
from .settings import worker_count

logger = logging.getLogger(__name__)

BUMP_KINDS = ('gaussian', 'compact-bump', 'ball-indicator')
MAX_DERIVATIVE_ORDER = 4

# samples of the compact bump closer than this to the support edge are zero
_COMPACT_EDGE = 1e-3


def multi_indices(order):
    """All multi-indices in three variables with total degree ``order``."""
    return [a for a in itertools.product(range(order + 1), repeat=3) if sum(a) == order]


def multinomial(alpha):
    k = sum(alpha)
    return math.factorial(k) // (math.factorial(alpha[0]) * math.factorial(alpha[1])
                                 * math.factorial(alpha[2]))


def _bell(x):
    """Complete Bell polynomials B_0..B_4 of the sequence x[1..4]."""
    x1, x2, x3, x4 = x[1], x[2], x[3], x[4]
    return [
        np.ones_like(x1),
        x1,
        x1 ** 2 + x2,
        x1 ** 3 + 3 * x1 * x2 + x3,
        x1 ** 4 + 6 * x1 ** 2 * x2 + 4 * x1 * x3 + 3 * x2 ** 2 + x4,
    ]


def _compact_1d(t, order):
    """n-th derivative of exp(1 - 1/(1 - t^2)) at t (zero outside (-1, 1))."""
    inside = np.abs(t) < 1.0 - _COMPACT_EDGE
    out = np.zeros_like(t, dtype=float)
    if not inside.any():
        return out
    ti = t[inside]
    g = np.exp(1.0 - 1.0 / (1.0 - ti ** 2))
    if order == 0:
        out[inside] = g
        return out
    xs = [None]
    for k in range(1, order + 1):
        xs.append(-0.5 * math.factorial(k) * ((1 - ti) ** (-k - 1) + (-1) ** k * (1 + ti) ** (-k - 1)))
    xs += [np.zeros_like(ti)] * (5 - len(xs))
    out[inside] = g * _bell(xs)[order]
    return out


def _gaussian_1d(t, order):
    return (-1) ** order * eval_hermite(order, t) * np.exp(-t ** 2)


@dataclass(frozen=True)
class Bump:
    """One analytic term: amplitude times a profile of the given width around center."""

    kind: str
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in BUMP_KINDS:
            raise InvalidFieldError(f"Unknown bump kind: {self.kind}; available kinds: {list(BUMP_KINDS)}")
        if not self.width > 0:
            raise InvalidFieldError(f"Bump width must be positive, got {self.width}")
        center = tuple(float(c) for c in self.center)
        if len(center) != 3:
            raise InvalidFieldError(f"Bump center must have three coordinates, got {self.center}")
        if not np.isfinite(center).all() or not np.isfinite(self.amplitude):
            raise InvalidFieldError("Bump center and amplitude must be finite real numbers")
        object.__setattr__(self, 'center', center)
        object.__setattr__(self, 'amplitude', float(self.amplitude))
        object.__setattr__(self, 'width', float(self.width))

    @property
    def derivative_order_available(self):
        return 0 if self.kind == 'ball-indicator' else MAX_DERIVATIVE_ORDER

    @property
    def extent(self):
        """Radius beyond which the bump is negligible (or exactly zero)."""
        if self.kind == 'gaussian':
            return 6.5 * self.width
        if self.kind == 'compact-bump':
            return math.sqrt(3.0) * self.width
        return self.width

    def evaluate(self, points, alpha=(0, 0, 0)):
        """Partial derivative ``alpha`` of the bump at ``points`` (shape (..., 3))."""
        order = sum(alpha)
        if order > self.derivative_order_available:
            raise UnsupportedDerivativeError(
                f"{self.kind} provides derivatives up to order {self.derivative_order_available}, "
                f"requested {tuple(alpha)}")
        t = (np.asarray(points, dtype=float) - np.asarray(self.center)) / self.width
        if self.kind == 'ball-indicator':
            return self.amplitude * (np.sum(t ** 2, axis=-1) < 1.0).astype(float)
        profile = _gaussian_1d if self.kind == 'gaussian' else _compact_1d
        value = self.amplitude * self.width ** (-order)
        for axis in range(3):
            value = value * profile(t[..., axis], alpha[axis])
        return value

    def dilated(self, s):
        return replace(self, center=tuple(s * c for c in self.center), width=s * self.width)

    def scaled(self, c):
        return replace(self, amplitude=c * self.amplitude)

    def to_dict(self):
        return {'kind': self.kind, 'center': list(self.center),
                'amplitude': self.amplitude, 'width': self.width}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(kind=data['kind'], center=tuple(data.get('center', (0, 0, 0))),
                       amplitude=data.get('amplitude', 1.0), width=data.get('width', 1.0))
        except (KeyError, TypeError) as exc:
            raise InvalidFieldError(f"Malformed bump entry {data!r}: {exc}") from exc


@dataclass(frozen=True)
class PotentialSpec:
    """
    Analytic potentials: ``scalar_terms`` sum to V, ``vector_terms[i]`` sum to A_i.

    ``vector_terms`` is ``None`` when the spec carries no magnetic part.
    """

    scalar_terms: Tuple[Bump, ...] = ()
    vector_terms: Optional[Tuple[Tuple[Bump, ...], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'scalar_terms', tuple(self.scalar_terms))
        if self.vector_terms is not None:
            comps = tuple(tuple(c) for c in self.vector_terms)
            if len(comps) != 3:
                raise InvalidFieldError(f"vector_terms needs three components, got {len(comps)}")
            object.__setattr__(self, 'vector_terms', comps)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def single(cls, kind, amplitude=1.0, width=1.0, center=(0.0, 0.0, 0.0)):
        """Scalar spec made of one bump."""
        return cls(scalar_terms=(Bump(kind, center, amplitude, width),))

    @classmethod
    def vector(cls, *components):
        """Vector spec; each component is a sequence of bumps."""
        return cls(vector_terms=tuple(tuple(c) for c in components))

    @property
    def has_vector(self):
        return self.vector_terms is not None and any(len(c) for c in self.vector_terms)

    @property
    def is_zero(self):
        return all(b.amplitude == 0 for b in self.all_terms())

    def all_terms(self):
        terms = list(self.scalar_terms)
        if self.vector_terms is not None:
            for comp in self.vector_terms:
                terms.extend(comp)
        return terms

    def terms(self, part):
        if part == 'scalar':
            return list(self.scalar_terms)
        if self.vector_terms is None:
            return []
        return [b for comp in self.vector_terms for b in comp]

    @property
    def derivative_order_available(self):
        orders = [b.derivative_order_available for b in self.all_terms()]
        return min(orders) if orders else MAX_DERIVATIVE_ORDER

    def order_available(self, part):
        orders = [b.derivative_order_available for b in self.terms(part)]
        return min(orders) if orders else MAX_DERIVATIVE_ORDER

    def component(self, i):
        """Scalar spec holding the i-th vector component."""
        if self.vector_terms is None:
            return PotentialSpec()
        return PotentialSpec(scalar_terms=self.vector_terms[i])

    def as_vector(self):
        """Move the scalar terms into the first vector component."""
        return PotentialSpec(vector_terms=(self.scalar_terms, (), ()))

    def check_order(self, part, order):
        available = self.order_available(part)
        if order > available:
            kinds = sorted({b.kind for b in self.terms(part) if b.derivative_order_available < order})
            raise UnsupportedDerivativeError(
                f"derivative of order {order} requested from {part} terms of kind {kinds} "
                f"(available up to order {available})")

    def evaluate(self, points, part='scalar', alpha=(0, 0, 0)):
        """
        Exact samples of the partial derivative ``alpha``.

        Scalar part returns shape ``points.shape[:-1]``; vector part returns
        ``(3,) + points.shape[:-1]``.
        """
        points = np.asarray(points, dtype=float)
        self.check_order(part, sum(alpha))
        if part == 'scalar':
            out = np.zeros(points.shape[:-1])
            for bump in self.scalar_terms:
                out = out + bump.evaluate(points, alpha)
            return out
        out = np.zeros((3,) + points.shape[:-1])
        if self.vector_terms is not None:
            for i, comp in enumerate(self.vector_terms):
                for bump in comp:
                    out[i] = out[i] + bump.evaluate(points, alpha)
        return out

    def derivative_magnitude_at(self, points, part='scalar', order=0):
        """Pointwise Frobenius norm of the order-k derivative tensor."""
        points = np.asarray(points, dtype=float)
        self.check_order(part, order)
        total = np.zeros(points.shape[:-1])
        for alpha in multi_indices(order):
            vals = self.evaluate(points, part, alpha)
            sq = vals ** 2 if part == 'scalar' else np.sum(vals ** 2, axis=0)
            total = total + multinomial(alpha) * sq
        return np.sqrt(total)

    def dilated(self, s):
        """Spec of x -> f(x / s)."""
        vector = None
        if self.vector_terms is not None:
            vector = tuple(tuple(b.dilated(s) for b in comp) for comp in self.vector_terms)
        return PotentialSpec(tuple(b.dilated(s) for b in self.scalar_terms), vector)

    def scaled(self, c):
        vector = None
        if self.vector_terms is not None:
            vector = tuple(tuple(b.scaled(c) for b in comp) for comp in self.vector_terms)
        return PotentialSpec(tuple(b.scaled(c) for b in self.scalar_terms), vector)

    def support_radius(self, part=None):
        """Radius around the origin containing every term's extent."""
        terms = self.all_terms() if part is None else self.terms(part)
        if not terms:
            return 0.0
        return max(float(np.linalg.norm(b.center)) + b.extent for b in terms)

    def to_dict(self):
        data = {'scalar': [b.to_dict() for b in self.scalar_terms]}
        if self.vector_terms is not None:
            data['vector'] = [[b.to_dict() for b in comp] for comp in self.vector_terms]
        return data

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidFieldError(f"PotentialSpec must be a JSON object, got {type(data).__name__}")
        scalar = tuple(Bump.from_dict(b) for b in data.get('scalar', []))
        vector = data.get('vector')
        if vector is not None:
            vector = tuple(tuple(Bump.from_dict(b) for b in comp) for comp in vector)
        return cls(scalar, vector)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Grid3D:
    """Periodic box [-L/2, L/2)^3 with n points per axis."""

    n: int
    L: float

    def __post_init__(self):
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise InvalidFieldError(f"Grid size must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise InvalidFieldError(f"Box length must be positive, got {self.L}")
        object.__setattr__(self, 'n', n)
        object.__setattr__(self, 'L', float(self.L))

    @property
    def h(self):
        return self.L / self.n

    @property
    def cell_volume(self):
        return self.h ** 3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def size(self):
        return self.n ** 3

    @property
    def axis(self):
        return -self.L / 2 + self.h * np.arange(self.n)

    def points(self):
        """Node coordinates, shape (n, n, n, 3)."""
        ax = self.axis
        return np.stack(np.meshgrid(ax, ax, ax, indexing='ij'), axis=-1)

    def radius(self):
        return np.linalg.norm(self.points(), axis=-1)

    @property
    def wavenumbers(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def k_vectors(self):
        k = self.wavenumbers
        return np.meshgrid(k, k, k, indexing='ij')

    def k_squared(self):
        kx, ky, kz = self.k_vectors()
        return kx ** 2 + ky ** 2 + kz ** 2

    def index_of(self, point):
        """Nearest node index to ``point``."""
        idx = np.rint((np.asarray(point, dtype=float) + self.L / 2) / self.h).astype(int) % self.n
        return tuple(int(i) for i in idx)

    def node(self, index):
        return self.axis[list(index)]

    def refined(self):
        return Grid3D(2 * self.n, self.L)

    def info(self):
        return {'n': self.n, 'L': self.L, 'h': self.h}


@dataclass(frozen=True)
class AnalyticSource:
    """
    Where a sampled field came from, so norms can re-evaluate it off the grid.

    ``order`` set means the field is the Frobenius magnitude of the order-k
    derivative; otherwise it is the ``alpha`` derivative of ``part``
    (``component`` picks a vector component).
    """

    spec: PotentialSpec
    part: str = 'scalar'
    alpha: Tuple[int, int, int] = (0, 0, 0)
    component: Optional[int] = None
    order: Optional[int] = None

    def evaluate(self, points):
        if self.order is not None:
            return self.spec.derivative_magnitude_at(points, self.part, self.order)
        values = self.spec.evaluate(points, self.part, self.alpha)
        if self.part == 'vector' and self.component is not None:
            return values[self.component]
        return values

    def magnitude(self, points):
        values = self.evaluate(points)
        if self.part == 'vector' and self.component is None and self.order is None:
            return np.sqrt(np.sum(values ** 2, axis=0))
        return np.abs(values)

    @property
    def terms(self):
        if self.part == 'vector' and self.component is not None:
            return list(self.spec.vector_terms[self.component]) if self.spec.vector_terms else []
        return self.spec.terms(self.part)

    @property
    def smoothness(self):
        """Highest further derivative order the source can still provide."""
        used = self.order if self.order is not None else sum(self.alpha)
        return self.spec.order_available(self.part) - used


@dataclass
class ScalarField:
    grid: Grid3D
    values: np.ndarray
    source: Optional[AnalyticSource] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise InvalidFieldError(f"Scalar field needs shape {self.grid.shape}, got {self.values.shape}")

    def check_finite(self):
        if not np.isfinite(self.values).all():
            raise InvalidFieldError("Field contains non-finite samples")
        return self

    def abs(self):
        return np.abs(self.values)

    def inner(self, other):
        """Grid L2 inner product <self, other> (conjugate-linear in self)."""
        return np.vdot(self.values, other.values) * self.grid.cell_volume

    def norm(self):
        return float(np.sqrt(np.real(self.inner(self))))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__


@dataclass
class VectorField:
    grid: Grid3D
    values: np.ndarray
    source: Optional[AnalyticSource] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (3,) + self.grid.shape:
            raise InvalidFieldError(
                f"Vector field needs shape {(3,) + self.grid.shape}, got {self.values.shape}")

    def check_finite(self):
        if not np.isfinite(self.values).all():
            raise InvalidFieldError("Field contains non-finite samples")
        return self

    def abs(self):
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))

    def component(self, i):
        src = None
        if self.source is not None and self.source.order is None:
            src = replace(self.source, component=i)
        return ScalarField(self.grid, self.values[i], src)

    def magnitude(self):
        src = None
        if self.source is not None:
            src = self.source
        return ScalarField(self.grid, self.abs(), src)


def build_field(spec, grid, derivative=(0, 0, 0), part=None):
    """
    Sample the ``derivative`` partial of V (scalar part) or A (vector part).

    ``part`` defaults to ``'vector'`` for specs with only magnetic terms.
    """
    if part is None:
        part = 'vector' if spec.has_vector and not spec.scalar_terms else 'scalar'
    derivative = tuple(int(d) for d in derivative)
    if len(derivative) != 3 or min(derivative) < 0:
        raise InvalidFieldError(f"Derivative multi-index must be three non-negative ints, got {derivative}")
    values = spec.evaluate(grid.points(), part, derivative)
    source = AnalyticSource(spec, part, derivative)
    logger.debug("Built %s field %s on n=%d L=%g", part, derivative, grid.n, grid.L)
    if part == 'vector':
        return VectorField(grid, values, source)
    return ScalarField(grid, values, source)


def derivative_magnitude(spec, grid, order, part=None):
    """Scalar field |D^k f| (Frobenius norm, summed over components for A)."""
    if part is None:
        part = 'vector' if spec.has_vector and not spec.scalar_terms else 'scalar'
    values = spec.derivative_magnitude_at(grid.points(), part, order)
    return ScalarField(grid, values, AnalyticSource(spec, part, order=order))


def spectral_gradient(field):
    """Spectral partial derivatives of a scalar field, shape (3, n, n, n)."""
    grid = field.grid
    workers = worker_count()
    f_hat = fft.fftn(field.values, workers=workers)
    out = []
    for k in grid.k_vectors():
        out.append(fft.ifftn(1j * k * f_hat, workers=workers))
    return np.stack(out)
