"""
rho-space kernels of the perturbation series terms at a pair of foci (x, z).

Every term is an integral over y of a product of free-resolvent factors,

    left(lam; x, y) * middle(y) * right(lam; y, z) [* V#(z)],

and each factor is a polynomial in (i lam) times exp(i lam |.|). The phases
combine into exp(i lam rho) with rho = |x - y| + |y - z|, so after foliating
y by ellipsoids every term reads sum_p (i lam)^p int G_p(rho) exp(i lam rho).
A power (i lam)^p becomes (-1)^p d^p/drho^p of G_p restricted to its
support, which turns into a density plus endpoint atoms of a RhoKernel.

The rho-derivatives of G_p come from derivatives of the integrand along the
flow y(rho) at fixed angles, carried as second-order jets.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ellipsoid import graded_rho_quadrature, surface_integral
from .errors import ConfigurationError, DegenerateEllipsoidError
from .fields import PotentialSpec
from .quadrature import geometric_edges, merge_edges, panel_rule, trapezoid_circle
from .resolvent import ResolventKernelKind, resolvent_kernel
from .rho_algebra import Atom, RhoKernel, _merge_atoms, total_variation
from .settings import get_settings, worker_count

logger = logging.getLogger(__name__)

K = ResolventKernelKind

# each product: (left factor, middle potential or None, right factor, trailing V#(z))
PRODUCTS = {
    'T1': ((K.R0_GRAD, None, K.R0_GRAD, False),),
    'T2': ((K.R0_GRAD, None, K.R0, True),),
    'T3': ((K.R0, 'V', K.R0_GRAD, False),),
    'T4': ((K.R0, 'V', K.R0, True),),
    'TTILDE': ((K.R0_GRAD, None, K.R0, False),),
    'T11': ((K.GRAD_DLAMBDA_R0, None, K.R0_GRAD, False),),
    'T12': ((K.R0_GRAD, None, K.GRAD_DLAMBDA_R0, False),),
    'TTILDE1': ((K.GRAD_DLAMBDA_R0, None, K.R0, False),),
    'TTILDE2': ((K.R0_GRAD, None, K.DLAMBDA_R0, False),),
}
PRODUCTS['T'] = PRODUCTS['T1'] + PRODUCTS['T2'] + PRODUCTS['T3'] + PRODUCTS['T4']

T_PARTS = ('T1', 'T2', 'T3', 'T4', 'T', 'TTILDE')
DLAMBDA_PARTS = ('T11', 'T12', 'TTILDE1', 'TTILDE2')

# the distributional kernel starts at rho = r (1 + FOCAL_BAND); the mass
# below is lumped into atoms at that point
FOCAL_BAND = 1e-3

# the seven norm products of the bilinear bound: (A quantity, kind), (A# quantity, kind)
BIL_TERMS = (
    (('A', 'K2_LOG2'), ('A', 'K2_LOG2')),
    (('grad_A', 'K2_LOG2'), ('A', 'K_LOG')),
    (('grad_A', 'K_LOG'), ('A', 'K2_LOG2')),
    (('grad2_A', 'L1'), ('A', 'K2_LOG2')),
    (('grad2_A', 'K2_LOG2'), ('A', 'K_LOG')),
    (('grad3_A', 'L_LOG_L'), ('A', 'K_LOG')),
    (('grad4_A', 'L_LOG_L'), ('A', 'K2_LOG2')),
)


class Jet:
    """
    Value and first two rho-derivatives of a quantity along the flow y(rho).

    Vector quantities carry a trailing axis of length 3. ``d1`` / ``d2`` are
    ``None`` above the order the jet was built to.
    """

    __slots__ = ('f', 'd1', 'd2')
    __array_ufunc__ = None

    def __init__(self, f, d1=None, d2=None):
        self.f = f
        self.d1 = d1
        self.d2 = None if d1 is None else d2

    @classmethod
    def constant(cls, value, order, vector=False):
        zero = np.zeros(3) if vector else 0.0
        return cls(value, zero if order >= 1 else None, zero if order >= 2 else None)

    @property
    def order(self):
        if self.d1 is None:
            return 0
        return 1 if self.d2 is None else 2

    def _lower(self, order):
        return Jet(self.f, self.d1 if order >= 1 else None, self.d2 if order >= 2 else None)

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.f + other, self.d1, self.d2)
        order = min(self.order, other.order)
        a, b = self._lower(order), other._lower(order)
        return Jet(a.f + b.f,
                   None if order < 1 else a.d1 + b.d1,
                   None if order < 2 else a.d2 + b.d2)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(other * self.f,
                       None if self.d1 is None else other * self.d1,
                       None if self.d2 is None else other * self.d2)
        order = min(self.order, other.order)
        f = self.f * other.f
        d1 = None if order < 1 else self.d1 * other.f + self.f * other.d1
        d2 = None if order < 2 else self.d2 * other.f + 2 * self.d1 * other.d1 + self.f * other.d2
        return Jet(f, d1, d2)

    __rmul__ = __mul__

    def dot(self, other):
        """Contraction of two vector jets over the trailing axis."""
        order = min(self.order, other.order)

        def contract(u, w):
            return np.sum(u * w, axis=-1)

        f = contract(self.f, other.f)
        d1 = None if order < 1 else contract(self.d1, other.f) + contract(self.f, other.d1)
        d2 = None if order < 2 else (contract(self.d2, other.f) + 2 * contract(self.d1, other.d1)
                                     + contract(self.f, other.d2))
        return Jet(f, d1, d2)

    def power(self, k):
        """Scalar jet raised to the real power k."""
        f = self.f ** k
        if self.d1 is None:
            return Jet(f)
        d1 = k * self.f ** (k - 1) * self.d1
        if self.d2 is None:
            return Jet(f, d1)
        d2 = k * (k - 1) * self.f ** (k - 2) * self.d1 ** 2 + k * self.f ** (k - 1) * self.d2
        return Jet(f, d1, d2)


def field_jet(spec, part, point, order):
    """Jet of the potential ``part`` of ``spec`` along the flow through ``point``."""
    spec.check_order(part, order)
    vector = part == 'vector'

    def sample(alpha):
        values = spec.evaluate(point.y, part, tuple(int(a) for a in alpha))
        return np.moveaxis(values, 0, -1) if vector else values

    def along(values, weight):
        return values * weight[..., None] if vector else values * weight

    f = sample((0, 0, 0))
    if order == 0:
        return Jet(f)
    units = np.eye(3, dtype=int)
    first = [sample(e) for e in units]
    d1 = sum(along(first[j], point.v[..., j]) for j in range(3))
    if order == 1:
        return Jet(f, d1)
    d2 = sum(along(first[j], point.dv[..., j]) for j in range(3))
    for j in range(3):
        for l in range(j, 3):
            weight = point.v[..., j] * point.v[..., l] * (1.0 if j == l else 2.0)
            d2 = d2 + along(sample(units[j] + units[l]), weight)
    return Jet(f, d1, d2)


def _factor(kind, vec, dist, potential):
    """
    Coefficients {p: Jet} of (i lam)^p of one resolvent factor without its phase.

    ``vec`` points from the second argument of the kernel to the first and
    ``potential`` is the vector potential dotted into gradient kinds.
    """
    c = 1.0 / (4 * np.pi)
    if kind is K.R0:
        return {0: c * dist.power(-1)}
    if kind is K.DLAMBDA_R0:
        return {0: Jet.constant(1j * c, dist.order)}
    along = vec.dot(potential)
    if kind is K.R0_GRAD:
        return {1: c * along * dist.power(-2), 0: -c * along * dist.power(-3)}
    return {1: 1j * c * along * dist.power(-1)}


def _degree(kind):
    return 0 if kind in (K.R0, K.DLAMBDA_R0) else 1


def _check_part(part, allowed):
    if part not in allowed:
        raise ConfigurationError(f"Unknown kernel part: {part}; available parts: {list(allowed)}")


def _check_frame(frame):
    if frame.r == 0:
        raise DegenerateEllipsoidError("kernel assembly needs distinct foci x != z")


class _TermIntegrand:
    """Coefficients g_p(y) of a part as jets at a SurfacePoint."""

    def __init__(self, part, A, V, A_sharp, V_sharp, frame):
        self.products = PRODUCTS[part]
        self.A = A
        self.V = V
        self.frame = frame
        a_sharp = A_sharp.evaluate(frame.z[None, :], 'vector')[:, 0]
        v_sharp = float(V_sharp.evaluate(frame.z[None, :], 'scalar')[0])
        self.a_sharp = a_sharp
        self.v_sharp = v_sharp
        self.degree = max(_degree(left) + _degree(right) for left, _, right, _ in self.products)

    def check(self):
        """Raise before any quadrature when a needed derivative is unavailable."""
        for left, middle, right, _ in self.products:
            order = _degree(left) + _degree(right)
            if _degree(left):
                self.A.check_order('vector', order)
            if middle == 'V':
                self.V.check_order('scalar', order)

    def coefficients(self, point, order):
        """{p: Jet} summed over the products, jets built to ``order``."""
        # d r1 / d rho = d r2 / d rho = 1/2 at fixed angles
        r1 = Jet(point.r1, 0.5, 0.0)._lower(order)
        r2 = Jet(point.r2, 0.5, 0.0)._lower(order)
        y = Jet(point.y, point.v, point.dv)._lower(order)
        vec1 = y * -1.0 + self.frame.x
        vec2 = y - self.frame.z
        a_sharp = Jet.constant(self.a_sharp, order, vector=True)
        total = {}
        a_jet = v_jet = None
        for left, middle, right, trailing in self.products:
            if _degree(left) and a_jet is None:
                a_jet = field_jet(self.A, 'vector', point, order)
            lf = _factor(left, vec1, r1, a_jet)
            rf = _factor(right, vec2, r2, a_sharp)
            if middle == 'V' and v_jet is None:
                v_jet = field_jet(self.V, 'scalar', point, order)
            mid = v_jet if middle == 'V' else None
            scale = self.v_sharp if trailing else 1.0
            for p, lj in lf.items():
                for q, rj in rf.items():
                    term = lj * rj
                    if mid is not None:
                        term = term * mid
                    term = term * scale
                    total[p + q] = term if p + q not in total else total[p + q] + term
        return total


def _surface_moments(integrand, rho, settings, order):
    """
    (1/8) times the rho-derivatives 0..order of int int g_p (rho^2 - r^2 t^2) dt dphi.

    Returns an array (degree + 1, order + 1).
    """
    frame = integrand.frame
    degree = integrand.degree

    def f(point):
        coeffs = integrand.coefficients(point, order)
        jac = 4 * point.r1 * point.r2
        out = np.zeros(point.rho.shape + (degree + 1, order + 1), dtype=complex)
        for p, jet in coeffs.items():
            g = np.broadcast_to(jet.f, point.rho.shape)
            out[..., p, 0] = g
            if order >= 1:
                out[..., p, 1] = jet.d1 + 2 * rho * g / jac
            if order >= 2:
                out[..., p, 2] = jet.d2 + (4 * rho * jet.d1 + 2 * g) / jac
        return out

    return surface_integral(frame, rho, f, settings) / 8


def _rho_edges(frame, rho_max, integrand, settings):
    """Panels on [r (1 + FOCAL_BAND), rho_max], graded toward the focal value."""
    r = frame.r
    start = r * (1 + FOCAL_BAND)
    if rho_max <= start:
        raise DegenerateEllipsoidError(f"rho_max = {rho_max} does not exceed r (1 + band) = {start}")
    near = min(rho_max, 2 * r)
    graded = geometric_edges(start, near, start - r, settings.graded_panels)
    widths = [b.width for b in integrand.A.all_terms() + integrand.V.all_terms()] or [1.0]
    step = min(widths) / 2
    count = max(settings.radial_panels, int(math.ceil((rho_max - near) / step)))
    far = np.linspace(near, rho_max, count + 1) if rho_max > near else []
    return merge_edges(graded, far, lo=start, hi=rho_max)


def _map_rho(fun, nodes):
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return np.array(list(pool.map(fun, nodes)))


def _assemble(part, A, V, A_sharp, V_sharp, frame, rho_max, settings):
    settings = get_settings(settings)
    _check_frame(frame)
    A = A if A is not None else PotentialSpec.zero()
    V = V if V is not None else PotentialSpec.zero()
    A_sharp = A_sharp if A_sharp is not None else A
    V_sharp = V_sharp if V_sharp is not None else V
    integrand = _TermIntegrand(part, A, V, A_sharp, V_sharp, frame)
    integrand.check()
    degree = integrand.degree
    r = frame.r
    start = r * (1 + FOCAL_BAND)

    nodes, weights = panel_rule(_rho_edges(frame, rho_max, integrand, settings), settings.gl_order)
    ends = np.array([start, rho_max])
    moments = _map_rho(lambda rho: _surface_moments(integrand, rho, settings, degree),
                       np.concatenate([nodes, ends]))
    inner, at_start, at_end = moments[:-2], moments[-2], moments[-1]

    # (-1)^p d^p/drho^p (G_p chi_[start, rho_max])
    density = np.zeros(len(nodes), dtype=complex)
    atoms = []
    for p in range(degree + 1):
        sign = (-1) ** p
        density = density + sign * inner[:, p, p]
        for j in range(p):
            k = p - 1 - j
            atoms.append(Atom(start, np.array([[sign * at_start[p, k]]]), j))
            atoms.append(Atom(rho_max, np.array([[-sign * at_end[p, k]]]), j))

    # mass of (r, start) as atoms at start, order p for the (i lam)^p coefficient
    near_nodes, near_weights = graded_rho_quadrature(r, start, settings)
    near = _map_rho(lambda rho: _surface_moments(integrand, rho, settings, 0)[:, 0], near_nodes)
    lumped = near_weights @ near
    for p in range(degree + 1):
        atoms.append(Atom(start, np.array([[(-1) ** p * lumped[p]]]), p))

    # zero-weight end nodes carry the support endpoints
    rho = np.concatenate([[start], nodes, [rho_max]])
    w = np.concatenate([[0.0], weights, [0.0]])
    edge_density = np.array([sum((-1) ** p * m[p, p] for p in range(degree + 1)) for m in (at_start, at_end)])
    density = np.concatenate([[edge_density[0]], density, [edge_density[1]]])
    kernel = RhoKernel(rho, w, density[:, None, None], frame.x[None, :], frame.z[None, :], np.ones(1),
                       _merge_atoms(atoms))
    logger.info("assembled %s at r=%.4g: %d rho nodes, %d atoms", part, r, len(rho), len(kernel.atoms))
    return kernel


def assemble_t_hat(part, A, V, A_sharp, V_sharp, frame, rho_max, settings=None):
    """
    rho-kernel of ``part`` (T1, T2, T3, T4, T or TTILDE) at the foci of ``frame``.

    ``A_sharp`` / ``V_sharp`` default to ``A`` / ``V`` and are evaluated at z.
    The result is a 1 x 1 RhoKernel on graded rho nodes over (r, rho_max];
    ``hat(kernel, lam)`` is the term at spectral parameter lam.
    """
    _check_part(part, T_PARTS)
    return _assemble(part, A, V, A_sharp, V_sharp, frame, rho_max, settings)


def assemble_dlambda_t(part, A, V, A_sharp, V_sharp, frame, rho_max, settings=None):
    """rho-kernel of one lam-derivative piece (T11, T12, TTILDE1 or TTILDE2)."""
    _check_part(part, DLAMBDA_PARTS)
    return _assemble(part, A, V, A_sharp, V_sharp, frame, rho_max, settings)


def _kernel_factor(kind, lam, first, second, potential):
    values = resolvent_kernel(kind, lam, first, second)
    if kind.is_vector:
        return np.sum(values * potential, axis=-1)
    return values


def _axial_slices(frame, rho_max, step, settings):
    """
    Cylindrical rule about the focal axis over the solid ellipsoid rho < rho_max.

    With R = b sin(beta) and the axial coordinate on the chord
    [-a cos(beta), a cos(beta)], the rule fills the ellipsoid exactly. Both
    beta (toward the axis) and the axial coordinate (toward each focus) are
    graded geometrically. Yields world points (n, m, 3) and weights (n, m),
    one beta node at a time.
    """
    r = frame.r
    a = rho_max / 2
    b = math.sqrt(rho_max ** 2 - r ** 2) / 2
    tiny = 1e-7 * r
    order = max(settings.gl_order, 10)
    half_pi = math.pi / 2
    n_beta = max(settings.radial_panels, int(math.ceil(b * half_pi / step)))
    beta_edges = merge_edges(np.linspace(0.0, half_pi, n_beta + 1),
                             geometric_edges(0.0, half_pi, tiny / b, settings.graded_panels),
                             lo=0.0, hi=half_pi)
    betas, beta_weights = panel_rule(beta_edges, order)
    phi, w_phi = trapezoid_circle(max(settings.phi_nodes, 32))
    for beta, w_beta in zip(betas, beta_weights):
        R = b * math.sin(beta)
        c = a * math.cos(beta)
        groups = [np.linspace(-c, c, max(settings.radial_panels, int(math.ceil(2 * c / step))) + 1)]
        for focus in (-r / 2, r / 2):
            if -c < focus < c:
                groups.append(focus - geometric_edges(0.0, focus + c, tiny, settings.graded_panels))
                groups.append(focus + geometric_edges(0.0, c - focus, tiny, settings.graded_panels))
        axial, w_axial = panel_rule(merge_edges(*groups, lo=-c, hi=c), order)
        local = np.stack(np.broadcast_arrays(axial[:, None], R * np.cos(phi)[None, :],
                                             R * np.sin(phi)[None, :]), axis=-1)
        weights = w_axial[:, None] * w_phi[None, :] * (w_beta * R * b * math.cos(beta))
        yield frame.to_world(local), weights


def direct_t_hat(part, A, V, A_sharp, V_sharp, frame, rho_max, lam, settings=None):
    """
    The term at ``lam`` integrated directly from the resolvent kernels over rho < rho_max.

    The y-integral runs on a cylindrical tensor rule about the focal axis,
    so it shares neither the ellipsoidal foliation nor the jets nor the
    distributional rho-derivatives with the assembled kernels it checks.
    """
    _check_part(part, T_PARTS + DLAMBDA_PARTS)
    _check_frame(frame)
    settings = get_settings(settings)
    A = A if A is not None else PotentialSpec.zero()
    V = V if V is not None else PotentialSpec.zero()
    A_sharp = A_sharp if A_sharp is not None else A
    V_sharp = V_sharp if V_sharp is not None else V
    a_sharp = A_sharp.evaluate(frame.z[None, :], 'vector')[:, 0]
    v_sharp = float(V_sharp.evaluate(frame.z[None, :], 'scalar')[0])
    widths = [t.width for spec in (A, V) for t in spec.all_terms()]
    step = min([1.0] + [w / 2 for w in widths])

    def f(y):
        a_y = np.moveaxis(A.evaluate(y, 'vector'), 0, -1)
        total = np.zeros(y.shape[:-1], dtype=complex)
        for left, middle, right, trailing in PRODUCTS[part]:
            term = (_kernel_factor(left, lam, frame.x, y, a_y)
                    * _kernel_factor(right, lam, y, frame.z, a_sharp))
            if middle == 'V':
                term = term * V.evaluate(y, 'scalar')
            total = total + (v_sharp * term if trailing else term)
        return total

    return complex(sum(np.sum(weights * f(points))
                       for points, weights in _axial_slices(frame, rho_max, step, settings)))


def kernel_mass(kernel):
    """int |T(rho)| drho plus the absolute weight of every atom, per (y, x) entry."""
    M = total_variation(kernel.like(kernel.density))
    for atom in kernel.atoms:
        M = M + np.abs(atom.matrix)
    return M


def bil_bound(report, sharp_report=None):
    """
    Sum of the seven norm products bounding T1 in the rho-algebra.

    ``report`` holds the norms of A and its derivatives, ``sharp_report``
    those of A# (default: A# = A). Missing norms raise MissingNormError.
    """
    sharp_report = report if sharp_report is None else sharp_report
    total = 0.0
    for (quantity, kind), (sharp_quantity, sharp_kind) in BIL_TERMS:
        total += report.get(quantity, kind) * sharp_report.get(sharp_quantity, sharp_kind)
    logger.debug("bilinear bound %.6g", total)
    return float(total)
