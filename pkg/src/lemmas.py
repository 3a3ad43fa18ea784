"""
Inequality harnesses for the auxiliary integral lemmas.

Each harness integrates both sides of one inequality for an analytic
potential and a pair of foci, and reports the ratio lhs / rhs. The lemmas
hold up to unspecified constants, so nothing here asserts a bound.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .ellipsoid import SurfacePoint
from .errors import ConfigurationError
from .fields import derivative_magnitude
from .norms import automatic_grid, kato_norms, llogl_norm, log_bracket
from .quadrature import geometric_edges, merge_edges, panel_rule, trapezoid_circle
from .settings import get_settings

logger = logging.getLogger(__name__)

LEMMAS = ('L1', 'L2', 'L2LOG', 'L3', 'L3LOG')

# radius of the cylinder in the logarithmic lemmas
LOG_CYLINDER_RADIUS = 1.0


@dataclass(frozen=True)
class LemmaResult:
    lemma: str
    lhs: float
    rhs: float

    @property
    def undefined(self):
        """Both sides vanish (0/0)."""
        return self.lhs == 0 and self.rhs == 0

    @property
    def ratio(self):
        if self.undefined:
            return float('nan')
        if self.rhs == 0:
            return float('inf')
        return self.lhs / self.rhs

    def to_dict(self):
        return {'lemma': self.lemma, 'lhs': self.lhs, 'rhs': self.rhs,
                'ratio': None if self.undefined else self.ratio, 'undefined': self.undefined}


def _part(spec):
    return 'vector' if spec.has_vector and not spec.scalar_terms else 'scalar'


def _magnitude(spec, points, order):
    return spec.derivative_magnitude_at(points, _part(spec), order)


def _span_edges(lo, hi, scale, min_panels):
    count = max(min_panels, int(math.ceil((hi - lo) / scale)))
    return np.linspace(lo, hi, count + 1)


def _local_terms(spec, frame):
    """(local center, extent, width) of every term."""
    out = []
    for bump in spec.terms(_part(spec)):
        if bump.amplitude != 0:
            out.append((frame.to_local(np.asarray(bump.center)), bump.extent, bump.width))
    return out


def _cylinder_point(frame, y1, R, phi):
    local = np.stack([y1, R * np.cos(phi), R * np.sin(phi)], axis=-1)
    return frame.to_world(local)


def _cylinder_grid(spec, frame, settings, r_cap=None, log_grade=False):
    """Product rule in (y1, R, phi) around the focal axis covering the spec."""
    terms = _local_terms(spec, frame)
    lo = min(c[0] - e for c, e, _ in terms)
    hi = max(c[0] + e for c, e, _ in terms)
    r_hi = max(np.hypot(c[1], c[2]) + e for c, e, _ in terms)
    width = min(w for _, _, w in terms)
    step = width / 2
    y_edges = merge_edges(_span_edges(lo, hi, step, settings.radial_panels),
                          [c[0] for c, _, _ in terms], lo=lo, hi=hi)
    if r_cap is not None:
        r_hi = min(r_hi, r_cap)
    r_edges = _span_edges(0.0, r_hi, step, settings.radial_panels)
    if log_grade:
        r_edges = merge_edges(geometric_edges(0.0, r_edges[1], r_edges[1] * 1e-8, settings.graded_panels),
                              r_edges, lo=0.0, hi=r_hi)
    y1, wy = panel_rule(y_edges, settings.gl_order)
    R, wr = panel_rule(r_edges, settings.gl_order)
    phi, wphi = trapezoid_circle(max(settings.phi_nodes, 4 * settings.radial_panels))
    Y1, RR, PP = np.meshgrid(y1, R, phi, indexing='ij')
    W = wy[:, None, None] * wr[None, :, None] * wphi[None, None, :]
    return Y1, RR, PP, W


def _lemma_1(spec, frame, settings):
    """int_{rho <= 2r} |f| / (r sqrt(rho^2 - r^2) sin theta) dy against ||f||_K2."""
    r = frame.r
    if r == 0:
        raise ConfigurationError("lemma L1 needs distinct foci")
    u_edges = np.linspace(0.0, math.acosh(2.0), settings.radial_panels + 1)
    u, wu = panel_rule(u_edges, settings.gl_order)
    # the sin(theta) of the weight cancels the one in J, so theta is integrated directly
    theta, wtheta = panel_rule(np.linspace(0.0, math.pi, 2 * settings.radial_panels + 1), settings.gl_order)
    phi, wphi = trapezoid_circle(settings.phi_nodes)
    U, TH, P = np.meshgrid(u, theta, phi, indexing='ij')
    rho = r * np.cosh(U)
    # the u = 0 node never occurs (Gauss nodes are interior)
    p = SurfacePoint(frame, rho, TH, P)
    values = spec.derivative_magnitude_at(p.y, _part(spec), 0)
    W = wu[:, None, None] * wtheta[None, :, None] * wphi[None, None, :]
    lhs = float(np.sum(W * values * (rho ** 2 - r ** 2 * np.cos(TH) ** 2) / r) / 8)
    grid = automatic_grid(spec)
    rhs = kato_norms(derivative_magnitude(spec, grid, 0, _part(spec)), ('K2',), settings)['K2']
    return lhs, rhs


def _lemma_2(spec, frame, settings, logarithmic=False):
    """int |f| / R dy (cylinder coordinates) against ||grad f||_1."""
    r_cap = LOG_CYLINDER_RADIUS if logarithmic else None
    Y1, RR, PP, W = _cylinder_grid(spec, frame, settings, r_cap=r_cap, log_grade=logarithmic)
    pts = _cylinder_point(frame, Y1, RR, PP)
    f = _magnitude(spec, pts, 0)
    grad = _magnitude(spec, pts, 1)
    if not logarithmic:
        lhs = float(np.sum(W * f))
        rhs = float(np.sum(W * grad * RR))
        return lhs, rhs
    lhs = float(np.sum(W * f * np.abs(np.log(RR))))
    # the gradient norms run over the whole space
    Y1f, Rf, Pf, Wf = _cylinder_grid(spec, frame, settings)
    grad_all = _magnitude(spec, _cylinder_point(frame, Y1f, Rf, Pf), 1)
    weights = Wf * Rf
    rhs = llogl_norm(grad_all, weights) + float(log_bracket(LOG_CYLINDER_RADIUS)) * float(np.sum(weights * grad_all))
    return lhs, rhs


def _ray_exit(theta, x1, lo, hi, R0):
    """Distance from x along direction theta to the boundary of the cylinder."""
    sin_t = np.sin(theta)
    cos_t = np.cos(theta)
    with np.errstate(divide='ignore'):
        side = np.where(sin_t > 0, R0 / np.where(sin_t > 0, sin_t, 1.0), np.inf)
        cap = np.where(cos_t > 0, (hi - x1) / np.where(cos_t > 0, cos_t, 1.0),
                       np.where(cos_t < 0, (lo - x1) / np.where(cos_t < 0, cos_t, 1.0), np.inf))
    return np.minimum(side, cap)


def _lemma_3(spec, frame, settings, logarithmic=False):
    """int |f| / (r1 R) dy (spherical coordinates at x) against int |grad f| / R dy."""
    terms = _local_terms(spec, frame)
    x_local = frame.to_local(frame.x)
    reach = max(np.linalg.norm(c - x_local) + e for c, e, _ in terms)
    width = min(w for _, _, w in terms)
    phi, wphi = trapezoid_circle(max(settings.phi_nodes, 4 * settings.radial_panels))
    theta_edges = _span_edges(0.0, np.pi, width / max(reach, width), 2 * settings.radial_panels)
    if logarithmic:
        first = theta_edges[1]
        theta_edges = merge_edges(geometric_edges(0.0, first, first * 1e-8, settings.graded_panels),
                                  np.pi - geometric_edges(0.0, first, first * 1e-8, settings.graded_panels),
                                  theta_edges, lo=0.0, hi=np.pi)
    theta, wt = panel_rule(theta_edges, settings.gl_order)

    lo = min(c[0] - e for c, e, _ in terms)
    hi = max(c[0] + e for c, e, _ in terms)
    lo, hi = min(lo, x_local[0] - width), max(hi, x_local[0] + width)
    if logarithmic:
        exits = _ray_exit(theta, x_local[0], lo, hi, LOG_CYLINDER_RADIUS)
    else:
        exits = np.full_like(theta, reach)

    base = np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])
    lhs = 0.0
    rhs = 0.0
    for th, w_th, r_exit in zip(theta, wt, exits):
        r_exit = min(r_exit, reach)
        edges = _span_edges(0.0, r_exit, width / 2, settings.radial_panels)
        if logarithmic:
            edges = merge_edges(geometric_edges(0.0, edges[1], edges[1] * 1e-8, settings.graded_panels),
                                edges, lo=0.0, hi=r_exit)
        r1, wr = panel_rule(edges, settings.gl_order)
        direction = (np.cos(th) * np.array([1.0, 0.0, 0.0])[None, :]
                     + np.sin(th) * (np.cos(phi)[:, None] * base[0] + np.sin(phi)[:, None] * base[1]))
        local = x_local + r1[:, None, None] * direction[None, :, :]
        pts = frame.to_world(local)
        f = _magnitude(spec, pts, 0)
        grad = _magnitude(spec, pts, 1)
        W = w_th * wr[:, None] * wphi[None, :]
        if logarithmic:
            R = r1[:, None] * np.sin(th)
            logR = np.abs(np.log(R))
            lhs += float(np.sum(W * f * logR))
            rhs += float(np.sum(W * grad * r1[:, None] * (logR + log_bracket(LOG_CYLINDER_RADIUS))))
        else:
            lhs += float(np.sum(W * f))
            rhs += float(np.sum(W * grad * r1[:, None]))
    return lhs, rhs


def lemma_harness(lemma_id, f, frame, settings=None):
    """
    Both sides of one auxiliary lemma for the potential ``f`` and foci ``frame``.

    L2 / L3 (and their logarithmic variants) need first derivatives, so ball
    indicators are rejected.
    """
    settings = get_settings(settings)
    if lemma_id not in LEMMAS:
        raise ConfigurationError(f"Unknown lemma: {lemma_id}; available lemmas: {list(LEMMAS)}")
    if lemma_id != 'L1':
        f.check_order(_part(f), 1)
    if not _local_terms(f, frame):
        return LemmaResult(lemma_id, 0.0, 0.0)
    if lemma_id == 'L1':
        lhs, rhs = _lemma_1(f, frame, settings)
    elif lemma_id in ('L2', 'L2LOG'):
        lhs, rhs = _lemma_2(f, frame, settings, logarithmic=lemma_id == 'L2LOG')
    else:
        lhs, rhs = _lemma_3(f, frame, settings, logarithmic=lemma_id == 'L3LOG')
    result = LemmaResult(lemma_id, lhs, rhs)
    logger.info("lemma %s: lhs=%.6g rhs=%.6g ratio=%.4g", lemma_id, lhs, rhs, result.ratio)
    return result
