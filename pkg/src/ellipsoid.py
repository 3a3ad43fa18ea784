"""
Rotation ellipsoids r1 + r2 = rho with foci x, z.

Points are parametrized by (rho, theta, phi); quadratures run in
t = cos(theta), where the surface element J dtheta becomes
(rho^2 - r^2 t^2) dt. Volume integrals use dy = J dtheta dphi drho / 8.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEllipsoidError
from .quadrature import adaptive_panels, geometric_edges, merge_edges, panel_rule, trapezoid_circle
from .settings import get_settings

logger = logging.getLogger(__name__)

# rho-panels start this far above the focal distance
DEGENERATE_BAND = 1e-8


class EllipsoidFrame:
    """Foci x and z, midpoint o and a rotation taking z - x to the first axis."""

    def __init__(self, x, z):
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.o = 0.5 * (self.x + self.z)
        self.r = float(np.linalg.norm(self.z - self.x))
        if self.r == 0:
            self.rotation = np.eye(3)
        else:
            first = (self.z - self.x) / self.r
            rows = [first]
            for e in np.eye(3):
                v = e - sum(np.dot(e, q) * q for q in rows)
                if np.linalg.norm(v) > 1e-8 and len(rows) < 3:
                    rows.append(v / np.linalg.norm(v))
            self.rotation = np.array(rows)

    def to_world(self, local):
        """Frame coordinates (..., 3) to world coordinates."""
        return self.o + np.asarray(local) @ self.rotation

    def to_local(self, world):
        return (np.asarray(world) - self.o) @ self.rotation.T

    def vector_to_world(self, local):
        return np.asarray(local) @ self.rotation

    def dilated(self, s):
        return EllipsoidFrame(s * self.x, s * self.z)

    def check(self, rho):
        if np.any(np.asarray(rho) <= self.r):
            raise DegenerateEllipsoidError(
                f"rho must exceed the focal distance r = {self.r}, got {np.min(rho)}")

    def __repr__(self):
        return f"EllipsoidFrame(x={self.x.tolist()}, z={self.z.tolist()}, r={self.r:g})"


@dataclass
class SurfacePoint:
    """
    Point(s) of the ellipsoid Sigma_rho; every array field broadcasts together.

    ``y_local`` and ``v_local`` are frame coordinates, ``y`` and ``v`` world ones.
    """

    frame: EllipsoidFrame
    rho: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        rho, theta, phi = np.broadcast_arrays(np.asarray(self.rho, dtype=float),
                                              np.asarray(self.theta, dtype=float),
                                              np.asarray(self.phi, dtype=float))
        self.rho, self.theta, self.phi = rho, theta, phi
        r = self.frame.r
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        cos_p, sin_p = np.cos(phi), np.sin(phi)
        s = np.sqrt(rho ** 2 - r ** 2)
        self.a = rho / 2
        self.b = s / 2
        self.y_local = np.stack([self.a * cos_t, self.b * sin_t * cos_p, self.b * sin_t * sin_p], axis=-1)
        self.y = self.frame.to_world(self.y_local)
        self.r1 = (rho + r * cos_t) / 2
        self.r2 = (rho - r * cos_t) / 2
        self.J = (rho ** 2 - r ** 2 * cos_t ** 2) * sin_t
        self.R = self.b * sin_t
        self.v_local = np.stack([cos_t / 2, rho * sin_t * cos_p / (2 * s), rho * sin_t * sin_p / (2 * s)],
                                axis=-1)
        self.v = self.frame.vector_to_world(self.v_local)
        dv = -r ** 2 * sin_t / (2 * s ** 3)
        self.dv_local = np.stack([np.zeros_like(rho), dv * cos_p, dv * sin_p], axis=-1)
        self.dv = self.frame.vector_to_world(self.dv_local)

    @property
    def r1_vec(self):
        """y - x."""
        return self.y - self.frame.x

    @property
    def r2_vec(self):
        """y - z."""
        return self.y - self.frame.z


def elliptical_map(frame, rho, theta, phi):
    """SurfacePoint at (rho, theta, phi); raises for rho <= r."""
    frame.check(rho)
    return SurfacePoint(frame, rho, theta, phi)


def _on_surface(values, point):
    """Broadcast integrand values (possibly constant) to the node array."""
    values = np.asarray(values)
    if values.ndim < point.rho.ndim:
        values = np.broadcast_to(values, point.rho.shape)
    return values


def _t_edges(frame, rho, settings):
    """Panels in t = cos(theta), graded toward the poles for thin ellipsoids."""
    if frame.r == 0:
        return np.linspace(-1.0, 1.0, 5)
    delta = (rho - frame.r) / frame.r
    edges = [-1.0, 0.0, 1.0]
    step = delta
    while step < 0.5:
        edges += [-1.0 + step, 1.0 - step]
        step *= 4.0
    return merge_edges(edges, lo=-1.0, hi=1.0)


def surface_integral(frame, rho, f, settings=None):
    """
    int_0^pi int_0^{2pi} f J dphi dtheta over Sigma_rho.

    ``f`` maps a vectorized SurfacePoint to values (scalar or with trailing
    component axes); adaptive Gauss-Legendre in t, trapezoid in phi.
    """
    settings = get_settings(settings)
    frame.check(rho)
    r = frame.r
    phi, w_phi = trapezoid_circle(settings.phi_nodes)

    def integrand(t):
        theta = np.arccos(np.clip(t, -1.0, 1.0))
        point = SurfacePoint(frame, rho, theta[:, None], phi[None, :])
        values = _on_surface(f(point), point)
        jac = (rho ** 2 - r ** 2 * t ** 2)[:, None]
        jac = jac.reshape(jac.shape + (1,) * (values.ndim - 2))
        weights = w_phi.reshape((1, -1) + (1,) * (values.ndim - 2))
        return np.sum(values * jac * weights, axis=1)

    value, _ = adaptive_panels(integrand, _t_edges(frame, rho, settings), settings.gl_order,
                               settings.adaptive_tol, max_iter=settings.adaptive_max_iter)
    return value


def d_rho_surface_integral(frame, rho, f, df, settings=None):
    """
    Derivative in rho of ``surface_integral`` by the differentiation formula.

    ``df`` is the derivative of f along the flow y(rho); the integrand is
    df J + 2 rho f sin(theta), i.e. df + (1/(2 r1) + 1/(2 r2)) f against J.
    """
    settings = get_settings(settings)
    frame.check(rho)
    r = frame.r
    phi, w_phi = trapezoid_circle(settings.phi_nodes)

    def integrand(t):
        theta = np.arccos(np.clip(t, -1.0, 1.0))
        point = SurfacePoint(frame, rho, theta[:, None], phi[None, :])
        fv = _on_surface(f(point), point)
        dv = _on_surface(df(point), point)
        shape = (1,) * (fv.ndim - 2)
        jac = (rho ** 2 - r ** 2 * t ** 2)[:, None].reshape((-1, 1) + shape)
        weights = w_phi.reshape((1, -1) + shape)
        return np.sum((dv * jac + 2 * rho * fv) * weights, axis=1)

    value, _ = adaptive_panels(integrand, _t_edges(frame, rho, settings), settings.gl_order,
                               settings.adaptive_tol, max_iter=settings.adaptive_max_iter)
    return value


def graded_rho_edges(r, rho_max, settings=None):
    """rho-panel edges on [r(1 + band), rho_max], graded geometrically toward r."""
    settings = get_settings(settings)
    start = r * (1 + DEGENERATE_BAND) if r > 0 else 0.0
    if rho_max <= start:
        raise DegenerateEllipsoidError(f"rho_max = {rho_max} does not exceed r = {r}")
    if r == 0:
        return np.linspace(0.0, rho_max, settings.radial_panels + 1)
    near = min(rho_max, 2 * r)
    graded = geometric_edges(start, near, r * 1e-6, settings.graded_panels)
    far = np.linspace(near, rho_max, settings.radial_panels + 1) if rho_max > near else []
    return merge_edges(graded, far, lo=start, hi=rho_max)


def graded_rho_quadrature(r, rho_max, settings=None):
    """Nodes and weights of the composite rule on ``graded_rho_edges``."""
    settings = get_settings(settings)
    return panel_rule(graded_rho_edges(r, rho_max, settings), settings.gl_order)


def foliated_integral(frame, f, rho_max, settings=None):
    """
    int f over the region rho < rho_max, foliated by ellipsoids.

    ``f`` maps world points (..., 3) to values.
    """
    settings = get_settings(settings)

    def surface(rho_nodes):
        return np.array([surface_integral(frame, rho, lambda p: f(p.y), settings)
                         for rho in rho_nodes])

    value, err = adaptive_panels(surface, graded_rho_edges(frame.r, rho_max, settings),
                                 settings.gl_order, settings.adaptive_tol,
                                 max_iter=settings.adaptive_max_iter)
    logger.debug("foliated integral %.10g (error %.2e)", value / 8, err / 8)
    return value / 8


def coordinate_identity_residuals(frame, rho, settings=None):
    """
    Largest violation of each coordinate identity over the surface nodes of Sigma_rho.

    Inequalities report max(0, lhs - rhs).
    """
    settings = get_settings(settings)
    frame.check(rho)
    r = frame.r
    t, _ = panel_rule(_t_edges(frame, rho, settings), settings.gl_order)
    theta = np.arccos(t)
    phi, _ = trapezoid_circle(settings.phi_nodes)
    p = SurfacePoint(frame, rho, theta[:, None], phi[None, :])
    sin_t = np.sin(p.theta)
    cos_t = np.cos(p.theta)
    scale = max(rho, 1.0)

    def worst(values):
        return float(np.max(np.abs(values)))

    return {
        'r1_plus_r2': worst(p.r1 + p.r2 - rho),
        'r1_minus_r2': worst(p.r1 - p.r2 - r * cos_t),
        'jacobian': worst(p.J - 4 * p.r1 * p.r2 * sin_t) / scale ** 2,
        'distance_x': worst(np.linalg.norm(p.r1_vec, axis=-1) - p.r1) / scale,
        'distance_z': worst(np.linalg.norm(p.r2_vec, axis=-1) - p.r2) / scale,
        'norm_y': worst(np.linalg.norm(p.y - frame.o, axis=-1)
                        - 0.5 * np.sqrt(rho ** 2 - r ** 2 * sin_t ** 2)) / scale,
        'd_rho_r1': worst(np.sum(p.r1_vec * p.v, axis=-1) / p.r1 - 0.5),
        'd_rho_r2': worst(np.sum(p.r2_vec * p.v, axis=-1) / p.r2 - 0.5),
        'dif_factor': worst((2 * rho / (rho ** 2 - r ** 2 * cos_t ** 2)
                             - 1 / (2 * p.r1) - 1 / (2 * p.r2)) * np.minimum(p.r1, p.r2)),
        'cylinder_radius': worst(np.sqrt(rho ** 2 - r ** 2) * sin_t - 2 * p.R) / scale,
        'rho_sin_bound': float(np.max(np.maximum(0.0, rho * sin_t - 2 * np.sqrt(p.r1 * p.r2)))),
        'radius_bound': float(np.max(np.maximum(0.0, 2 * p.R - 2 * np.minimum(p.r1, p.r2)))),
    }
