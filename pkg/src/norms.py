"""
Function-space norms of sampled fields.

Kato-type norms sup_y int |f(x)| w(|x - y|) dx are computed in two stages: a
linear FFT convolution on the grid gives coarse values at every node, then
the best candidates are refined by Nelder-Mead on an analytic re-evaluation
of the field with y-centered spherical quadrature.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.integrate import quad
from scipy.optimize import brentq, minimize
from scipy.special import xlogy

from .errors import ConfigurationError, InvalidFieldError, MissingNormError, UnsupportedDerivativeError
from .fields import Grid3D, ScalarField, VectorField, build_field, derivative_magnitude
from .quadrature import merge_edges, panel_rule, trapezoid_circle
from .settings import get_settings, worker_count

logger = logging.getLogger(__name__)

KATO_KINDS = ('K', 'K_LOG', 'K2', 'K2_LOG', 'K2_LOG2')
NORM_KINDS = KATO_KINDS + ('L_LOG_L', 'L1', 'L32_1', 'L3_1', 'W21_DOT', 'KSTAR_SURR', 'KLOGSTAR_SURR')

# norms entering the spaces X (for A and its derivatives) and Y (for V)
X_QUANTITIES = {
    'A': ('K2_LOG2', 'K_LOG', 'L3_1', 'L32_1'),
    'grad_A': ('K_LOG', 'K2_LOG2', 'L32_1'),
    'grad2_A': ('K2_LOG2', 'L1'),
    'grad3_A': ('L_LOG_L',),
    'grad4_A': ('L_LOG_L',),
}
Y_QUANTITIES = {
    'V': ('W21_DOT', 'K_LOG', 'L32_1'),
}


def log_bracket(t):
    """<log t> = sqrt(1 + log(t)^2)."""
    return np.sqrt(1.0 + np.log(t) ** 2)


def kato_weight(kind, t):
    """Kernel w(t) of a Kato-type norm."""
    t = np.asarray(t, dtype=float)
    if kind == 'K':
        return 1.0 / t
    if kind == 'K_LOG':
        return log_bracket(t) / t
    if kind == 'K2':
        return 1.0 / t ** 2
    if kind == 'K2_LOG':
        return log_bracket(t) / t ** 2
    if kind == 'K2_LOG2':
        return log_bracket(t) ** 2 / t ** 2
    raise ConfigurationError(f"Unknown Kato kind: {kind}; available kinds: {list(KATO_KINDS)}")


def _ball_mass(kind, a):
    """int over the ball |t| < a of w(|t|), i.e. 4 pi int_0^a t^2 w(t) dt."""
    if kind == 'K':
        return 2 * np.pi * a ** 2
    if kind == 'K2':
        return 4 * np.pi * a
    value, _ = quad(lambda t: t ** 2 * kato_weight(kind, t), 0.0, a, limit=200)
    return 4 * np.pi * value


def _check_values(field):
    if not isinstance(field, (ScalarField, VectorField)):
        raise InvalidFieldError(f"Expected a ScalarField or VectorField, got {type(field).__name__}")
    field.check_finite()
    return field.abs()


def coarse_kato(values, grid, kinds):
    """
    Grid values of int |f(x)| w(|x - y|) dx at every node y.

    The self cell is replaced by a ball of volume h^3 over which w is
    integrated exactly.
    """
    n, h = grid.n, grid.h
    off = np.arange(2 * n)
    off = np.where(off < n, off, off - 2 * n) * h
    ox, oy, oz = np.meshgrid(off, off, off, indexing='ij')
    dist = np.sqrt(ox ** 2 + oy ** 2 + oz ** 2)
    dist[0, 0, 0] = 1.0
    a = (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0) * h
    workers = worker_count()
    f_hat = fft.rfftn(values, s=(2 * n,) * 3, workers=workers)
    out = {}
    for kind in kinds:
        kernel = kato_weight(kind, dist)
        kernel[0, 0, 0] = _ball_mass(kind, a) / h ** 3
        conv = fft.irfftn(f_hat * fft.rfftn(kernel, workers=workers), s=(2 * n,) * 3, workers=workers)
        out[kind] = conv[:n, :n, :n] * h ** 3
    return out


def _orthonormal_axes(axis):
    e3 = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, e3) * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return e1, e2, e3


def _cos_edges(t, d, bump, scale):
    """Breakpoints in u = cos(angle to the bump center) on the shell of radius t."""
    edges = [-1.0, 1.0]
    if d <= 1e-12 * scale or t <= 0:
        return edges
    # the shell leaves the bump support (the ball surface for indicators) at u0
    u0 = (t ** 2 + d ** 2 - bump.extent ** 2) / (2 * t * d)
    if -1.0 < u0 < 1.0:
        edges.append(u0)
    if bump.kind == 'gaussian':
        s_u = bump.width ** 2 / (2 * t * d)
        step = s_u
        while step < 2.0:
            edges.append(1.0 - step)
            step *= 4.0
    return merge_edges(edges, lo=-1.0, hi=1.0)


def shell_integrals(source, y, settings=None):
    """
    int |f(x)| w(|x - y|) dx for every Kato kind, by y-centered spherical quadrature.

    The polar axis points at the first term's center; radial panels are
    graded toward y and broken at the distances where terms begin and end.
    """
    settings = get_settings(settings)
    y = np.asarray(y, dtype=float)
    terms = [b for b in source.terms if b.amplitude != 0]
    if not terms:
        return {kind: 0.0 for kind in KATO_KINDS}

    dists = [float(np.linalg.norm(np.asarray(b.center) - y)) for b in terms]
    reach = max(d + b.extent for d, b in zip(dists, terms))
    breaks = []
    for d, b in zip(dists, terms):
        if b.kind == 'ball-indicator':
            breaks += [abs(d - b.width), d + b.width]
        else:
            breaks += [max(d - b.extent, 0.0), d, d + b.extent]
    g = reach / settings.radial_panels
    inner = np.concatenate([[0.0], np.geomspace(reach * 1e-6, g, settings.graded_panels + 1)])
    edges = merge_edges(inner, np.linspace(g, reach, settings.radial_panels + 1), breaks,
                        lo=0.0, hi=reach, min_gap=reach * 1e-9)
    radii, r_weights = panel_rule(edges, settings.gl_order)

    lead, lead_d = terms[0], dists[0]
    axis = np.asarray(lead.center) - y if lead_d > 1e-12 * lead.width else np.array([0.0, 0.0, 1.0])
    e1, e2, e3 = _orthonormal_axes(axis)
    phi, w_phi = trapezoid_circle(settings.phi_nodes)
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)

    blocks, block_w, owner = [], [], []
    for i, t in enumerate(radii):
        u, w_u = panel_rule(_cos_edges(t, lead_d, lead, lead.width), settings.gl_order)
        s = np.sqrt(np.clip(1.0 - u ** 2, 0.0, None))
        direction = (u[:, None, None] * e3
                     + s[:, None, None] * (cos_phi[None, :, None] * e1 + sin_phi[None, :, None] * e2))
        blocks.append((y + t * direction).reshape(-1, 3))
        block_w.append((w_u[:, None] * w_phi[None, :]).ravel())
        owner.append(np.full(len(u) * len(phi), i))
    points = np.concatenate(blocks)
    weights = np.concatenate(block_w)
    owner = np.concatenate(owner)
    values = source.magnitude(points)
    spherical = np.bincount(owner, weights=weights * values, minlength=len(radii))

    out = {}
    for kind in KATO_KINDS:
        radial = radii ** 2 * kato_weight(kind, radii)
        out[kind] = float(np.sum(r_weights * radial * spherical))
    return out


def _top_candidates(coarse, grid, stride, count):
    sub = coarse[::stride, ::stride, ::stride]
    flat = np.argsort(sub.ravel())[::-1][:count]
    idx = np.array(np.unravel_index(flat, sub.shape)).T * stride
    return [grid.axis[i] for i in idx]


def kato_norms(field, kinds=KATO_KINDS, settings=None):
    """Kato-type norms of ``field`` for each of ``kinds`` (dict kind -> value)."""
    settings = get_settings(settings)
    for kind in kinds:
        kato_weight(kind, 1.0)
    values = _check_values(field)
    if not np.any(values):
        return {kind: 0.0 for kind in kinds}
    grid = field.grid
    coarse = coarse_kato(values, grid, kinds)
    source = field.source
    if source is None:
        return {kind: float(coarse[kind].max()) for kind in kinds}

    seen = {}

    def evaluate(y):
        key = tuple(np.round(y, 12))
        if key not in seen:
            seen[key] = shell_integrals(source, y, settings)
        return seen[key]

    for kind in kinds:
        scale = float(coarse[kind].max()) or 1.0
        for start in _top_candidates(coarse[kind], grid, settings.candidate_stride,
                                     settings.n_candidates):
            simplex = start + grid.h * np.vstack([np.zeros(3), np.eye(3)])
            minimize(lambda y: -evaluate(y)[kind] / scale, start, method='Nelder-Mead',
                     options={'initial_simplex': simplex, 'maxfev': settings.refine_maxfev,
                              'xatol': grid.h * 1e-3, 'fatol': 1e-7})
    result = {kind: max(v[kind] for v in seen.values()) for kind in kinds}
    logger.debug("Kato norms after %d refined evaluations: %s", len(seen), result)
    return result


def lorentz_norm(values, cell_volume, p):
    """L^{p,1} norm p * int_0^inf |{|f| > s}|^{1/p} ds from the sample histogram."""
    v = np.sort(np.abs(np.asarray(values)).ravel())[::-1]
    v = v[v > 0]
    if v.size == 0:
        return 0.0
    k = np.arange(1, v.size + 1)
    drops = v - np.append(v[1:], 0.0)
    return float(p * np.sum(drops * (k * cell_volume) ** (1.0 / p)))


def _young(t):
    return xlogy(t, t) - t


def llogl_norm(values, weights):
    """||f||_1 + inf{c > 0 : int Phi(|f| / c) <= 1} with Phi(t) = t log t - t."""
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    w = np.broadcast_to(np.asarray(weights, dtype=float), np.asarray(values).shape).ravel()
    l1 = float(np.sum(w * a))
    if l1 == 0:
        return 0.0

    def excess(c):
        return float(np.sum(w * _young(a / c))) - 1.0

    hi = float(a.max())
    lo = hi / 2
    for _ in range(400):
        if excess(lo) > 0:
            break
        hi, lo = lo, lo / 2
    else:
        raise InvalidFieldError("L log L scale search did not bracket a root")
    c = brentq(excess, lo, hi, xtol=1e-14 * hi, rtol=1e-12)
    return l1 + c


def llogl_modular(values, weights):
    """int |f| <log |f|>."""
    a = np.abs(np.asarray(values, dtype=float))
    mask = a > 0
    out = np.zeros_like(a)
    out[mask] = a[mask] * log_bracket(a[mask])
    return float(np.sum(np.broadcast_to(weights, a.shape) * out))


def _hessian_magnitude(field):
    """Frobenius norm of the second derivative tensor, exact when the source allows it."""
    grid = field.grid
    source = field.source
    if source is not None:
        if source.smoothness < 2:
            raise UnsupportedDerivativeError(
                "second derivatives are not available for "
                f"{sorted({b.kind for b in source.terms})} terms")
        if source.order is None and sum(source.alpha) == 0:
            spec = source.spec
            if source.part == 'vector' and source.component is not None:
                return spec.component(source.component).derivative_magnitude_at(grid.points(), 'scalar', 2)
            return spec.derivative_magnitude_at(grid.points(), source.part, 2)
    comps = field.values[None] if isinstance(field, ScalarField) else field.values
    k = grid.k_vectors()
    workers = worker_count()
    total = np.zeros(grid.shape)
    for comp in comps:
        f_hat = fft.fftn(comp, workers=workers)
        for i in range(3):
            for j in range(i, 3):
                d2 = fft.ifftn(-k[i] * k[j] * f_hat, workers=workers)
                total += (1 if i == j else 2) * np.abs(d2) ** 2
    return np.sqrt(total)


def pole_surrogate(field, logarithmic=False, settings=None):
    """
    min over poles x0 of sup_x |f(x)| |x - x0| (divided by <log |x - x0|> when logarithmic).

    Upper bound on the dual Kato norm of ``field``.
    """
    settings = get_settings(settings)
    values = _check_values(field).ravel()
    if not np.any(values):
        return 0.0
    grid = field.grid
    keep = values > 1e-12 * values.max()
    pts = grid.points().reshape(-1, 3)[keep]
    vals = values[keep]

    def objective(x0):
        d = np.linalg.norm(pts - x0, axis=-1)
        weight = d
        if logarithmic:
            weight = np.where(d > 0, d / log_bracket(np.where(d > 0, d, 1.0)), 0.0)
        return float(np.max(vals * weight))

    stride = settings.candidate_stride
    ax = grid.axis[::stride]
    cand = np.stack(np.meshgrid(ax, ax, ax, indexing='ij'), axis=-1).reshape(-1, 3)
    scores = np.array([objective(c) for c in cand])
    best = float(scores.min())
    for start in cand[np.argsort(scores)[:settings.n_candidates]]:
        res = minimize(objective, start, method='Nelder-Mead',
                       options={'maxfev': settings.refine_maxfev, 'xatol': grid.h * 1e-3,
                                'initial_simplex': start + grid.h * np.vstack([np.zeros(3), np.eye(3)])})
        best = min(best, float(res.fun))
    return best


def lp_norm(field, p):
    values = _check_values(field)
    if np.isinf(p):
        return float(values.max())
    return float(np.sum(values ** p) * field.grid.cell_volume) ** (1.0 / p)


def dyadic_norm(field):
    """sum_j 2^j sup over the j-th dyadic shell around the origin of |f|."""
    values = _check_values(field)
    r = field.grid.radius()
    total = 0.0
    j = 0
    inner = 0.0
    while inner <= r.max():
        outer = 2.0 ** j
        shell = (r < outer) if j == 0 else ((r >= inner) & (r < outer))
        if shell.any():
            total += outer * float(values[shell].max())
        inner = outer
        j += 1
    return total


def space_norm(field, kind, settings=None):
    """Norm of ``kind`` (see NORM_KINDS) of a sampled field."""
    if kind not in NORM_KINDS:
        raise ConfigurationError(f"Unknown norm kind: {kind}; available kinds: {list(NORM_KINDS)}")
    if kind in KATO_KINDS:
        return kato_norms(field, (kind,), settings)[kind]
    values = _check_values(field)
    cell = field.grid.cell_volume
    if kind == 'L1':
        return float(values.sum() * cell)
    if kind == 'L32_1':
        return lorentz_norm(values, cell, 1.5)
    if kind == 'L3_1':
        return lorentz_norm(values, cell, 3.0)
    if kind == 'L_LOG_L':
        return llogl_norm(values, cell)
    if kind == 'W21_DOT':
        return float(_hessian_magnitude(field).sum() * cell)
    if kind == 'KSTAR_SURR':
        return pole_surrogate(field, False, settings)
    return pole_surrogate(field, True, settings)


def space_norms(field, kinds, settings=None):
    """Several norms of one field; Kato kinds share one sup search."""
    kato = [k for k in kinds if k in KATO_KINDS]
    out = kato_norms(field, tuple(kato), settings) if kato else {}
    for kind in kinds:
        if kind not in out:
            out[kind] = space_norm(field, kind, settings)
    return {kind: out[kind] for kind in kinds}


@dataclass
class NormReport:
    """Norm values per quantity ('A', 'grad_A', ..., 'V') and kind."""

    values: dict
    member_x: bool
    member_y: bool
    grid: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def get(self, quantity, kind):
        try:
            return self.values[quantity][kind]
        except KeyError:
            raise MissingNormError(f"norm {kind} of {quantity} is not in the report") from None

    def to_dict(self):
        return {
            'values': {q: dict(v) for q, v in self.values.items()},
            'member_x': self.member_x,
            'member_y': self.member_y,
            'grid': self.grid,
            'settings': self.settings,
        }


def _finite(values):
    return all(np.isfinite(v) for v in values.values())


def membership_report(A, V, grid, settings=None, quantities=None):
    """
    Every norm entering X (for A, up to four derivatives) and Y (for V).

    Membership is all-finite. ``quantities`` restricts the computation to a
    subset of X_QUANTITIES / Y_QUANTITIES keys.
    """
    settings = get_settings(settings)
    wanted = dict(X_QUANTITIES, **Y_QUANTITIES)
    if quantities is not None:
        wanted = {q: wanted[q] for q in quantities}
    A.check_order('vector', 4)
    V.check_order('scalar', 2)
    values = {}
    for order, name in enumerate(('A', 'grad_A', 'grad2_A', 'grad3_A', 'grad4_A')):
        if name in wanted:
            mag = derivative_magnitude(A, grid, order, part='vector')
            values[name] = space_norms(mag, wanted[name], settings)
            logger.info("%s: %s", name, values[name])
    if 'V' in wanted:
        values['V'] = space_norms(build_field(V, grid, part='scalar'), wanted['V'], settings)
        logger.info("V: %s", values['V'])
    member_x = all(_finite(values[q]) for q in X_QUANTITIES if q in values)
    member_y = all(_finite(values[q]) for q in Y_QUANTITIES if q in values)
    return NormReport(values, member_x, member_y, grid.info(), settings.info())


def norm_chain_check(A, grid, settings=None):
    """(||A||_K2, ||grad A||_K, ||grad^2 A||_L1); the chain v1 <= v2 <= v3 holds analytically."""
    part = 'vector' if A.has_vector else 'scalar'
    A.check_order(part, 2)
    v1 = kato_norms(derivative_magnitude(A, grid, 0, part), ('K2',), settings)['K2']
    v2 = kato_norms(derivative_magnitude(A, grid, 1, part), ('K',), settings)['K']
    v3 = space_norm(derivative_magnitude(A, grid, 2, part), 'L1', settings)
    return v1, v2, v3


def automatic_grid(spec, n=32, margin=1.25):
    """Grid covering every term of ``spec`` with some margin."""
    radius = max(spec.support_radius(), 1e-3)
    return Grid3D(n, 2 * margin * radius)
