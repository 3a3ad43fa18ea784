"""
Gauss-Legendre panel rules shared by the norm, ellipsoid and assembly code.

Integrands are vectorized: ``fun(nodes)`` receives a 1-D array of nodes and
returns an array whose first axis runs over the nodes (trailing axes are
integrated componentwise).
"""

import logging
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def gauss_legendre(order):
    """Nodes and weights of the ``order``-point rule on [-1, 1]."""
    nodes, weights = leggauss(int(order))
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def panel_rule(edges, order):
    """Composite Gauss-Legendre rule over consecutive ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) / 2 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def trapezoid_circle(n):
    """Equispaced periodic rule on [0, 2pi)."""
    phi = 2 * np.pi * np.arange(n) / n
    return phi, np.full(n, 2 * np.pi / n)


def geometric_edges(a, b, first, n_panels):
    """
    Edges on [a, b] refined geometrically toward ``a``.

    The first panel has width ``first``; the remaining ``n_panels - 1`` grow
    by a constant ratio until ``b`` is reached.
    """
    length = b - a
    if length <= 0:
        return np.array([a, b], dtype=float)
    first = min(first, length)
    if n_panels <= 1 or first >= length:
        return np.array([a, b], dtype=float)
    offsets = np.geomspace(first, length, n_panels)
    return np.concatenate([[a], a + offsets])


def merge_edges(*groups, lo, hi, min_gap=0.0):
    """Sorted union of breakpoints clipped to [lo, hi]."""
    pts = np.concatenate([np.atleast_1d(np.asarray(g, dtype=float)) for g in groups] + [[lo, hi]])
    pts = np.unique(np.clip(pts, lo, hi))
    if min_gap > 0 and len(pts) > 2:
        keep = [pts[0]]
        for p in pts[1:-1]:
            if p - keep[-1] > min_gap:
                keep.append(p)
        if pts[-1] - keep[-1] <= min_gap and len(keep) > 1:
            keep.pop()
        keep.append(pts[-1])
        pts = np.asarray(keep)
    return pts


def _panel_integrals(fun, a, b, order):
    """Gauss-Legendre value of ``fun`` over each interval [a_i, b_i]."""
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    values = np.asarray(fun(nodes.ravel()))
    values = values.reshape((len(a), order) + values.shape[1:])
    weights = (half[:, None] * w[None, :]).reshape((len(a), order) + (1,) * (values.ndim - 2))
    return (values * weights).sum(axis=1)


def adaptive_panels(fun, edges, order=12, tol=1e-9, atol=1e-14, max_iter=40):
    """
    Adaptive composite Gauss-Legendre quadrature.

    Every leaf keeps its one-panel value and the sum over its two halves; the
    difference is the leaf error. Leaves whose error exceeds their share of
    the tolerance are bisected until the summed error drops below
    ``max(tol * |integral|, atol)``.

    Returns ``(value, error_estimate)``.
    """
    edges = np.asarray(edges, dtype=float)
    a = edges[:-1].copy()
    b = edges[1:].copy()
    m = 0.5 * (a + b)
    whole = _panel_integrals(fun, a, b, order)
    halves = _panel_integrals(fun, np.concatenate([a, m]), np.concatenate([m, b]), order)
    left, right = halves[:len(a)], halves[len(a):]

    for sweep in range(max_iter + 1):
        refined = left + right
        err = np.abs(whole - refined)
        if err.ndim > 1:
            err = err.reshape(len(a), -1).max(axis=1)
        total = refined.sum(axis=0)
        scale = float(np.max(np.abs(total))) if np.ndim(total) else abs(total)
        bound = max(tol * scale, atol)
        if err.sum() <= bound:
            return total, float(err.sum())
        if sweep == max_iter:
            break
        split = err > bound / len(a)
        if not split.any():
            split = err == err.max()

        keep = ~split
        sa, sb, sm = a[split], b[split], m[split]
        # children reuse the parent's halves as their one-panel values
        ca = np.concatenate([sa, sm])
        cb = np.concatenate([sm, sb])
        cm = 0.5 * (ca + cb)
        c_whole = np.concatenate([left[split], right[split]])
        c_halves = _panel_integrals(fun, np.concatenate([ca, cm]), np.concatenate([cm, cb]), order)
        c_left, c_right = c_halves[:len(ca)], c_halves[len(ca):]

        a = np.concatenate([a[keep], ca])
        b = np.concatenate([b[keep], cb])
        m = 0.5 * (a + b)
        whole = np.concatenate([whole[keep], c_whole])
        left = np.concatenate([left[keep], c_left])
        right = np.concatenate([right[keep], c_right])

    logger.warning("Adaptive quadrature stopped after %d sweeps (error %.3e, %d panels)",
                   max_iter, err.sum(), len(a))
    return total, float(err.sum())
