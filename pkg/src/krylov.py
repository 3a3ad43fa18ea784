"""
Matrix-free Krylov functional calculus.

``krylov_expmv`` projects exp(t A) v onto an Arnoldi basis, ``expmv_steps``
splits a long step until each piece converges, and ``lanczos_funm``
evaluates f(A) v for hermitian A through the Lanczos tridiagonal matrix.
"""

import logging

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

from .errors import ConvergenceError

logger = logging.getLogger(__name__)

BREAKDOWN = 1e-14
# step halvings before expmv_steps gives up
MAX_HALVINGS = 30


def krylov_expmv(matvec, v, t=1.0, tol=1e-8, m_max=50):
    """
    u = exp(t A) v by Arnoldi projection.

    ``matvec`` maps x to A x on flat vectors. The error of the order-m
    approximation is estimated by beta |h_{m+1,m}| |(exp(t H_m) e1)_m|;
    raises ConvergenceError when ``tol`` (relative to ||v||) is not met
    within ``m_max`` vectors.
    """
    v = np.asarray(v, dtype=complex)
    n = v.size
    beta = np.linalg.norm(v)
    if beta == 0:
        return np.zeros_like(v)

    V = np.zeros((m_max + 1, n), dtype=complex)
    H = np.zeros((m_max + 1, m_max), dtype=complex)
    V[0] = v / beta

    for m in range(1, m_max + 1):
        w = matvec(V[m - 1])
        # modified Gram-Schmidt, twice
        for _ in range(2):
            for j in range(m):
                c = np.vdot(V[j], w)
                H[j, m - 1] += c
                w = w - c * V[j]
        H[m, m - 1] = np.linalg.norm(w)
        small = expm(t * H[:m, :m])[:, 0]
        if abs(H[m, m - 1]) < BREAKDOWN:
            # invariant subspace: the projection is exact
            logger.debug("Arnoldi breakdown at m=%d", m)
            return beta * (small @ V[:m])
        err = abs(H[m, m - 1]) * abs(small[-1])
        if err < tol:
            logger.debug("expmv converged in %d iterations with error %.2e", m, err)
            return beta * (small @ V[:m])
        V[m] = w / H[m, m - 1]

    raise ConvergenceError(f"Krylov exponential did not reach {tol:g} within {m_max} vectors "
                           f"(estimate {err:.2e}, t = {t:g})")


def expmv_steps(matvec, v, t, tol=1e-8, m_max=50, step=None):
    """
    exp(t A) v in substeps; halves the substep whenever Krylov does not converge.

    Returns (u, step, n_steps) with the last successful substep, which the
    caller can pass back in to start the next interval.
    """
    u = np.asarray(v, dtype=complex)
    remaining = float(t)
    step = remaining if step is None else min(step, remaining)
    floor = remaining * 2.0 ** -MAX_HALVINGS
    n_steps = 0
    while remaining > 0:
        h = min(step, remaining)
        try:
            u = krylov_expmv(matvec, u, h, tol, m_max)
        except ConvergenceError:
            step = h / 2
            if step < floor:
                raise
            continue
        remaining -= h
        if remaining < 1e-14 * abs(t):
            remaining = 0.0
        n_steps += 1
    return u, step, n_steps


def lanczos_funm(matvec, v, func, tol=1e-10, m_max=60):
    """
    f(A) v for hermitian A via Lanczos with full reorthogonalization.

    ``func`` maps an array of Ritz values to f at those values. Convergence
    is declared when two successive approximations differ by less than
    ``tol`` relative to ||v||.
    """
    v = np.asarray(v, dtype=complex)
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return np.zeros_like(v)
    Q = np.zeros((m_max + 1, v.size), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    Q[0] = v / beta0
    previous = None

    for m in range(1, m_max + 1):
        w = matvec(Q[m - 1])
        alpha[m - 1] = np.real(np.vdot(Q[m - 1], w))
        w = w - alpha[m - 1] * Q[m - 1]
        if m > 1:
            w = w - beta[m - 2] * Q[m - 2]
        w = w - Q[:m].T @ (Q[:m].conj() @ w)
        beta[m - 1] = np.linalg.norm(w)

        if m == 1:
            theta, S = alpha[:1], np.ones((1, 1))
        else:
            theta, S = eigh_tridiagonal(alpha[:m], beta[:m - 1])
        coeffs = S @ (func(theta) * S[0].conj())
        current = beta0 * (coeffs @ Q[:m])
        if beta[m - 1] < BREAKDOWN:
            return current
        if previous is not None and np.linalg.norm(current - previous) < tol * beta0:
            logger.debug("Lanczos converged in %d iterations", m)
            return current
        previous = current
        Q[m] = w / beta[m - 1]

    raise ConvergenceError(f"Lanczos f(A)v did not reach {tol:g} within {m_max} vectors")
