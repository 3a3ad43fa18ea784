import numpy as np
import pytest
from scipy.linalg import eigh, expm

from src.errors import ConvergenceError
from src.krylov import expmv_steps, krylov_expmv, lanczos_funm


def hermitian(rng, n, scale=1.0):
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (M + M.conj().T) / 2


def test_expmv_matches_dense(rng):
    H = hermitian(rng, 30)
    v = rng.standard_normal(30) + 0j
    u = krylov_expmv(lambda x: 1j * (H @ x), v, t=0.3, tol=1e-12, m_max=30)
    exact = expm(0.3j * H) @ v
    assert np.linalg.norm(u - exact) < 1e-10 * np.linalg.norm(v)


def test_expmv_zero_vector(rng):
    H = hermitian(rng, 5)
    assert np.all(krylov_expmv(lambda x: H @ x, np.zeros(5)) == 0)


def test_expmv_invariant_subspace():
    D = np.diag([1.0, 2.0, 3.0, 4.0])
    v = np.array([1.0, 0.0, 1.0, 0.0])
    u = krylov_expmv(lambda x: D @ x, v, t=0.5, tol=1e-14, m_max=4)
    assert np.allclose(u, np.exp(0.5 * np.diag(D)) * v, rtol=1e-13)


def test_expmv_raises_when_subspace_too_small(rng):
    H = hermitian(rng, 40, scale=10.0)
    with pytest.raises(ConvergenceError):
        krylov_expmv(lambda x: 1j * (H @ x), rng.standard_normal(40), t=20.0, tol=1e-12, m_max=5)


def test_expmv_steps_splits_long_times(rng):
    H = hermitian(rng, 40, scale=10.0)
    v = rng.standard_normal(40) + 0j
    u, step, n_steps = expmv_steps(lambda x: 1j * (H @ x), v, 5.0, tol=1e-12, m_max=12)
    assert n_steps > 1
    assert step < 5.0
    assert np.linalg.norm(u - expm(5.0j * H) @ v) < 1e-8 * np.linalg.norm(v)
    # unitary evolution keeps the norm
    assert np.linalg.norm(u) == pytest.approx(np.linalg.norm(v), rel=1e-9)


def test_lanczos_funm_matches_eigendecomposition(rng):
    H = hermitian(rng, 50)
    H = H @ H  # positive semi-definite
    v = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    E, Q = eigh(H)

    def cos_root(x):
        return np.cos(0.4 * np.sqrt(np.abs(x)))

    u = lanczos_funm(lambda x: H @ x, v, cos_root, tol=1e-12, m_max=50)
    exact = Q @ (cos_root(E) * (Q.conj().T @ v))
    assert np.linalg.norm(u - exact) < 1e-9 * np.linalg.norm(v)


def test_lanczos_funm_breakdown_is_exact():
    D = np.diag([0.5, 1.0, 2.0, 3.0, 5.0])
    v = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
    u = lanczos_funm(lambda x: D @ x, v, np.exp, tol=1e-14, m_max=5)
    assert np.allclose(u, np.exp(np.diag(D)) * v, rtol=1e-12)
