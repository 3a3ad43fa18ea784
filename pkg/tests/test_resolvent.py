import numpy as np
import pytest

from src.errors import PreconditionError, SingularityError, WindowError
from src.fields import Grid3D, PotentialSpec, build_field
from src.resolvent import (ResolventKernelKind, r0_apply, r0_multiplier, regularize, resolvent_kernel,
                           sphere_fourier_check)

X = np.array([0.3, -0.2, 0.5])
Y = np.array([-0.4, 0.1, 0.0])


def test_zero_energy_kernel():
    value = resolvent_kernel('R0', 0.0, X, Y)
    assert value == pytest.approx(1.0 / (4 * np.pi * np.linalg.norm(X - Y)))


def test_kernel_preconditions():
    with pytest.raises(SingularityError):
        resolvent_kernel('R0', 1.0, X, X)
    with pytest.raises(PreconditionError):
        resolvent_kernel('R0', 1.0 - 0.1j, X, Y)
    with pytest.raises(ValueError):
        resolvent_kernel('R1', 1.0, X, Y)


@pytest.mark.parametrize('lam', [0.0, 1.5, 0.7 + 0.4j])
def test_gradient_kernel_is_x_derivative(lam):
    h = 1e-6
    grad = resolvent_kernel(ResolventKernelKind.R0_GRAD, lam, X, Y)
    for i in range(3):
        e = np.eye(3)[i] * h
        fd = (resolvent_kernel('R0', lam, X + e, Y) - resolvent_kernel('R0', lam, X - e, Y)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize('kind, base', [('DLAMBDA_R0', 'R0'), ('GRAD_DLAMBDA_R0', 'R0_GRAD')])
def test_lambda_derivative_kernels(kind, base):
    lam, h = 1.2 + 0.3j, 1e-6
    fd = (resolvent_kernel(base, lam + h, X, Y) - resolvent_kernel(base, lam - h, X, Y)) / (2 * h)
    assert np.allclose(resolvent_kernel(kind, lam, X, Y), fd, rtol=1e-6)


def test_kernels_broadcast():
    xs = np.stack([X, X + 1.0])
    assert resolvent_kernel('R0', 1.0, xs, Y).shape == (2,)
    assert resolvent_kernel('R0_GRAD', 1.0, xs, Y).shape == (2, 3)
    assert ResolventKernelKind('R0_GRAD').is_vector
    assert not ResolventKernelKind('DLAMBDA_R0').is_vector


def test_truncated_multiplier_limit():
    lam = 0.3 + 1.0j
    k = np.array([0.5, 1.0, 2.0])
    assert np.allclose(r0_multiplier(lam, k, 60.0), 1.0 / (k ** 2 - lam ** 2), rtol=1e-10)


def test_truncated_multiplier_continuous_at_zero():
    lam = 0.3 + 1.0j
    at_zero = r0_multiplier(lam, np.array([0.0]), 10.0)[0]
    near = r0_multiplier(lam, np.array([1e-6]), 10.0)[0]
    assert near == pytest.approx(at_zero, rel=1e-6)
    # small lambda R uses the series
    assert r0_multiplier(1e-6, np.array([0.0]), 1.0)[0] == pytest.approx(0.5, rel=1e-5)


def test_regularize():
    assert regularize(2.0).imag > 0
    assert regularize(2.0 + 1j) == 2.0 + 1j
    with pytest.raises(PreconditionError):
        regularize(-1j)


def test_r0_apply_matches_periodic_inverse():
    grid = Grid3D(32, 32.0)
    f = build_field(PotentialSpec.single('gaussian', width=2.0), grid)
    u = r0_apply(1j, f)
    periodic = np.fft.ifftn(np.fft.fftn(f.values) / (grid.k_squared() + 1.0))
    assert np.max(np.abs(u.values - periodic)) < 1e-5


def test_sphere_fourier_identity():
    lhs, rhs = sphere_fourier_check((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 4.0)
    assert lhs == pytest.approx(rhs, rel=1e-3)
    with pytest.raises(SingularityError):
        sphere_fourier_check(X, X, 4.0)
    with pytest.raises(WindowError):
        sphere_fourier_check((0.0, 0.0, 0.0), (5.0, 0.0, 0.0), 4.0)
