import numpy as np
import pytest

from src.errors import InvalidFieldError, UnsupportedDerivativeError
from src.fields import (Bump, Grid3D, PotentialSpec, ScalarField, build_field, derivative_magnitude,
                        multi_indices, spectral_gradient)


def test_multi_indices():
    assert len(multi_indices(2)) == 6
    assert all(sum(a) == 3 for a in multi_indices(3))


def test_gaussian_derivatives():
    bump = Bump('gaussian', amplitude=2.0, width=1.0)
    p = np.array([0.3, 0.0, 0.0])
    assert bump.evaluate(p) == pytest.approx(2.0 * np.exp(-0.09))
    assert bump.evaluate(p, (1, 0, 0)) == pytest.approx(2.0 * -0.6 * np.exp(-0.09))
    wide = Bump('gaussian', width=2.0)
    # d^2/dx^2 exp(-x^2 / 4) at 0
    assert wide.evaluate(np.zeros(3), (2, 0, 0)) == pytest.approx(-0.5)


def test_compact_bump_support():
    bump = Bump('compact-bump', width=1.0)
    assert bump.evaluate(np.zeros(3)) == pytest.approx(1.0)
    assert bump.evaluate(np.array([1.2, 0.0, 0.0])) == 0.0
    h = 1e-5
    p = np.array([0.4, 0.2, 0.0])
    fd = (bump.evaluate(p + [h, 0, 0]) - bump.evaluate(p - [h, 0, 0])) / (2 * h)
    assert bump.evaluate(p, (1, 0, 0)) == pytest.approx(fd, rel=1e-6)


def test_ball_indicator_has_no_derivatives():
    spec = PotentialSpec.single('ball-indicator', amplitude=-3.0)
    assert spec.evaluate(np.zeros(3)) == -3.0
    assert spec.evaluate(np.array([0.0, 1.5, 0.0])) == 0.0
    with pytest.raises(UnsupportedDerivativeError):
        spec.evaluate(np.zeros(3), alpha=(1, 0, 0))


def test_bump_validation():
    with pytest.raises(InvalidFieldError):
        Bump('lorentzian')
    with pytest.raises(InvalidFieldError):
        Bump('gaussian', width=0.0)
    with pytest.raises(InvalidFieldError):
        Bump('gaussian', center=(0.0, 0.0))
    with pytest.raises(InvalidFieldError):
        PotentialSpec.from_dict({'scalar': [{'amplitude': 1.0}]})


def test_spec_dict_round_trip(gaussian_a):
    assert PotentialSpec.from_dict(gaussian_a.to_dict()) == gaussian_a
    assert PotentialSpec.from_json(gaussian_a.to_json()) == gaussian_a


def test_dilated_and_scaled():
    spec = PotentialSpec.single('gaussian', amplitude=1.5, width=0.7, center=(0.1, 0.2, 0.0))
    p = np.array([[0.3, -0.4, 0.2], [1.0, 0.0, 0.5]])
    assert np.allclose(spec.dilated(2.0).evaluate(2.0 * p), spec.evaluate(p))
    assert np.allclose(spec.scaled(-2.0).evaluate(p), -2.0 * spec.evaluate(p))


def test_grid():
    grid = Grid3D(16, 8.0)
    assert grid.h == 0.5
    assert grid.axis[0] == -4.0
    assert 0.0 in grid.axis
    assert grid.points().shape == (16, 16, 16, 3)
    assert grid.index_of((0.0, 0.0, 0.0)) == (8, 8, 8)
    assert grid.refined().n == 32
    with pytest.raises(InvalidFieldError):
        Grid3D(12, 8.0)
    with pytest.raises(InvalidFieldError):
        Grid3D(4, 8.0)
    with pytest.raises(InvalidFieldError):
        Grid3D(16, -1.0)


def test_build_field_shapes(small_grid, gaussian_a, gaussian_v):
    A = build_field(gaussian_a, small_grid)
    assert A.values.shape == (3,) + small_grid.shape
    assert np.all(A.values[2] == 0)
    V = build_field(gaussian_v, small_grid)
    assert V.values.shape == small_grid.shape
    assert V.values[8, 8, 8] == pytest.approx(-5.0)


def test_gaussian_norm_on_grid():
    grid = Grid3D(32, 12.0)
    f = build_field(PotentialSpec.single('gaussian'), grid)
    assert f.norm() ** 2 == pytest.approx((np.pi / 2) ** 1.5, rel=1e-10)
    g = f * 2.0
    assert (g - f).norm() == pytest.approx(f.norm())
    assert np.real(f.inner(g)) == pytest.approx(2 * f.norm() ** 2)


def test_scalar_field_shape_check(small_grid):
    with pytest.raises(InvalidFieldError):
        ScalarField(small_grid, np.zeros((8, 8, 8)))
    with pytest.raises(InvalidFieldError):
        ScalarField(small_grid, np.full(small_grid.shape, np.nan)).check_finite()


def test_derivative_magnitude_first_order():
    grid = Grid3D(16, 8.0)
    field = derivative_magnitude(PotentialSpec.single('gaussian'), grid, 1)
    r = grid.radius()
    assert np.allclose(field.values, 2 * r * np.exp(-r ** 2), atol=1e-14)


def test_spectral_gradient_matches_exact():
    grid = Grid3D(32, 12.0)
    spec = PotentialSpec.single('gaussian')
    grad = spectral_gradient(build_field(spec, grid))
    for axis in range(3):
        alpha = tuple(int(i == axis) for i in range(3))
        exact = spec.evaluate(grid.points(), 'scalar', alpha)
        assert np.max(np.abs(grad[axis].real - exact)) < 1e-6
