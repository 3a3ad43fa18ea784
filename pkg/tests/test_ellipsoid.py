import numpy as np
import pytest

from src.ellipsoid import (EllipsoidFrame, coordinate_identity_residuals, d_rho_surface_integral,
                           elliptical_map, foliated_integral, graded_rho_edges, surface_integral)
from src.errors import DegenerateEllipsoidError

FOCI = ((-0.5, 0.0, 0.0), (0.5, 0.0, 0.0))


def tilted_frame():
    return EllipsoidFrame((0.2, -0.3, 0.1), (0.9, 0.4, -0.5))


def gaussian(center):
    center = np.asarray(center, dtype=float)

    def f(y):
        return np.exp(-np.sum((y - center) ** 2, axis=-1))

    def on_surface(p):
        return f(p.y)

    def flow_derivative(p):
        return -2 * np.sum((p.y - center) * p.v, axis=-1) * f(p.y)

    return f, on_surface, flow_derivative


def test_frame_round_trip():
    frame = tilted_frame()
    local = np.array([[0.3, -1.0, 2.0], [0.0, 0.5, 0.1]])
    assert np.allclose(frame.to_local(frame.to_world(local)), local)
    assert np.allclose(frame.rotation @ frame.rotation.T, np.eye(3))
    assert np.allclose(frame.to_local(frame.z), [frame.r / 2, 0.0, 0.0])


def test_surface_point_geometry():
    frame = tilted_frame()
    theta = np.linspace(0.1, 3.0, 7)
    p = elliptical_map(frame, 2.0, theta[:, None], np.linspace(0, 6, 5)[None, :])
    assert np.allclose(p.r1 + p.r2, 2.0)
    assert np.allclose(np.linalg.norm(p.r1_vec, axis=-1), p.r1)
    assert np.allclose(np.linalg.norm(p.r2_vec, axis=-1), p.r2)


def test_degenerate_ellipsoid():
    frame = EllipsoidFrame(*FOCI)
    with pytest.raises(DegenerateEllipsoidError):
        elliptical_map(frame, 1.0, 0.3, 0.0)
    with pytest.raises(DegenerateEllipsoidError):
        surface_integral(frame, 0.5, lambda p: 1.0)
    with pytest.raises(DegenerateEllipsoidError):
        graded_rho_edges(1.0, 0.9)


@pytest.mark.parametrize('factor', [1.01, 1.5, 3.0, 10.0])
def test_coordinate_identities(factor):
    frame = tilted_frame()
    residuals = coordinate_identity_residuals(frame, factor * frame.r)
    assert max(residuals.values()) < 1e-12


def test_surface_area_measure():
    frame = EllipsoidFrame(*FOCI)
    for rho in (1.2, 2.5):
        value = surface_integral(frame, rho, lambda p: 1.0)
        assert value == pytest.approx(4 * np.pi * (rho ** 2 - 1.0 / 3.0), rel=1e-10)


def test_foliated_gaussian_integral():
    f, _, _ = gaussian((0.0, 0.0, 0.0))
    value = foliated_integral(EllipsoidFrame(*FOCI), f, 14.0)
    assert value == pytest.approx(np.pi ** 1.5, rel=1e-6)


def test_foliated_integral_off_axis():
    f, _, _ = gaussian((0.4, -0.7, 0.3))
    value = foliated_integral(tilted_frame(), f, 16.0)
    assert value == pytest.approx(np.pi ** 1.5, rel=1e-6)


@pytest.mark.parametrize('rho', [1.5, 2.5, 4.0])
def test_differentiation_formula(rho):
    frame = EllipsoidFrame(*FOCI)
    _, f, df = gaussian((0.3, 0.2, -0.1))
    h = 1e-3 * rho
    fd = (surface_integral(frame, rho + h, f) - surface_integral(frame, rho - h, f)) / (2 * h)
    assert d_rho_surface_integral(frame, rho, f, df) == pytest.approx(fd, rel=1e-4)


def test_graded_rho_edges():
    edges = graded_rho_edges(1.0, 6.0)
    assert edges[0] > 1.0
    assert edges[0] - 1.0 < 1e-6
    assert edges[-1] == 6.0
    assert np.all(np.diff(edges) > 0)
