import numpy as np
import pytest

from src.assembly import (FOCAL_BAND, Jet, assemble_dlambda_t, assemble_t_hat, _axial_slices, bil_bound,
                          direct_t_hat, kernel_mass)
from src.ellipsoid import EllipsoidFrame
from src.errors import (ConfigurationError, DegenerateEllipsoidError, MissingNormError,
                        UnsupportedDerivativeError)
from src.fields import PotentialSpec
from src.norms import NormReport
from src.rho_algebra import hat

FOCI = ((-0.5, 0.0, 0.0), (0.5, 0.0, 0.0))


def frame():
    return EllipsoidFrame(*FOCI)


def test_jet_arithmetic():
    u = Jet(2.0, 3.0, 5.0)
    w = Jet(7.0, 11.0, 13.0)
    prod = u * w
    assert prod.f == 14.0
    assert prod.d1 == 3.0 * 7.0 + 2.0 * 11.0
    assert prod.d2 == 5.0 * 7.0 + 2 * 3.0 * 11.0 + 2.0 * 13.0
    inv = u.power(-1)
    assert inv.d1 == pytest.approx(-3.0 / 4.0)
    assert inv.d2 == pytest.approx(2 * 9.0 / 8.0 - 5.0 / 4.0)
    mixed = u + Jet(1.0, 1.0)
    assert mixed.order == 1 and mixed.d2 is None
    assert (u - u).f == 0.0


def test_vector_jet_dot():
    a = Jet(np.array([1.0, 2.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.zeros(3))
    b = Jet(np.array([0.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.zeros(3))
    d = a.dot(b)
    assert d.f == 2.0
    assert d.d1 == 1.0 + 1.0
    assert d.d2 == 0.0


def test_unknown_part():
    with pytest.raises(ConfigurationError):
        assemble_t_hat('T5', None, None, None, None, frame(), 3.0)
    with pytest.raises(ConfigurationError):
        assemble_dlambda_t('T1', None, None, None, None, frame(), 3.0)


def test_degenerate_foci(quick):
    coincident = EllipsoidFrame((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(DegenerateEllipsoidError):
        assemble_t_hat('T4', None, None, None, None, coincident, 3.0, quick)
    with pytest.raises(DegenerateEllipsoidError):
        assemble_t_hat('T4', None, None, None, None, frame(), 1.0 + FOCAL_BAND / 2, quick)


def test_rough_magnetic_potential_is_rejected(quick):
    ball = PotentialSpec.vector((), (PotentialSpec.single('ball-indicator').scalar_terms[0],), ())
    with pytest.raises(UnsupportedDerivativeError):
        assemble_t_hat('T1', ball, None, None, None, frame(), 3.0, quick)


def test_ball_potential_density(quick):
    depth, radius = 2.0, 1.0
    V = PotentialSpec.single('ball-indicator', amplitude=depth, width=radius)
    T = assemble_t_hat('T4', None, V, None, None, frame(), 3.0, quick)
    r = frame().r
    level = depth ** 2 / (8 * np.pi)

    # ellipsoids with rho <= 2 radius lie inside the ball
    inside = T.rho <= 1.9
    assert inside.sum() > 3
    assert np.allclose(T.density[inside, 0, 0], level, rtol=1e-8)
    outside = T.rho >= 2.3
    assert np.abs(T.density[outside, 0, 0]).max() < 1e-12

    between = np.argmin(np.abs(T.rho - 2.1))
    rho = T.rho[between]
    t_star = min(1.0, np.sqrt(max(0.0, (4 * radius ** 2 - rho ** 2 + r ** 2) / r ** 2)))
    expected = level * t_star
    assert 0 < t_star < 1
    assert T.density[between, 0, 0].real == pytest.approx(expected, rel=5e-2)

    start = r * (1 + FOCAL_BAND)
    lumped = [a for a in T.atoms if a.position == start and a.order == 0]
    assert len(lumped) == 1
    assert lumped[0].matrix[0, 0].real == pytest.approx(level * (start - r), rel=1e-4)


@pytest.mark.parametrize('foci', [FOCI, ((0.2, -0.1, 0.3), (1.0, 0.5, -0.2))])
def test_axial_rule_fills_the_ellipsoid(quick, foci):
    f = EllipsoidFrame(*foci)
    rho_max = 4.0
    a = rho_max / 2
    b = np.sqrt(rho_max ** 2 - f.r ** 2) / 2
    volume = 0.0
    focal = 0.0
    for points, weights in _axial_slices(f, rho_max, 0.5, quick):
        r1 = np.linalg.norm(points - f.x, axis=-1)
        r2 = np.linalg.norm(points - f.z, axis=-1)
        assert np.all(r1 + r2 <= rho_max * (1 + 1e-12))
        volume += np.sum(weights)
        focal += np.sum(weights / (r1 * r2))
    assert volume == pytest.approx(4 * np.pi * a * b ** 2 / 3, rel=1e-10)
    assert focal == pytest.approx(2 * np.pi * (rho_max - f.r), rel=1e-4)


@pytest.mark.parametrize('lam', [0.0, 1.0, 2.0])
def test_scalar_terms_match_direct_integration(quick, gaussian_v, lam):
    for part in ('T4', 'TTILDE'):
        A = PotentialSpec.vector((), (), PotentialSpec.single('gaussian', 0.4).scalar_terms)
        T = assemble_t_hat(part, A, gaussian_v, None, None, frame(), 4.0, quick)
        direct = direct_t_hat(part, A, gaussian_v, None, None, frame(), 4.0, lam, quick)
        assert hat(T, lam)[0, 0] == pytest.approx(direct, rel=1e-3, abs=1e-6)


@pytest.mark.parametrize('lam', [0.0, 1.0, 2.0])
def test_bilinear_term_matches_direct_integration(quick, gaussian_a, lam):
    T = assemble_t_hat('T1', gaussian_a, None, None, None, frame(), 4.0, quick)
    direct = direct_t_hat('T1', gaussian_a, None, None, None, frame(), 4.0, lam, quick)
    assert hat(T, lam)[0, 0] == pytest.approx(direct, rel=1e-3, abs=1e-6)


@pytest.mark.parametrize('part', ['TTILDE2', 'T11'])
def test_lambda_derivative_terms_match_direct_integration(quick, gaussian_a, part):
    T = assemble_dlambda_t(part, gaussian_a, None, None, None, frame(), 4.0, quick)
    direct = direct_t_hat(part, gaussian_a, None, None, None, frame(), 4.0, 1.0, quick)
    assert hat(T, 1.0)[0, 0] == pytest.approx(direct, rel=1e-3, abs=1e-6)


def test_kernel_mass_bounds_hat(quick):
    V = PotentialSpec.single('gaussian', amplitude=-3.0)
    T = assemble_t_hat('T4', None, V, None, None, frame(), 4.0, quick)
    mass = kernel_mass(T)[0, 0]
    for lam in (0.0, 0.7, 3.0):
        assert abs(hat(T, lam)[0, 0]) <= mass * (1 + 1e-9)
    assert abs(hat(T, 0.0)[0, 0]) == pytest.approx(mass, rel=1e-9)


def norm_report(scale=1.0):
    quantities = ('A', 'grad_A', 'grad2_A', 'grad3_A', 'grad4_A')
    values = {q: {'K2_LOG2': scale * (i + 1), 'K_LOG': scale * (i + 2), 'L1': scale,
                  'L_LOG_L': scale * 0.5}
              for i, q in enumerate(quantities)}
    return NormReport(values, True, True)


def test_bil_bound_is_bilinear():
    base = bil_bound(norm_report())
    assert base > 0
    assert bil_bound(norm_report(2.0)) == pytest.approx(4 * base)
    assert bil_bound(norm_report(2.0), norm_report()) == pytest.approx(2 * base)


def test_bil_bound_missing_norm():
    report = norm_report()
    del report.values['grad4_A']
    with pytest.raises(MissingNormError):
        bil_bound(report)
