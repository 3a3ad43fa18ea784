import json

import numpy as np
import pytest
from scipy.stats import linregress

from src.errors import ConfigurationError, WindowError
from src.evolve import (FREE_WAVE_MASS, WRAP_THRESHOLD, WaveKernelTrace, clear_dense_cache, decay_experiment,
                        dense_spectrum, fit_decay, propagate, wave_bound_checks, wave_sine_kernel)
from src.fields import Grid3D, PotentialSpec, build_field
from src.spectral import assemble_h, eigensolve, pac_apply

from oracles import free_gaussian_sup, free_wave_kernel


def free_setup(n=32, L=20.0):
    grid = Grid3D(n, L)
    return grid, assemble_h(grid), build_field(PotentialSpec.single('gaussian'), grid)


def test_free_gaussian_sup_norm():
    grid, H, f0 = free_setup()
    times = [0.0, 0.25, 0.5, 1.0]
    evolution = propagate(H, f0, times)
    assert np.allclose(evolution.sup_norms, free_gaussian_sup(times), rtol=5e-3)
    assert not evolution.truncated
    assert evolution.shell_fractions.max() < WRAP_THRESHOLD


def test_unitarity_and_energy(gaussian_a):
    grid = Grid3D(16, 8.0)
    H = assemble_h(grid, gaussian_a, PotentialSpec.single('gaussian', amplitude=2.0))
    f0 = build_field(PotentialSpec.single('gaussian', width=1.2, center=(0.5, 0.0, 0.0)), grid)
    evolution = propagate(H, f0, [0.0, 0.5, 1.0])
    assert np.allclose(evolution.masses, f0.norm(), rtol=1e-8)
    assert np.allclose(evolution.energies, evolution.energies[0], rtol=1e-6, atol=1e-8)
    assert evolution.state(2).norm() == pytest.approx(f0.norm(), rel=1e-8)


def test_wrap_around_flag():
    grid = Grid3D(16, 8.0)
    f0 = build_field(PotentialSpec.single('gaussian', center=(3.5, 0.0, 0.0)), grid)
    evolution = propagate(assemble_h(grid), f0, [0.0])
    assert evolution.truncated


def test_propagate_without_states():
    grid, H, f0 = free_setup(16, 8.0)
    evolution = propagate(H, f0, [0.1], keep=False)
    with pytest.raises(ConfigurationError):
        evolution.state(0)


@pytest.mark.parametrize('times', [[], [0.5, 0.2], [-1.0, 1.0], [[0.1, 0.2]]])
def test_bad_time_grids(times):
    grid, H, f0 = free_setup(16, 8.0)
    with pytest.raises(ConfigurationError):
        propagate(H, f0, times)


def test_fit_decay_synthetic_power_law():
    t = np.geomspace(1.0, 4.0, 7)
    l1 = 3.0 * (4 * np.pi) ** 1.5
    fit = fit_decay(t, 3.0 * t ** -1.5, (1.0, 4.0), l1_norm=l1)
    assert fit.exponent == pytest.approx(-1.5, abs=1e-12)
    assert fit.exponent_stderr == pytest.approx(0.0, abs=1e-10)
    assert fit.deviation < 1e-12
    assert fit.amplitude_ratio == pytest.approx(1.0)


def test_fit_decay_without_l1_has_no_amplitude():
    t = np.linspace(1.0, 2.0, 5)
    fit = fit_decay(t, t ** -1.0, (1.0, 2.0))
    assert np.isnan(fit.amplitude_ratio)
    assert fit.to_dict()['amplitude_ratio'] is None


def test_fit_decay_window_errors():
    t = np.linspace(1.0, 2.0, 5)
    s = t ** -1.5
    with pytest.raises(WindowError):
        fit_decay(t, s, (0.5, 2.0))
    with pytest.raises(WindowError):
        fit_decay(t, s, (1.0, 1.2))
    with pytest.raises(WindowError):
        fit_decay(t[::-1], s, (1.0, 2.0))
    with pytest.raises(WindowError):
        fit_decay(t, -s, (1.0, 2.0))
    with pytest.raises(ConfigurationError):
        fit_decay(t, s[:3], (1.0, 2.0))


def test_decay_experiment_tracks_free_closed_form(tmp_path):
    grid, H, f0 = free_setup()
    fit = decay_experiment(H, None, f0, (0.5, 1.0), n_times=5)
    expected = linregress(np.log(fit.times), np.log(free_gaussian_sup(fit.times))).slope
    assert fit.exponent == pytest.approx(expected, abs=0.01)
    # (1 + 16)^(-3/4) (4 pi)^(3/2) / pi^(3/2)
    assert fit.amplitude_ratio == pytest.approx(17 ** -0.75 * 8, rel=1e-2)
    fit.save(str(tmp_path / 'decay'))
    assert (tmp_path / 'decay.csv').read_text().splitlines()[0] == 't,value'
    assert json.loads((tmp_path / 'decay.json').read_text())['window'] == [0.5, 1.0]


def test_projection_commutes_with_evolution(quick):
    grid = Grid3D(16, 12.0)
    H = assemble_h(grid, None, PotentialSpec.single('gaussian', amplitude=-5.0))
    report = eigensolve(H, k=2, settings=quick)
    assert report.negative_count == 1
    f = build_field(PotentialSpec.single('gaussian', width=1.5, center=(0.5, 0.0, 0.0)), grid)
    first = propagate(H, pac_apply(report, f), [0.5]).state(0)
    second = pac_apply(report, propagate(H, f, [0.5]).state(0))
    assert (first - second).norm() < 1e-6 * f.norm()


def test_free_wave_kernel_matches_closed_form(tmp_path):
    grid = Grid3D(32, 20.0)
    H = assemble_h(grid)
    report = eigensolve(H, k=1)
    t = np.arange(201) * 0.05
    trace = wave_sine_kernel(H, report, (-2.25, 0.0, 0.0), (2.25, 0.0, 0.0), t, smoothing=0.9)
    assert trace.method == 'krylov'
    exact = free_wave_kernel(t, 4.5, 0.9)
    assert np.max(np.abs(trace.values - exact)) < 1e-2 * np.max(exact)
    assert trace.i2 * 4 * np.pi * trace.distance == pytest.approx(1.0, rel=0.02)
    assert trace.finite_speed_ratio < 1e-3
    assert trace.values[0] == 0
    trace.save(str(tmp_path / 'wave'))
    assert (tmp_path / 'wave.csv').read_text().splitlines()[0] == 't,value'


def test_dense_and_krylov_wave_paths_agree(gaussian_v):
    grid = Grid3D(8, 8.0)
    H = assemble_h(grid, None, gaussian_v)
    report = eigensolve(H, k=3)
    t = np.arange(41) * 0.1
    x, y = (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)
    dense = wave_sine_kernel(H, report, x, y, t, smoothing=1.5, method='dense')
    krylov = wave_sine_kernel(H, report, x, y, t, smoothing=1.5, method='krylov')
    assert np.max(np.abs(dense.values - krylov.values)) < 1e-6 * np.max(np.abs(dense.values))


def test_bound_state_part_of_wave_kernel():
    grid = Grid3D(8, 6.0)
    H = assemble_h(grid, None, PotentialSpec.single('ball-indicator', amplitude=-5.0, width=1.5))
    report = eigensolve(H, k=1)
    assert report.negative_count == 1
    lam = report.lambdas[0]
    t = np.arange(31) * 0.1
    x, y = (-0.75, 0.0, 0.0), (0.75, 0.0, 0.0)
    dense = wave_sine_kernel(H, report, x, y, t, smoothing=1.0, method='dense')
    krylov = wave_sine_kernel(H, report, x, y, t, smoothing=1.0, method='krylov')
    assert dense.point_values[0] == 0
    # one bound state: the point part is a multiple of sinh(t l) / l
    ratio = dense.point_values[1:] / (np.sinh(lam * t[1:]) / lam)
    assert np.allclose(ratio, ratio[0], rtol=1e-6)
    assert ratio[0].real > 0
    scale = np.max(np.abs(dense.point_values))
    assert np.max(np.abs(dense.point_values - krylov.point_values)) < 1e-6 * scale
    assert np.allclose(dense.total_values, dense.values + dense.point_values)
    assert dense.to_dict()['point_max'] == pytest.approx(scale)


def test_finite_speed_ratio_includes_bound_states():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    values = np.array([0.0, 0.5, 0.0, 1.0])
    ac_only = WaveKernelTrace((0.0, 0.0, 0.0), (3.0, 0.0, 0.0), t, values, 0.0, 'dense')
    assert ac_only.finite_speed_ratio == pytest.approx(0.5)
    point = np.array([0.0, -0.5, 0.0, 0.0])
    total = WaveKernelTrace((0.0, 0.0, 0.0), (3.0, 0.0, 0.0), t, values, 0.0, 'dense', point)
    assert total.finite_speed_ratio == 0.0
    assert total.i2 == ac_only.i2


def test_dense_spectrum_cache():
    H = assemble_h(Grid3D(8, 8.0))
    first = dense_spectrum(H)
    assert dense_spectrum(H) is first
    clear_dense_cache()
    again = dense_spectrum(H)
    assert again is not first
    assert np.allclose(again[0], first[0])
    clear_dense_cache()


def test_wave_method_checks():
    grid = Grid3D(32, 20.0)
    H = assemble_h(grid)
    with pytest.raises(ConfigurationError):
        dense_spectrum(H)
    small = Grid3D(8, 8.0)
    with pytest.raises(ConfigurationError):
        wave_sine_kernel(assemble_h(small), None, (0, 0, 0), (1, 0, 0), [0.0, 0.1], method='fourier')
    with pytest.raises(ConfigurationError):
        wave_sine_kernel(assemble_h(small), None, (0, 0, 0), (1, 0, 0), [0.1, 0.2], method='krylov')
    with pytest.raises(ConfigurationError):
        wave_sine_kernel(assemble_h(small), None, (0, 0, 0), (1, 0, 0), [0.0, 0.1, 0.3], method='krylov')


def test_wave_bound_checks():
    assert wave_bound_checks([]).max_i1 == 0.0
    grid = Grid3D(8, 8.0)
    H = assemble_h(grid)
    t = np.arange(21) * 0.1
    traces = [wave_sine_kernel(H, None, (-1.0, 0, 0), (1.0, 0, 0), t, smoothing=1.0),
              wave_sine_kernel(H, None, (0, -1.5, 0), (0, 1.5, 0), t, smoothing=1.0)]
    report = wave_bound_checks(traces)
    assert len(report.pairs) == 2
    assert report.max_i1 == pytest.approx(max(tr.i1 for tr in traces))
    assert report.i2_ratio == pytest.approx(report.max_i2_times_distance / FREE_WAVE_MASS)
