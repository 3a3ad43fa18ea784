"""
Time evolution on the periodic box.

``propagate`` applies e^{itH} with Krylov substeps and watches the mass on
the outermost grid layer for wrap-around. ``decay_experiment`` fits the
sup-norm decay exponent; ``wave_sine_kernel`` traces the smeared kernel of
sin(t sqrt(H)) P_ac / sqrt(H) between two smeared points.
"""

import json
import logging
import threading
import weakref
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh
from scipy.stats import linregress

from .errors import ConfigurationError, WindowError
from .fields import ScalarField
from .krylov import expmv_steps, lanczos_funm
from .settings import get_settings
from .spectral import pac_apply

logger = logging.getLogger(__name__)

DECAY_EXPONENT = -1.5
WRAP_THRESHOLD = 1e-4
DENSE_WAVE_LIMIT = 4096
# free wave kernel mass: int_0^inf |K| dt = 1 / (4 pi |x - y|)
FREE_WAVE_MASS = 1.0 / (4.0 * np.pi)
TAIL_FRACTION = 0.1


def _check_times(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ConfigurationError("time grid must be a non-empty 1-d sequence")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ConfigurationError("time grid must be non-negative and strictly increasing")
    return t


def _shell_mask(grid):
    """Nodes on the outermost layer of the box (either side of every face)."""
    index = np.arange(grid.n)
    edge = (index == 0) | (index == grid.n - 1)
    return edge[:, None, None] | edge[None, :, None] | edge[None, None, :]


@dataclass
class Evolution:
    """Snapshots of e^{itH} f0 with the conserved quantities and the wrap-around monitor."""

    grid: object
    times: np.ndarray
    sup_norms: np.ndarray
    masses: np.ndarray
    energies: np.ndarray
    shell_fractions: np.ndarray
    truncated: bool
    states: Optional[np.ndarray] = field(default=None, repr=False)

    def state(self, j):
        if self.states is None:
            raise ConfigurationError("propagate was called with keep=False; no states stored")
        return ScalarField(self.grid, self.states[j])

    def to_dict(self):
        return {
            'grid': self.grid.info(),
            'times': self.times.tolist(),
            'sup_norms': self.sup_norms.tolist(),
            'masses': self.masses.tolist(),
            'energies': self.energies.tolist(),
            'shell_fractions': self.shell_fractions.tolist(),
            'truncated': self.truncated,
        }


def propagate(H, f0, t_grid, settings=None, keep=True):
    """
    f(t_j) = e^{i t_j H} f0 for every t_j in ``t_grid``.

    Each interval is covered by Krylov substeps of relative error below
    ``settings.krylov_tol``. If the mass on the outermost layer exceeds
    WRAP_THRESHOLD of the total at a reported time, the result is flagged
    as truncated.
    """
    settings = get_settings(settings)
    t = _check_times(t_grid)
    grid = H.grid
    shape = grid.shape
    dv = grid.cell_volume
    shell = _shell_mask(grid)

    def matvec(x):
        return 1j * H.apply_values(x.reshape(shape)).ravel()

    u = np.asarray(f0.values, dtype=complex).ravel()
    now = 0.0
    step = None
    sups, masses, energies, fractions = [], [], [], []
    states = np.empty((len(t),) + shape, dtype=complex) if keep else None
    for j, tj in enumerate(t):
        if tj > now:
            u, step, n_steps = expmv_steps(matvec, u, tj - now, settings.krylov_tol,
                                           settings.krylov_max_dim, step)
            logger.debug("t=%.4g reached in %d Krylov steps", tj, n_steps)
            now = tj
        values = u.reshape(shape)
        density = np.abs(values) ** 2
        total = density.sum()
        sups.append(float(np.sqrt(density.max())))
        masses.append(float(np.sqrt(total * dv)))
        energies.append(float(np.real(np.vdot(values, H.apply_values(values))) * dv))
        fractions.append(float(density[shell].sum() / total) if total > 0 else 0.0)
        if keep:
            states[j] = values

    fractions = np.array(fractions)
    truncated = bool(np.any(fractions > WRAP_THRESHOLD))
    if truncated:
        first = t[np.argmax(fractions > WRAP_THRESHOLD)]
        logger.warning("wrap-around: boundary layer holds %.2e of the mass at t=%.4g; "
                       "results from there on are truncated", fractions.max(), first)
    return Evolution(grid, t, np.array(sups), np.array(masses), np.array(energies), fractions,
                     truncated, states)


@dataclass
class DecayFit:
    """Log-log fit of sup-norms against time."""

    times: np.ndarray
    sup_norms: np.ndarray
    window: Tuple[float, float]
    exponent: float
    exponent_stderr: float
    amplitude_ratio: float
    truncated: bool = False

    @property
    def deviation(self):
        """Distance of the fitted exponent from -3/2."""
        return abs(self.exponent - DECAY_EXPONENT)

    def to_dict(self):
        return {
            'times': [float(t) for t in self.times],
            'sup_norms': [float(s) for s in self.sup_norms],
            'window': list(self.window),
            'exponent': self.exponent,
            'exponent_stderr': self.exponent_stderr,
            'amplitude_ratio': None if np.isnan(self.amplitude_ratio) else self.amplitude_ratio,
            'deviation': self.deviation,
            'truncated': self.truncated,
        }

    def save(self, prefix):
        """Write ``prefix``.csv (t, sup-norm) and ``prefix``.json."""
        np.savetxt(f"{prefix}.csv", np.column_stack([self.times, self.sup_norms]),
                   delimiter=',', header='t,value', comments='')
        with open(f"{prefix}.json", 'w') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def fit_decay(times, sup_norms, window, l1_norm=None):
    """
    Least-squares slope of log sup-norm against log t over ``window``.

    The amplitude ratio compares the last sup-norm inside the window with
    (4 pi t)^{-3/2} ||f0||_1; it is NaN without ``l1_norm``.
    """
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sup_norms, dtype=float)
    if times.ndim != 1 or times.shape != sups.shape:
        raise ConfigurationError(f"times and sup-norms must be matching 1-d arrays, "
                                 f"got {times.shape} and {sups.shape}")
    if np.any(np.diff(times) <= 0):
        raise WindowError("times must be strictly increasing")
    if np.any(sups <= 0):
        raise WindowError("sup-norms must be positive")
    lo, hi = (float(w) for w in window)
    slack = 1e-12 * max(1.0, abs(hi))
    if not 0 < lo < hi or lo < times[0] - slack or hi > times[-1] + slack:
        raise WindowError(f"fit window {window} must lie inside the sampled times "
                          f"[{times[0]:g}, {times[-1]:g}]")
    inside = (times >= lo - slack) & (times <= hi + slack)
    if inside.sum() < 3:
        raise WindowError(f"fit window {window} holds {inside.sum()} samples; at least 3 are needed")
    fit = linregress(np.log(times[inside]), np.log(sups[inside]))
    amplitude = float('nan')
    if l1_norm:
        last = np.flatnonzero(inside)[-1]
        amplitude = float(sups[last] * (4 * np.pi * times[last]) ** 1.5 / l1_norm)
    return DecayFit(times, sups, (lo, hi), float(fit.slope), float(fit.stderr), amplitude)


def decay_experiment(H, report, f0, window, times=None, n_times=9, settings=None):
    """
    Evolve P_ac f0 and fit the sup-norm decay over ``window``.

    ``report`` supplies the bound states to project out (None skips the
    projection). Samples default to ``n_times`` geometric points across
    the window.
    """
    lo, hi = window
    if times is None:
        if not 0 < lo < hi:
            raise WindowError(f"decay window {window} must satisfy 0 < t1 < t2")
        times = np.geomspace(lo, hi, n_times)
    f = pac_apply(report, f0) if report is not None else f0
    evolution = propagate(H, f, times, settings, keep=False)
    l1_norm = float(np.sum(np.abs(f0.values)) * f0.grid.cell_volume)
    fit = fit_decay(evolution.times, evolution.sup_norms, window, l1_norm)
    fit.truncated = evolution.truncated
    logger.info("decay exponent %.4f +- %.2e over %s (amplitude ratio %.4f)",
                fit.exponent, fit.exponent_stderr, window, fit.amplitude_ratio)
    return fit


def _sine_over_root(E, t):
    """sin(t sqrt(E)) / sqrt(E), continued by sinh for E < 0 and by t at E = 0."""
    s = np.sqrt(np.asarray(E, dtype=complex))
    zero = s == 0
    values = np.sin(t * s) / np.where(zero, 1.0, s)
    return np.real(np.where(zero, t, values))


def _cosine_root(E, t):
    return np.real(np.cos(t * np.sqrt(np.asarray(E, dtype=complex))))


def _smeared_delta(grid, point, smoothing):
    """Unit-mass grid function at ``point``: a node delta, or a gaussian of variance smoothing^2 / 2."""
    if smoothing == 0:
        out = np.zeros(grid.shape)
        out[grid.index_of(point)] = 1.0
    else:
        d = (grid.points() - np.asarray(point, dtype=float) + grid.L / 2) % grid.L - grid.L / 2
        out = np.exp(-np.sum(d ** 2, axis=-1) / smoothing ** 2)
    return out / (out.sum() * grid.cell_volume)


# H -> (energies, Q); entries die with their operator or on clear_dense_cache()
_DENSE_CACHE = weakref.WeakKeyDictionary()
_DENSE_LOCK = threading.Lock()


def dense_spectrum(H, chunk=256):
    """Full eigendecomposition of H as a dense hermitian matrix, cached per operator."""
    with _DENSE_LOCK:
        cached = _DENSE_CACHE.get(H)
        if cached is not None:
            return cached
        grid = H.grid
        N = grid.size
        if N > DENSE_WAVE_LIMIT:
            raise ConfigurationError(f"dense spectrum needs at most {DENSE_WAVE_LIMIT} grid points, got {N}")
        eye = np.eye(N, dtype=complex)
        M = np.empty((N, N), dtype=complex)
        for start in range(0, N, chunk):
            block = eye[start:start + chunk].reshape((-1,) + grid.shape)
            M[:, start:start + chunk] = H.apply_values(block).reshape(-1, N).T
        logger.info("dense eigendecomposition of %d x %d", N, N)
        result = eigh(0.5 * (M + M.conj().T))
        _DENSE_CACHE[H] = result
        return result


def clear_dense_cache():
    with _DENSE_LOCK:
        _DENSE_CACHE.clear()


@dataclass
class WaveKernelTrace:
    """
    Smeared kernel K(t) of sin(t sqrt(H)) P_ac / sqrt(H) between smeared deltas at x and y.

    ``point_values`` holds the bound-state part sum_n sinh(t l_n) / l_n
    <g_x, f_n> <f_n, g_y>, l_n = sqrt(-E_n); I1 and I2 integrate the ac part
    only, the finite-speed check uses the sum of both.
    """

    x: Tuple[float, float, float]
    y: Tuple[float, float, float]
    times: np.ndarray
    values: np.ndarray
    smoothing: float
    method: str
    point_values: Optional[np.ndarray] = None

    @property
    def distance(self):
        return float(np.linalg.norm(np.subtract(self.x, self.y)))

    @property
    def i1(self):
        return float(trapezoid(self.times * np.abs(self.values), self.times))

    @property
    def i2(self):
        return float(trapezoid(np.abs(self.values), self.times))

    @property
    def tail_fraction(self):
        """Share of I1 collected over the last tenth of the time range."""
        t = self.times
        cut = t[-1] - TAIL_FRACTION * (t[-1] - t[0])
        late = t >= cut
        total = self.i1
        if total == 0 or late.sum() < 2:
            return 0.0
        return float(trapezoid(t[late] * np.abs(self.values[late]), t[late]) / total)

    @property
    def total_values(self):
        """Kernel of sin(t sqrt(H)) / sqrt(H): ac part plus bound-state part."""
        if self.point_values is None:
            return self.values
        return self.values + self.point_values

    @property
    def finite_speed_cutoff(self):
        """Times below this precede the arrival of the smeared wave front."""
        if self.smoothing == 0:
            return 0.9 * self.distance
        return self.distance - 4 * self.smoothing

    @property
    def finite_speed_ratio(self):
        """sup |K| before the front over sup |K| of the total kernel; NaN if no sample precedes the front."""
        total = np.abs(self.total_values)
        early = self.times < self.finite_speed_cutoff
        peak = total.max()
        if not early.any() or peak == 0:
            return float('nan')
        return float(total[early].max() / peak)

    def to_dict(self):
        return {
            'x': list(self.x), 'y': list(self.y),
            'distance': self.distance,
            'smoothing': self.smoothing,
            'method': self.method,
            't_max': float(self.times[-1]),
            'i1': self.i1,
            'i2': self.i2,
            'i2_times_distance': self.i2 * self.distance,
            'tail_fraction': self.tail_fraction,
            'finite_speed_ratio': self.finite_speed_ratio,
            'point_max': 0.0 if self.point_values is None else float(np.abs(self.point_values).max()),
            'max_imag': float(np.abs(np.imag(self.values)).max()),
        }

    def save(self, prefix):
        """Write ``prefix``.csv (t, Re K) and ``prefix``.json."""
        np.savetxt(f"{prefix}.csv", np.column_stack([self.times, np.real(self.values)]),
                   delimiter=',', header='t,value', comments='')
        with open(f"{prefix}.json", 'w') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _bound_mask(H, report, energies):
    """Dense modes counted as bound: the report's negative states, else those below -zero_band."""
    if report is None:
        return energies < -H.zero_band()
    return np.arange(len(energies)) < report.negative_count


def _dense_trace(H, report, gx, gy, t):
    """(ac part, bound-state part) from the full eigendecomposition; energies are ascending."""
    energies, Q = dense_spectrum(H)
    bound = _bound_mask(H, report, energies)
    a = Q.conj().T @ gx.ravel()
    b = Q.conj().T @ gy.ravel()
    # negative energies continue to sinh(t l) / l
    weights = _sine_over_root(energies[None, :], t[:, None])
    products = a.conj() * b * H.grid.cell_volume
    return weights[:, ~bound] @ products[~bound], weights[:, bound] @ products[bound]


def _point_trace(report, gx, gy, t):
    """sum_n sinh(t l_n) / l_n <g_x, f_n> <f_n, g_y> over the report's bound states."""
    values = np.zeros(len(t), dtype=complex)
    if report is None:
        return values
    dv = report.grid.cell_volume
    for i in report.bound_indices:
        phi = report.vectors[i]
        weight = np.vdot(gx, phi) * np.vdot(phi, gy) * dv ** 2
        values = values + _sine_over_root(report.energies[i], t) * weight
    return values


def _project_ac(report, g):
    """Remove the components along the report's bound states."""
    if report is None:
        return g
    dv = report.grid.cell_volume
    out = g.astype(complex)
    for i, label in enumerate(report.classification):
        if label == 'negative':
            phi = report.vectors[i]
            out = out - np.vdot(phi, out) * dv * phi
    return out


def _krylov_trace(H, report, gx, gy, t, settings):
    if t[0] != 0:
        raise ConfigurationError("the Krylov wave path needs a time grid starting at t = 0")
    if len(t) > 1 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0.0):
        raise ConfigurationError("the Krylov wave path needs a uniform time grid")
    shape = H.grid.shape
    dv = H.grid.cell_volume

    def matvec(x):
        return H.apply_values(x.reshape(shape)).ravel()

    def funm(v, func):
        return lanczos_funm(matvec, v, func, settings.krylov_tol, settings.krylov_max_dim)

    values = np.zeros(len(t), dtype=complex)
    if len(t) == 1:
        return values
    tau = t[1] - t[0]
    gx = gx.ravel()
    previous = np.zeros(H.grid.size, dtype=complex)
    current = funm(_project_ac(report, gy).ravel(), lambda E: _sine_over_root(E, tau))
    values[1] = np.vdot(gx, current) * dv
    # u(t + tau) = 2 cos(tau sqrt(H)) u(t) - u(t - tau)
    for j in range(2, len(t)):
        previous, current = current, 2 * funm(current, lambda E: _cosine_root(E, tau)) - previous
        values[j] = np.vdot(gx, current) * dv
    return values


def wave_sine_kernel(H, report, x, y, t_grid, smoothing=None, method='auto', settings=None):
    """
    K(t) = <g_x, sin(t sqrt(H)) P_ac / sqrt(H) g_y> for unit-mass smeared deltas g_x, g_y.

    ``smoothing`` sets the smearing width (default two grid steps, 0 means
    node deltas). Bound states are the report's negative pairs (below
    -zero_band without a report). The dense path splits the full
    eigendecomposition (at most DENSE_WAVE_LIMIT points) into the ac and
    bound parts; the Krylov path projects the bound states out of g_y, runs
    the cosine recurrence on a uniform time grid and adds the bound part
    from the report's eigenpairs.
    """
    settings = get_settings(settings)
    t = _check_times(t_grid)
    grid = H.grid
    if smoothing is None:
        smoothing = 2 * grid.h
    if smoothing < 0:
        raise ConfigurationError(f"smoothing must be non-negative, got {smoothing}")
    if method == 'auto':
        method = 'dense' if grid.size <= DENSE_WAVE_LIMIT else 'krylov'
    gx = _smeared_delta(grid, x, smoothing)
    gy = _smeared_delta(grid, y, smoothing)
    if method == 'dense':
        values, point = _dense_trace(H, report, gx, gy, t)
    elif method == 'krylov':
        values = _krylov_trace(H, report, gx, gy, t, settings)
        point = _point_trace(report, gx, gy, t)
    else:
        raise ConfigurationError(f"Unknown wave method: {method}; available methods: ['auto', 'dense', 'krylov']")
    trace = WaveKernelTrace(tuple(float(c) for c in x), tuple(float(c) for c in y), t, values,
                            float(smoothing), method, point)
    logger.info("wave kernel |x-y|=%.3g: I1=%.4g I2=%.4g (%s)", trace.distance, trace.i1, trace.i2, method)
    return trace


@dataclass
class WaveBoundReport:
    pairs: List[dict]
    max_i1: float
    max_i2_times_distance: float
    max_finite_speed_ratio: float
    free_value: float = FREE_WAVE_MASS

    @property
    def i2_ratio(self):
        """Largest I2 |x - y| relative to the free value."""
        return self.max_i2_times_distance / self.free_value

    def to_dict(self):
        return {
            'pairs': self.pairs,
            'max_i1': self.max_i1,
            'max_i2_times_distance': self.max_i2_times_distance,
            'max_finite_speed_ratio': self.max_finite_speed_ratio,
            'free_value': self.free_value,
            'i2_ratio': self.i2_ratio,
        }


def wave_bound_checks(traces):
    """Tabulate I1, I2 |x - y| and the finite-speed ratio over a set of point pairs."""
    pairs = [trace.to_dict() for trace in traces]
    if not pairs:
        return WaveBoundReport([], 0.0, 0.0, float('nan'))
    ratios = [p['finite_speed_ratio'] for p in pairs if not np.isnan(p['finite_speed_ratio'])]
    report = WaveBoundReport(
        pairs,
        max(p['i1'] for p in pairs),
        max(p['i2_times_distance'] for p in pairs),
        max(ratios) if ratios else float('nan'),
    )
    logger.info("wave bounds over %d pairs: max I1 %.4g, max I2|x-y| %.4g (free %.4g)",
                len(pairs), report.max_i1, report.max_i2_times_distance, FREE_WAVE_MASS)
    return report
