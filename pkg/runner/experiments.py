"""
The experiments behind the CLI subcommands.

Each ``run_<name>(config, settings)`` returns an ExperimentResult: a JSON
summary, the series to write as CSV, the plots to draw and the verdict of
its acceptance checks (None when the experiment has none).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.assembly import assemble_t_hat, bil_bound, direct_t_hat, kernel_mass
from src.ellipsoid import (EllipsoidFrame, coordinate_identity_residuals, d_rho_surface_integral,
                           foliated_integral, surface_integral)
from src.errors import PreconditionError, WindowError
from src.evolve import (DENSE_WAVE_LIMIT, FREE_WAVE_MASS, clear_dense_cache, decay_experiment, dense_spectrum,
                        wave_bound_checks, wave_sine_kernel)
from src.fields import PotentialSpec, build_field
from src.lemmas import lemma_harness
from src.norms import membership_report, norm_chain_check
from src.rho_algebra import (Atom, RhoKernel, compose, hat, identity_kernel, invert_neumann, lattice,
                             u_norm)
from src.settings import worker_count
from src.spectral import agmon_fit, assemble_h, birman_schwinger_count, eigensolve, zero_regularity

from .config import FREE_DECAY_TOLERANCE, PERTURBED_DECAY_TOLERANCE

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    name: str
    summary: dict
    passed: Optional[bool] = None
    # name -> (t, values) written as CSV
    series: dict = field(default_factory=dict)
    # file name -> (plot function, payload)
    plots: dict = field(default_factory=dict)
    # prefix -> object with save(prefix)
    artifacts: dict = field(default_factory=dict)

    def line(self):
        """One-line summary for the terminal."""
        verdict = {None: 'done', True: 'PASS', False: 'FAIL'}[self.passed]
        headline = self.summary.get('headline', '')
        return f"[{self.name}] {verdict} {headline}".rstrip()


def run_norms(config, settings):
    block = config.block('norms')
    report = membership_report(config.A, config.V, config.grid, settings, block['quantities'])
    summary = {'membership': report.to_dict()}
    if block['chain'] and config.A.has_vector:
        summary['norm_chain'] = list(norm_chain_check(config.A, config.grid, settings))
    try:
        summary['bil_bound'] = bil_bound(report)
    except KeyError:
        summary['bil_bound'] = None
    summary['headline'] = f"X member={report.member_x} Y member={report.member_y}"
    return ExperimentResult('norms', summary)


def run_spectrum(config, settings):
    block = config.block('spectrum')
    H = assemble_h(config.grid, config.A, config.V)
    window = tuple(block['window']) if block['window'] else None
    report = eigensolve(H, block['k'], window, settings)
    summary = {'spectrum': report.to_dict()}
    passed = None
    if block['count']:
        count = birman_schwinger_count(config.grid, config.A, config.V, settings)
        summary['birman_schwinger_count'] = count
        if report.negative_count < len(report.energies):
            passed = count == report.negative_count
        else:
            # every computed pair is bound: the count may exceed k
            passed = count >= report.negative_count
    if block['regularity']:
        summary['regularity'] = zero_regularity(config.grid, config.A, config.V,
                                                trend=block['trend'], settings=settings).to_dict()
    if report.negative_count:
        try:
            summary['agmon'] = agmon_fit(report, report.bound_indices[0], tuple(block['agmon_window'])).to_dict()
        except (PreconditionError, WindowError) as exc:
            summary['agmon'] = {'error': str(exc)}
    summary['headline'] = (f"{report.negative_count} bound state(s), "
                           f"E0={report.energies[0]:.6g}")
    return ExperimentResult('spectrum', summary, passed,
                            plots={'spectrum.svg': ('ladder', report.to_dict())},
                            artifacts={'spectrum': report})


def run_decay(config, settings):
    block = config.block('decay')
    H = assemble_h(config.grid, config.A, config.V)
    report = None if config.is_free else eigensolve(H, block['k'], settings=settings)
    f0 = build_field(PotentialSpec.from_dict(block['initial']), config.grid, part='scalar')
    window = tuple(block['window'])
    fit = decay_experiment(H, report, f0, window, n_times=block['n_times'], settings=settings)
    tolerance = block['tolerance']
    if tolerance is None:
        tolerance = FREE_DECAY_TOLERANCE if config.is_free else PERTURBED_DECAY_TOLERANCE
    passed = fit.deviation <= tolerance
    if config.is_free:
        passed = passed and abs(fit.amplitude_ratio - 1) <= block['amplitude_tolerance']
    summary = {'decay': fit.to_dict(), 'tolerance': tolerance, 'free': config.is_free,
               'headline': f"exponent {fit.exponent:.4f} +- {fit.exponent_stderr:.1e}"}
    if fit.truncated:
        summary['headline'] += ' (truncated by wrap-around)'
    return ExperimentResult('decay', summary, passed,
                            series={'decay': (fit.times, fit.sup_norms)},
                            plots={'decay.svg': ('decay', fit.to_dict())})


def _point_pairs(block, seed):
    if block['pairs']:
        return [(tuple(x), tuple(y)) for x, y in block['pairs']]
    rng = np.random.default_rng(seed)
    lo, hi = block['distance']
    pairs = []
    for _ in range(block['n_pairs']):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        d = rng.uniform(lo, hi)
        pairs.append((tuple(-0.5 * d * u), tuple(0.5 * d * u)))
    return pairs


def run_wave(config, settings):
    block = config.block('wave')
    H = assemble_h(config.grid, config.A, config.V)
    report = eigensolve(H, block['k'], settings=settings)
    t = np.arange(0.0, block['t_max'] + 0.5 * block['dt'], block['dt'])
    method = block['method']
    if method == 'auto':
        method = 'dense' if config.grid.size <= DENSE_WAVE_LIMIT else 'krylov'
    pairs = _point_pairs(block, config.seed)

    def trace(pair):
        return wave_sine_kernel(H, report, pair[0], pair[1], t, block['smoothing'], method, settings)

    try:
        if method == 'dense':
            # fill the cache once before the workers share it
            dense_spectrum(H)
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            traces = list(pool.map(trace, pairs))
    finally:
        clear_dense_cache()
    checks = wave_bound_checks(traces)
    if config.is_free:
        worst = max(abs(p['i2_times_distance'] / FREE_WAVE_MASS - 1) for p in checks.pairs)
        speed = checks.max_finite_speed_ratio
        passed = worst <= block['free_tolerance'] and (math.isnan(speed) or speed <= block['finite_speed_tolerance'])
        headline = f"max |4 pi I2 |x-y| - 1| = {worst:.3e}, finite speed {speed:.2e}"
    else:
        passed = checks.i2_ratio <= block['perturbed_factor']
        headline = f"max I2 |x-y| = {checks.i2_ratio:.3f} x free"
    series = {f"wave_{i}": (tr.times, np.real(tr.values)) for i, tr in enumerate(traces)}
    payload = [{'label': f"|x-y|={tr.distance:.2f}", 't': tr.times.tolist(), 'K': np.real(tr.values).tolist()}
               for tr in traces]
    return ExperimentResult('wave', {'wave': checks.to_dict(), 'free': config.is_free, 'headline': headline},
                            passed, series=series, plots={'wave.svg': ('traces', payload)})


def _quadrature_corpus():
    """(f, grad f) pairs on world points for the differentiation check."""
    corpus = []
    for center, width in (((0.0, 0.0, 0.0), 1.0), ((0.3, -0.4, 0.2), 0.7), ((1.0, 1.0, 0.0), 1.5),
                          ((-0.8, 0.0, 0.5), 0.9), ((0.0, 0.6, -0.6), 1.2)):
        spec = PotentialSpec.single('gaussian', 1.0, width, center)

        def f(p, spec=spec):
            return spec.evaluate(p.y, 'scalar')

        def df(p, spec=spec):
            grad = np.stack([spec.evaluate(p.y, 'scalar', alpha) for alpha in ((1, 0, 0), (0, 1, 0), (0, 0, 1))],
                            axis=-1)
            return np.sum(grad * p.v, axis=-1)

        corpus.append((f, df))
    return corpus


def run_quadrature(config, settings):
    block = config.block('quadrature')
    frame = EllipsoidFrame(*block['foci'])
    gaussian = PotentialSpec.single('gaussian')
    integral = foliated_integral(frame, lambda y: gaussian.evaluate(y, 'scalar'), block['rho_max'], settings)
    integral_error = abs(integral - math.pi ** 1.5) / math.pi ** 1.5

    identities = {}
    for rho in block['rho']:
        for name, value in coordinate_identity_residuals(frame, rho, settings).items():
            identities[name] = max(identities.get(name, 0.0), value)

    dif_error = 0.0
    for f, df in _quadrature_corpus():
        for rho in block['rho']:
            h = 1e-3 * rho
            fd = (surface_integral(frame, rho + h, f, settings)
                  - surface_integral(frame, rho - h, f, settings)) / (2 * h)
            exact = d_rho_surface_integral(frame, rho, f, df, settings)
            dif_error = max(dif_error, abs(exact - fd) / max(abs(exact), 1e-300))

    spec = config.V if config.V.scalar_terms and config.V.order_available('scalar') >= 1 else gaussian
    s = block['dilation']
    lemmas = {}
    dilation_error = 0.0
    for lemma in block['lemmas']:
        result = lemma_harness(lemma, spec, frame, settings)
        entry = result.to_dict()
        if lemma in ('L1', 'L2', 'L3'):
            dilated = lemma_harness(lemma, spec.dilated(s), frame.dilated(s), settings)
            entry['dilated_ratio'] = dilated.ratio
            if not result.undefined:
                dilation_error = max(dilation_error, abs(dilated.ratio / result.ratio - 1))
        lemmas[lemma] = entry

    passed = (integral_error <= block['integral_tolerance'] and dif_error <= block['dif_tolerance']
              and max(identities.values()) <= block['identity_tolerance']
              and dilation_error <= block['dilation_tolerance'])
    summary = {
        'foliated_gaussian': {'value': integral, 'reference': math.pi ** 1.5, 'relative_error': integral_error},
        'coordinate_identities': identities,
        'dif_relative_error': dif_error,
        'lemmas': lemmas,
        'dilation_error': dilation_error,
        'headline': f"gaussian err {integral_error:.1e}, dif err {dif_error:.1e}",
    }
    return ExperimentResult('quadrature', summary, passed)


def _random_kernel(rng, rho, weights, points, point_weights, scale):
    density = rng.standard_normal((len(rho), len(points), len(points))) * np.exp(-rho)[:, None, None]
    kernel = RhoKernel(rho, weights, density, points, points, point_weights)
    return kernel * (scale / u_norm(kernel, 'LINF', 'LINF'))


def _algebra_suite(block, seed, settings):
    rng = np.random.default_rng(seed)
    rho, weights = lattice(block['rho_max'], block['n_rho'])
    n = block['n_points']
    points = rng.uniform(-1.0, 1.0, (n, 3))
    point_weights = np.full(n, 1.0 / n)

    excess = 0.0
    for _ in range(block['n_random']):
        T = _random_kernel(rng, rho, weights, points, point_weights, rng.uniform(0.2, 2.0))
        S = _random_kernel(rng, rho, weights, points, point_weights, rng.uniform(0.2, 2.0))
        lhs = u_norm(compose(T, S), 'LINF', 'LINF')
        rhs = u_norm(T, 'LINF', 'LINF') * u_norm(S, 'LINF', 'LINF')
        excess = max(excess, lhs / rhs - 1)

    T = _random_kernel(rng, rho, weights, points, point_weights, 0.5)
    S = invert_neumann(T, settings)
    residual = u_norm(T + S + compose(T, S), 'LINF', 'LINF')

    # (I + c delta_a)^{-1} = sum_n (-c)^n delta_{n a}
    step = rho[1] - rho[0]
    a, c = 8 * step, 0.5
    identity = identity_kernel(rho, weights, points, point_weights)
    unit = identity.atoms[0].matrix
    geometric = identity.like(atoms=[Atom(a, c * unit)])
    inverse = invert_neumann(geometric, settings)
    expected = {m: (-c) ** m for m in range(1, int(rho[-1] / a + 1e-9) + 1)}
    geometric_error = 0.0
    for atom in inverse.atoms:
        m = int(round(atom.position / a))
        coefficient = expected.pop(m, 0.0) if abs(atom.position - m * a) < 1e-9 else 0.0
        geometric_error = max(geometric_error, float(np.abs(atom.matrix - coefficient * unit).max()))
    if expected:
        geometric_error = max(geometric_error, max(abs(v) for v in expected.values()))
    return {'submultiplicative_excess': max(excess, 0.0), 'neumann_residual': residual,
            'geometric_error': geometric_error}


def run_algebra(config, settings):
    block = config.block('algebra')
    frame = EllipsoidFrame(*block['foci'])
    kernel = assemble_t_hat(block['part'], config.A, config.V, None, None, frame, block['rho_max'], settings)
    consistency = []
    for lam in block['lams']:
        assembled = complex(hat(kernel, lam)[0, 0])
        direct = direct_t_hat(block['part'], config.A, config.V, None, None, frame, block['rho_max'], lam,
                              settings)
        error = abs(assembled - direct) / max(abs(direct), 1e-300)
        consistency.append({'lam': lam, 'assembled': [assembled.real, assembled.imag],
                            'direct': [direct.real, direct.imag], 'relative_error': error})
    worst = max(entry['relative_error'] for entry in consistency)
    suite = _algebra_suite(block, config.seed, settings)
    passed = (worst <= block['assembly_tolerance'] and suite['submultiplicative_excess'] <= 1e-12
              and suite['neumann_residual'] <= block['neumann_tolerance'] and suite['geometric_error'] <= 1e-12)
    summary = {
        'assembly': consistency,
        'kernel_mass': float(kernel_mass(kernel)[0, 0]),
        'suite': suite,
        'headline': f"{block['part']} assembly err {worst:.1e}, Neumann residual {suite['neumann_residual']:.1e}",
    }
    return ExperimentResult('algebra', summary, passed)


RUNNERS = {
    'norms': run_norms,
    'spectrum': run_spectrum,
    'decay': run_decay,
    'wave': run_wave,
    'quadrature': run_quadrature,
    'algebra': run_algebra,
}


def run_experiment(name, config, settings):
    logger.info("running %s on n=%d L=%g", name, config.grid.n, config.grid.L)
    return RUNNERS[name](config, settings)

