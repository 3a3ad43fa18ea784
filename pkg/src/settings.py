import logging
import os

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


class NumericsSettings:
    """
    Accuracy knobs shared by every quadrature, sup search and iterative solver.

    Parameters:
    - gl_order: Gauss-Legendre nodes per panel
    - phi_nodes: trapezoid nodes in the azimuthal angle
    - adaptive_tol: relative tolerance of the adaptive panel quadratures
    - adaptive_max_iter: refinement sweeps before an adaptive quadrature gives up
    - radial_panels: uniform radial panels of the spherical Kato quadrature
    - graded_panels: geometric panels toward a singular endpoint
    - candidate_stride: lattice stride of the coarse sup search
    - n_candidates: coarse maxima refined by Nelder-Mead
    - refine_maxfev: function evaluations per Nelder-Mead refinement
    - krylov_tol: error tolerance per Krylov step
    - krylov_max_dim: largest Krylov subspace before a step is split
    - neumann_tol: truncation tolerance of Neumann series
    - eig_tol: tolerance passed to the iterative eigensolvers
    """

    PROFILES = {
        'quick': {
            'gl_order': 8,
            'phi_nodes': 24,
            'adaptive_tol': 1e-7,
            'adaptive_max_iter': 30,
            'radial_panels': 8,
            'graded_panels': 10,
            'candidate_stride': 4,
            'n_candidates': 2,
            'refine_maxfev': 120,
            'krylov_tol': 1e-8,
            'krylov_max_dim': 30,
            'neumann_tol': 1e-10,
            'eig_tol': 1e-10,
        },
        'balanced': {
            'gl_order': 12,
            'phi_nodes': 32,
            'adaptive_tol': 1e-9,
            'adaptive_max_iter': 40,
            'radial_panels': 12,
            'graded_panels': 14,
            'candidate_stride': 4,
            'n_candidates': 4,
            'refine_maxfev': 200,
            'krylov_tol': 1e-10,
            'krylov_max_dim': 40,
            'neumann_tol': 1e-10,
            'eig_tol': 1e-12,
        },
        'precise': {
            'gl_order': 16,
            'phi_nodes': 48,
            'adaptive_tol': 1e-11,
            'adaptive_max_iter': 50,
            'radial_panels': 16,
            'graded_panels': 18,
            'candidate_stride': 2,
            'n_candidates': 6,
            'refine_maxfev': 400,
            'krylov_tol': 1e-12,
            'krylov_max_dim': 60,
            'neumann_tol': 1e-12,
            'eig_tol': 1e-14,
        },
    }

    # Valid ranges; set_custom clamps into them.
    LIMITS = {
        'gl_order': (2, 64),
        'phi_nodes': (4, 256),
        'adaptive_tol': (1e-14, 1e-3),
        'adaptive_max_iter': (1, 200),
        'radial_panels': (1, 128),
        'graded_panels': (1, 64),
        'candidate_stride': (1, 16),
        'n_candidates': (1, 64),
        'refine_maxfev': (10, 10000),
        'krylov_tol': (1e-15, 1e-4),
        'krylov_max_dim': (4, 500),
        'neumann_tol': (1e-15, 1e-4),
        'eig_tol': (0.0, 1e-4),
    }

    def __init__(self, profile='balanced'):
        self.profile = None
        for name, value in self.PROFILES['balanced'].items():
            setattr(self, name, value)
        self.set_profile(profile)

    def set_profile(self, profile_name):
        """Switch to one of the predefined profiles."""
        if profile_name not in self.PROFILES:
            raise ConfigurationError(
                f"Unknown profile: {profile_name}; "
                f"available profiles: {list(self.PROFILES.keys())}")
        for name, value in self.PROFILES[profile_name].items():
            setattr(self, name, value)
        self.profile = profile_name
        logger.info("Set numerics profile: %s", profile_name)
        logger.debug("  %s", self.info())
        return self

    def set_custom(self, **overrides):
        """Override individual parameters, clamped to their valid ranges."""
        for name, value in overrides.items():
            if name not in self.LIMITS:
                raise ConfigurationError(
                    f"Unknown numerics parameter: {name}; "
                    f"available parameters: {sorted(self.LIMITS)}")
            lo, hi = self.LIMITS[name]
            clamped = max(lo, min(hi, value))
            if isinstance(self.PROFILES['balanced'][name], int):
                clamped = int(round(clamped))
            setattr(self, name, clamped)
        self.profile = 'custom'
        logger.info("Custom numerics parameters set: %s", self.info())
        return self

    def copy(self):
        other = NumericsSettings.__new__(NumericsSettings)
        other.__dict__.update(self.__dict__)
        return other

    def info(self):
        """Active parameters as a plain dict (embedded into reports)."""
        data = {'profile': self.profile}
        for name in self.LIMITS:
            data[name] = getattr(self, name)
        return data


_default_settings = None


def get_settings(settings=None):
    """Return ``settings`` if given, else the process-wide default instance."""
    global _default_settings
    if settings is not None:
        return settings
    if _default_settings is None:
        _default_settings = NumericsSettings()
    return _default_settings


def worker_count():
    """Worker cap from MAGDECAY_THREADS (defaults to the CPU count)."""
    raw = os.environ.get('MAGDECAY_THREADS')
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"MAGDECAY_THREADS must be an integer, got {raw!r}")
