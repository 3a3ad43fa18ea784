"""Exception hierarchy for magdecay.

Every error raised on purpose by the package derives from ``MagdecayError``.
Bad arguments additionally derive from ``ValueError`` and numerical failures
from ``RuntimeError`` so callers catching builtin exceptions keep working.
"""


class MagdecayError(Exception):
    """Base class of all magdecay errors."""


class ConfigurationError(MagdecayError, ValueError):
    """Invalid settings profile, override or experiment configuration."""


class UnsupportedDerivativeError(MagdecayError, ValueError):
    """A derivative was requested that the potential kind does not provide."""


class InvalidFieldError(MagdecayError, ValueError):
    """Field samples are non-finite, complex where real is required, or misshaped."""


class SingularityError(MagdecayError, ValueError):
    """A kernel was evaluated on its diagonal x = y."""


class WindowError(MagdecayError, ValueError):
    """An integration or fitting window is empty or sits on the noise floor."""


class DegenerateEllipsoidError(MagdecayError, ValueError):
    """The ellipsoid parameter rho does not exceed the focal distance r."""


class GridMismatchError(MagdecayError, ValueError):
    """Two kernels or fields live on incompatible grids."""


class UnsupportedPairError(MagdecayError, ValueError):
    """The requested (input space, output space) operator norm is not available."""


class MissingNormError(MagdecayError, KeyError):
    """A norm required by a composite bound is absent from a report."""


class PreconditionError(MagdecayError, ValueError):
    """An operation was called outside of its precondition."""


class NotContractiveError(MagdecayError, RuntimeError):
    """A Neumann series was requested for an operator of norm >= 1."""


class ConvergenceError(MagdecayError, RuntimeError):
    """An iterative solver did not reach its tolerance."""


class OnSpectrumError(MagdecayError, ValueError):
    """The spectral parameter lies on the spectrum of the operator."""


class SingularMatrixError(MagdecayError, RuntimeError):
    """A matrix (or its Schur complement) is numerically singular."""
