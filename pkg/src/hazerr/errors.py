"""Exception hierarchy shared across the package."""


class HazerrError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(HazerrError):
    """Parameter vector length does not match the family arity."""


class PositivityError(HazerrError):
    """A quantity required to be positive (risk value, baseline hazard) is not."""


class ConfigError(HazerrError):
    """Invalid study or run configuration."""


class NonIntegrableError(HazerrError):
    """The weighted risk function is not integrable, so no Fourier transform exists."""


class UnsupportedPairError(HazerrError):
    """No correction-function construction is available for the family/noise pair."""


class QuadratureError(HazerrError):
    """A numerical integration failed to reach its accuracy target."""


class OptimizationError(HazerrError):
    """Every optimizer start diverged or produced non-finite values."""


class SingularHessianError(HazerrError):
    """The empirical Hessian is numerically singular."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class StudyFailureError(HazerrError):
    """Too many replicate failures in a Monte-Carlo study."""
