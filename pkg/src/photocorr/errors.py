"""Exception types raised across the toolkit."""


class PhotocorrError(Exception):
    """Base class for all toolkit errors."""


class TruncationError(PhotocorrError):
    """The chosen photon-number cutoff leaves too much probability mass behind."""


class UndefinedMomentError(PhotocorrError, ValueError):
    """A normalized moment is undefined, e.g. for a vacuum-only state."""


class SeriesDivergenceError(PhotocorrError):
    """A moment series is not decreasing at its truncation point."""


class ConditioningError(PhotocorrError):
    """A linear inversion is singular, ill-conditioned or leaves a large residual."""


class FitError(PhotocorrError):
    """Nonlinear fit did not converge or produced a degenerate solution."""


class OracleMismatchError(PhotocorrError):
    """A construction disagrees with its brute-force oracle."""


class ResolutionError(PhotocorrError):
    """A sampling grid is too coarse or too narrow for the quantity computed on it."""


class HeraldError(PhotocorrError, ValueError):
    """A heralding event has zero probability."""


class ConfigError(PhotocorrError):
    """An experiment configuration is malformed or violates its schema."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.detail = message
