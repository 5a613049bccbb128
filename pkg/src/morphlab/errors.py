"""Exception types shared across the package."""


class MorphLabError(Exception):
    """Base class for all package errors."""

    category = "error"


class ShapeError(MorphLabError, ValueError):
    category = "shape"


class NonFiniteError(MorphLabError, ValueError):
    category = "nonfinite"


class TapeError(MorphLabError, RuntimeError):
    category = "tape"


class ConfigError(MorphLabError, ValueError):
    category = "config"


class FormatError(MorphLabError, ValueError):
    category = "format"


class NoDataError(MorphLabError, ValueError):
    category = "no-data"


class OptimizationError(MorphLabError, RuntimeError):
    """Raised when a loss goes non-finite during an optimization loop.

    Carries the step index and the last finite iterate so callers can
    resume or inspect.
    """

    category = "optimization"

    def __init__(self, message, step=None, last_finite=None):
        super().__init__(message)
        self.step = step
        self.last_finite = last_finite
