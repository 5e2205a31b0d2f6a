"""Exception hierarchy shared across volaforge."""


class VolaforgeError(Exception):
    """Base class for all package errors."""


class SizingError(VolaforgeError):
    """A sample is too short for the requested split or window."""


class ConfigError(VolaforgeError):
    """Invalid simulation, model or run configuration."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]


class AlignmentError(VolaforgeError):
    """Inputs are not aligned on a common date index."""

    def __init__(self, message, dates=()):
        super().__init__(message)
        self.dates = list(dates)


class BurnInError(VolaforgeError):
    """A lag window reaches before the first observation."""


class DataError(VolaforgeError):
    """Malformed input data (NaN, ragged days, bad headers)."""


class DimensionError(VolaforgeError):
    """Feature vector length does not match the fitted model."""


class SingularityError(VolaforgeError):
    """Design matrix is rank deficient and no fallback was allowed."""


class ConvergenceError(VolaforgeError):
    """Iterative solver hit its iteration limit."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingError(VolaforgeError):
    """Neural network training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
