"""Exception types shared across the package."""


class MpirError(Exception):
    """Base class for all package errors."""


class ShapeError(MpirError, ValueError):
    """Array dimensions do not match what an operation expects."""


class ConfigError(MpirError, ValueError):
    """Invalid run configuration."""


class DataError(MpirError, ValueError):
    """Input data cannot be used (constant column, too short, ...)."""


class ParseError(DataError):
    """Malformed CSV or results file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyWindowError(DataError):
    """A raw series is too short to produce a single window."""


class TrainingError(MpirError, RuntimeError):
    """Optimization produced a non-finite value."""


class NumericalError(MpirError, RuntimeError):
    """A numerical routine diverged or produced non-finite output."""
