"""Exception hierarchy shared by every module."""


class PflegoError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PflegoError, ValueError):
    """Shapes, layouts or settings that cannot work together."""


class InputError(PflegoError, ValueError):
    """Bad data handed to an operation (labels out of range, empty sets, ...)."""


class NumericError(PflegoError, ArithmeticError):
    """A computation produced NaN or Inf."""


class StateError(PflegoError, RuntimeError):
    """An object was used outside of its validity window (e.g. a stale cache)."""


class FormatError(PflegoError, ValueError):
    """A binary file does not follow the expected layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UsageError(PflegoError, ValueError):
    """Invalid command-line or config-file usage."""
