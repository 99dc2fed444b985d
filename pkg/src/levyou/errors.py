"""Exception hierarchy shared by all levyou modules."""


class LevyOUError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(LevyOUError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(LevyOUError, ValueError):
    """A model or experiment configuration cannot be used as given."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericError(LevyOUError, ArithmeticError):
    """A numerical routine failed to reach its requested accuracy."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class CoverageError(NumericError):
    """Mass leaked outside a lattice beyond the allowed tolerance."""


class ResolutionError(NumericError):
    """A grid cannot resolve the requested quantity within size limits."""


class DomainError(NumericError):
    """A function was evaluated outside the range where it is defined."""


class FitDegenerateError(NumericError):
    """Too few usable rows to fit a decay law."""


class PreconditionError(LevyOUError):
    """A model hypothesis required by an operation does not hold."""


class ConsistencyError(LevyOUError):
    """Checker outputs contradict an implication that must hold."""
