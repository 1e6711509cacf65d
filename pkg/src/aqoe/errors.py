"""Exception types shared across the package."""


class AqoeError(Exception):
    """Base class for all package errors."""


class ValidationError(AqoeError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(AqoeError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""


class TruncationError(NumericalError):
    """Probability leaked past the basis cutoff; increase ``n_cut``."""


class DegenerateCycleError(NumericalError):
    """The cycle transition matrix has no unique stationary state."""


class NotEngineError(AqoeError):
    """The configuration does not operate as a heat engine."""
