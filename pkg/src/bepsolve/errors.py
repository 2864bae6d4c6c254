"""Exception types shared across the package."""


class BepError(Exception):
    """Base class for solver errors."""


class InvalidInputError(BepError, ValueError):
    """Input violates a documented precondition (dimension, feasibility, ...)."""


class NumericalError(BepError, ArithmeticError):
    """A non-finite value appeared during evaluation.

    ``snapshot`` holds the last finite iterate when one is available.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class DiagnosticError(BepError, RuntimeError):
    """A diagnostic could not be computed (e.g. empty grid solution set)."""

    def __init__(self, message, min_residual=None):
        super().__init__(message)
        self.min_residual = min_residual
