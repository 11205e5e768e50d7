"""Exception hierarchy shared by all sylverse modules.

Validation problems derive from ``ValueError`` and numerical failures from
``ArithmeticError`` so that generic handlers keep working.
"""

from typing import Any, Optional


class SylverseError(Exception):
    """Base class for every error raised by sylverse."""


class ValidationError(SylverseError, ValueError):
    """Invalid input data.

    Parameters
    ----------
    message : str
        Human-readable description.
    field : str, optional
        Name of the offending field or argument.
    """

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(message)
        self.field = field


class DimensionError(ValidationError):
    """Shape mismatch or non-square input."""


class DomainError(ValidationError):
    """Argument outside its mathematical domain."""


class PreconditionError(ValidationError):
    """An operation precondition is violated; the message names the remedy."""


class SingularMatrixError(SylverseError, ArithmeticError):
    """Matrix is singular to working precision.

    Parameters
    ----------
    message : str
        Human-readable description.
    pivot : int
        Index of the first pivot found to be negligible.
    """

    def __init__(self, message: str, pivot: int) -> None:
        super().__init__(message)
        self.pivot = pivot


class AccuracyError(SylverseError, ArithmeticError):
    """A requested accuracy could not be reached.

    Parameters
    ----------
    message : str
        Human-readable description.
    estimate : Any, optional
        Best value obtained before giving up.
    error_estimate : float, optional
        Estimated error of ``estimate``.
    """

    def __init__(self, message: str, estimate: Any = None, error_estimate: Optional[float] = None) -> None:
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate


class StiffnessError(AccuracyError):
    """ODE integration stalled; the quadrature route is the suggested fallback."""
