"""Exception hierarchy shared by every conelab module."""


class ConelabError(Exception):
    """Base class for all library errors."""


class DomainError(ConelabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class MagnitudeOverflowError(ConelabError, OverflowError):
    """The result cannot be represented as a finite double."""


class OutOfRangeError(ConelabError, ValueError):
    """The argument is outside the validated evaluation envelope."""


class PrecisionLossError(ConelabError, ArithmeticError):
    """Requested accuracy not reached.

    The best-effort result is kept on ``self.result`` so callers can decide
    whether the honest error estimate is good enough for them.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class HypothesisViolation(ConelabError, ValueError):
    """The cone model violates a standing hypothesis (e.g. P not positive)."""


class GeometryUnavailable(ConelabError, ValueError):
    """Geometric data (distances, conjugate radius) is not known for a custom spectrum."""


class InsufficientData(ConelabError, ValueError):
    """Too few samples or modes for a fit."""


class GridResolutionError(ConelabError, ValueError):
    """A radial profile is not resolved by the grid (tail check failed)."""


class BudgetExceeded(ConelabError, RuntimeError):
    """The mode budget cannot meet the truncation tolerance.

    ``partial`` holds the value summed so far and ``bound`` the remaining
    tail bound.
    """

    def __init__(self, message, partial=None, bound=None):
        super().__init__(message)
        self.partial = partial
        self.bound = bound
