"""Exception types shared across the package."""


class DeltaVarError(Exception):
    """Base class for all library-specific errors."""


class ScaleDomainError(DeltaVarError, ValueError):
    """A time value, bound, or grid function does not fit the scale it is used with."""


class InsufficientPointsError(ScaleDomainError):
    """The scale has too few points for the requested operation."""


class ParseError(DeltaVarError, ValueError):
    """Expression source could not be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ArityError(ParseError):
    """A variable index or derivative order is outside the declared arity."""


class EvalDomainError(DeltaVarError, ValueError):
    """Evaluation left the real domain (log/sqrt of nonpositive, division by zero...)."""


class InfeasibleError(DeltaVarError, ValueError):
    """A candidate violates constraints it was required to satisfy.

    May carry a ``residuals`` attribute describing the violation.
    """

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateProblemError(DeltaVarError):
    """A stationarity or KKT system is singular."""


class NonConvergenceError(DeltaVarError):
    """An iterative solve exhausted its budget; ``best`` holds the best iterate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class BudgetExceededError(DeltaVarError):
    """A grid search would exceed its combination budget."""
