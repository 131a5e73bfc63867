"""Exception types shared across the package."""


class CotrainError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CotrainError, ValueError):
    """Input violates a value-level precondition (non-finite, empty, out of range)."""


class ShapeError(CotrainError, ValueError):
    """Input violates a dimension contract."""


class PreconditionError(CotrainError, RuntimeError):
    """A mathematical precondition (e.g. a rank requirement) does not hold."""


class DivergenceError(CotrainError, RuntimeError):
    """A limit was requested but the feedback operator has spectral radius >= 1."""

    def __init__(self, message: str, rho: float):
        super().__init__(message)
        self.rho = float(rho)


class ConditioningError(CotrainError, RuntimeError):
    """A linear solve is too ill-conditioned to trust."""
