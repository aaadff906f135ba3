"""Exception types shared across the package."""


class PennetError(Exception):
    """Base class for all package errors."""


class CapacityError(PennetError):
    """A dense object would exceed the configured size cap."""


class ContractError(PennetError, ValueError):
    """An input violates a precondition (non-Hermitian, not a state, ...)."""


class ThresholdError(PennetError, ValueError):
    """A constructive builder was asked for parameters outside its feasible range."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class InconsistencyError(PennetError):
    """Two certificates contradict each other. Never expected to fire."""
