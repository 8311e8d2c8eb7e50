"""Exception types shared across the package."""


class MNLError(Exception):
    """Base class for all package errors."""


class ValidationError(MNLError, ValueError):
    """Malformed input: bad assortment, out-of-range values, bad config field."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(MNLError, ValueError):
    """A quantity is undefined at the given point (zero probability, support mismatch)."""


class CapacityError(MNLError):
    """Problem too large for an enumeration-based routine."""


class SequenceError(MNLError):
    """A scripted sequence ran out before the requested round."""


class SolverError(MNLError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
