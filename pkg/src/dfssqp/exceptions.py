"""Exception hierarchy for the dfssqp package."""


class DfssqpError(Exception):
    """Base class for all package errors."""


class ValidationError(DfssqpError):
    """A configuration or problem definition failed validation."""


class CapabilityError(DfssqpError):
    """An oracle was requested that the problem does not provide."""


class DomainError(DfssqpError):
    """An oracle evaluation left the valid domain (non-finite value)."""


class NumericalError(DfssqpError):
    """A linear-algebra step failed in a way regularization should prevent."""
