"""Exception types shared across the package."""


class StepAuditError(Exception):
    """Base class for package errors."""


class InvalidParameterError(StepAuditError, ValueError):
    """An argument violates a documented precondition."""


class ConstructionError(StepAuditError, ValueError):
    """An instance or schedule could not be built.

    Carries an optional ``report`` attribute with diagnostic detail
    (e.g. a failed condition report).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericFaultError(StepAuditError, ArithmeticError):
    """A non-finite value appeared mid-run; the message names the step."""
