"""Exception types shared by all modules."""


class HeatReflectError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(HeatReflectError, ValueError):
    """An input violates the documented preconditions."""


class DomainError(HeatReflectError, ValueError):
    """Inputs are valid individually but fall outside the formula's regime."""


class UnsupportedConfiguration(HeatReflectError, NotImplementedError):
    """The requested discretization is not supported."""


class NumericalFailure(HeatReflectError, ArithmeticError):
    """A linear solve or factorization failed.

    ``condition`` carries the condition estimate when one is available.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class PreconditionViolation(HeatReflectError, RuntimeError):
    """A structural relation required by a transfer computation does not hold."""

    def __init__(self, relation, defect, threshold):
        super().__init__(
            f"{relation}: defect {defect:.3e} exceeds threshold {threshold:.3e}"
        )
        self.relation = relation
        self.defect = defect
        self.threshold = threshold
