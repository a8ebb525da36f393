"""Exception hierarchy shared by every rigidlab module."""


class RigidLabError(Exception):
    """Base class for all errors raised by rigidlab."""


class InvalidParameters(RigidLabError, ValueError):
    """A precondition on the parameters of an operation does not hold."""


class ShapeMismatch(RigidLabError, ValueError):
    """Dimensions, fields or indices of the operands do not line up."""


class BudgetExceeded(RigidLabError):
    """An allocation would exceed the configured memory budget."""


class InvariantViolation(RigidLabError):
    """A post-condition failed; this indicates a bug, not bad input."""
