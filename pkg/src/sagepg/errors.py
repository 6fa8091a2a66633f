"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration, dimension mismatch, or bad argument."""


class InvalidStateError(ValueError):
    """Environment state violates a transition precondition."""


class InvalidBatchError(ValueError):
    """Batch does not satisfy an estimator's preconditions."""


class StabilityError(ValueError):
    """Policy parameters lie outside the environment's stable region."""


class BuzenOverflowError(OverflowError):
    """Linear-domain convolution overflowed; use the log-domain variant."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""
