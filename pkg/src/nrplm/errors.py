class NRPLMError(Exception):
    """Base class for toolkit errors."""


class ParameterError(NRPLMError, ValueError):
    """Invalid argument, shape or configuration value."""


class NumericError(NRPLMError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class FormatError(NRPLMError, ValueError):
    """Malformed on-disk artifact (vocabulary cache, lookup blob, checkpoint)."""


class ConsistencyError(NRPLMError, RuntimeError):
    """Internal state violates an invariant, e.g. a word without a random index."""
