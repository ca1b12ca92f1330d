"""Exception types raised across the toolkit."""


class ArgumentError(ValueError):
    """An id, size or numeric argument is out of range."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not support it."""


class ConfigurationError(ValueError):
    """A learner, adversary or experiment configuration is inconsistent."""


class CapacityError(RuntimeError):
    """Exhaustive enumeration would exceed the supported size."""


class DivergenceError(RuntimeError):
    """A learned value table became non-finite."""
