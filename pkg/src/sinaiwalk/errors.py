"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid model or experiment parameters."""


class UsageError(ValueError):
    """A call that violates an operation's preconditions."""
