class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""
