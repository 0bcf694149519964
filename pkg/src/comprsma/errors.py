"""Shared error types that are not tied to the tape."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""
