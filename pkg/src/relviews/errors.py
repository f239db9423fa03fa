"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration file or parameter value (CLI exit code 2)."""


class NumericError(RuntimeError):
    """Non-finite values or failed numeric procedure (CLI exit code 3)."""
