"""Exception types shared across the package.

The CLI maps these onto process exit codes (config 2, data 3, numeric 4).
"""


class ConfigError(ValueError):
    """Invalid configuration value or incompatible option combination."""


class DataError(RuntimeError):
    """Dataset missing, malformed, or conflicting with the requested action."""


class NumericError(RuntimeError):
    """Non-finite value encountered where the pipeline requires finite math."""
