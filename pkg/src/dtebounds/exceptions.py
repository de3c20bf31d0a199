"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config 2, data 3, insufficient group 4).
"""


class DteBoundsError(Exception):
    """Base class for all package errors."""


class ConfigError(DteBoundsError, ValueError):
    """Invalid configuration, detected before any computation starts."""


class DataError(DteBoundsError, ValueError):
    """Input data violates a domain rule (duplicate keys, non-binary treatment, ...)."""


class ParseError(DataError):
    """Malformed delimited input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(DteBoundsError):
    """A required group or cell has too few units."""

    def __init__(self, message, pattern=None, size=None):
        self.pattern = pattern
        self.size = size
        super().__init__(message)
