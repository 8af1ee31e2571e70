"""Exception types shared across the package.

The CLI maps ``ConfigError`` to exit code 2 and ``DataError`` to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid parameter or configuration value."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class DomainError(ValueError):
    """Argument outside the domain of a function (e.g. non-positive relative price)."""


class PreconditionError(ValueError):
    """Inputs do not satisfy the hypothesis an operation requires."""


class NumericError(ArithmeticError):
    """A computation produced non-finite output or broke an exact identity."""
