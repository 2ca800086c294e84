"""Exception hierarchy shared by the library and the CLI.

The CLI maps :class:`DataError` to exit code 2 and :class:`ConfigurationError`
to exit code 3.
"""


class ThermocastError(Exception):
    exit_code = 1


class UsageError(ThermocastError, ValueError):
    """An API was called with arguments outside its contract."""


class DataError(ThermocastError):
    """Input data cannot support the requested operation."""

    exit_code = 2


class ConfigurationError(ThermocastError):
    """Shapes, specs or manifests do not agree with each other."""

    exit_code = 3


class NonFiniteError(ThermocastError, FloatingPointError):
    """A forward op produced NaN or Inf."""
