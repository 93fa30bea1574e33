"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/input problems exit
with 2, numerical failures with 3.
"""


class NyridgeError(Exception):
    """Base class for package errors."""


class ConfigError(NyridgeError):
    """Invalid configuration, argument, or input file."""

    code = "config-error"


class DataError(ConfigError):
    """Problem with an input dataset."""

    code = "data-error"


class ParseError(DataError):
    code = "parse-error"


class MissingValueError(DataError):
    code = "missing-value"


class NonNumericError(DataError):
    code = "non-numeric"


class NumericalError(NyridgeError):
    """A numerical routine broke down (non-convergence, breakdown, ...)."""

    code = "numerical-error"


class VacuousBoundError(NumericalError):
    """The rank bound is vacuous because n * R^2 <= delta * lambda."""

    code = "vacuous-bound"
