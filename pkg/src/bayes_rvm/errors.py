"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: input/config problems exit 1,
numerical failures exit 2 and I/O failures exit 3.
"""


class RVMError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(RVMError, ValueError):
    """Malformed or out-of-contract argument values."""


class ConfigurationError(RVMError, ValueError):
    """Invalid configuration, e.g. a sampler that cannot be set up."""


class ParseError(InputError):
    """A data file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending record.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedMetricError(InputError):
    """A metric whose denominator is empty (e.g. no positive labels)."""


class NumericalError(RVMError, ArithmeticError):
    """A numerical contract was violated while sampling or optimizing."""

    exit_code = 2
