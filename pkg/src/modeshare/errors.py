"""Exception hierarchy shared by every stage.

The CLI maps each class onto a process exit code.
"""


class ModeShareError(Exception):
    exit_code = 1


class UsageError(ModeShareError, ValueError):
    """Bad arguments or configuration supplied by the caller."""

    exit_code = 1


class DataError(ModeShareError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class NumericalError(ModeShareError, ArithmeticError):
    """A computation produced a non-finite or undefined result."""

    exit_code = 3


class NumericalWarning(RuntimeWarning):
    pass
