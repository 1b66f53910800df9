"""Exception types shared across the package."""


class SeqcompError(Exception):
    """Base class for all package errors."""


class ValidationError(SeqcompError, ValueError):
    """Input data or configuration failed validation (CLI exit code 1)."""


class DatasetError(ValidationError):
    """A dataset file is missing or malformed.

    ``path`` and ``line`` locate the offending input when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InfeasibleSplitError(ValidationError):
    pass


class UndefinedStatisticError(SeqcompError, ValueError):
    """A statistic has a zero denominator (e.g. an all-tied sequence)."""


class ConvergenceError(SeqcompError, RuntimeError):
    """An iterative solver hit its iteration cap (CLI exit code 2)."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")


class LeakageError(SeqcompError, RuntimeError):
    """Statistics estimated outside the training split were used for fitting."""
