"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2 and numerical failures exit 3.
"""


class RecauditError(Exception):
    """Base class for all package errors."""


class ConfigError(RecauditError, ValueError):
    """Invalid argument or experiment configuration."""


class DataError(RecauditError):
    """Input data is malformed or inconsistent with the request."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownIdError(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown id"


class PreconditionError(DataError):
    """An audit was requested for an infeasible subject (e.g. target already rated)."""


class EmptyCandidatesError(PreconditionError):
    """Every item has been rated; nothing is left to recommend."""


class NumericalError(RecauditError, ArithmeticError):
    """Non-finite values or an ill-posed linear system."""


class SingularSystemError(NumericalError):
    pass


class TrainingDivergedError(NumericalError):
    pass


class UnsupportedModeError(RecauditError):
    """Operation requires white-box access that the objective does not provide."""


class BudgetError(ConfigError):
    """Exhaustive search would exceed the evaluation budget."""
