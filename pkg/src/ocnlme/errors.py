"""Exception hierarchy shared by all modules."""


class OcnlmeError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigurationError(OcnlmeError):
    """Inconsistent dimensions, unknown names, bad option values."""

    exit_code = 4


class ValidationError(OcnlmeError):
    """Input data violating a documented precondition."""

    exit_code = 4


class NumericalError(OcnlmeError):
    exit_code = 5


class IllConditioned(NumericalError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class NonConvergence(NumericalError):
    """An iterative solver stopped at its iteration cap."""

    def __init__(self, message, last_deltas=None, iterations=None):
        super().__init__(message)
        self.last_deltas = last_deltas
        self.iterations = iterations


class InputFileError(OcnlmeError):
    """A file to read is missing or unreadable."""

    exit_code = 3


class ParseError(ValidationError):
    """A malformed cell or header in an input file."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
