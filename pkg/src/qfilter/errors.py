"""Exception hierarchy shared by all qfilter modules."""


class QFilterError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(QFilterError, ValueError):
    pass


class DimensionMismatchError(QFilterError, ValueError):
    pass


class DegenerateStateError(QFilterError, ValueError):
    """Raised when a posterior quantity is requested from a zero-norm state."""


class NumericalInconsistencyError(QFilterError, ArithmeticError):
    pass


class TruncationError(QFilterError, ValueError):
    """The Fock truncation is too small for the requested state or operator.

    ``required_dim`` carries the smallest dimension that would have passed,
    when it is known.
    """

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class UndefinedStateError(QFilterError, ValueError):
    pass


class GridError(QFilterError, ValueError):
    pass


class NoJumpPossibleError(QFilterError, ValueError):
    pass


class OverflowDiagnosticError(QFilterError, ArithmeticError):
    pass


class IntegratorFailure(QFilterError, ArithmeticError):
    pass


class ConfigError(QFilterError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
