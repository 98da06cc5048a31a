"""Exception hierarchy shared by every holireg module."""


class HoliregError(Exception):
    """Base class for all errors raised by holireg."""


class StructuralError(HoliregError, ValueError):
    """Input has the wrong shape or violates a structural precondition."""


class SingularMatrixError(HoliregError, ArithmeticError):
    """A matrix that must be invertible is (numerically) singular.

    Parameters
    ----------
    message : str
        Human readable description.
    condition : float, optional
        Estimated condition number of the offending matrix.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegreesOfFreedomError(HoliregError, ValueError):
    """Residual degrees of freedom are not positive (n <= p)."""


class UndefinedCorrelationError(HoliregError, ValueError):
    """Correlation requested for a zero-variance vector."""


class ParameterError(HoliregError, ValueError):
    """A hyperparameter lies outside its admissible range."""


class ProtocolError(HoliregError, RuntimeError):
    """A lazy-constraint callback broke the engine contract."""


class ParseError(HoliregError, ValueError):
    """Input file could not be parsed."""
