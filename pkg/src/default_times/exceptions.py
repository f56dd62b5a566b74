"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`DefaultTimesError`. Validation failures additionally derive from
:class:`ValueError` so that callers using plain ``except ValueError`` keep
working.
"""


class DefaultTimesError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DefaultTimesError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(InvalidInputError):
    """Inputs make a closed form undefined (e.g. a zero denominator)."""


class UnsupportedParameterError(InvalidInputError):
    """The requested routine does not cover this parameter region."""


class TransformDivergenceError(DefaultTimesError, ArithmeticError):
    """The Riccati coefficients blow up before the requested horizon.

    Attributes
    ----------
    time : float or None
        Integration time at which the blow-up was detected.
    level : int or None
        Recursion level, filled in by the default-law routines.
    """

    def __init__(self, message, time=None, level=None):
        super().__init__(message)
        self.time = time
        self.level = level

    def with_level(self, level):
        err = TransformDivergenceError(f"{self} (level {level})", self.time, level)
        return err


class SingularCoefficientError(DefaultTimesError, ArithmeticError):
    """A closed-form denominator vanishes."""


class EnumerationLimitError(InvalidInputError):
    """Path enumeration requested beyond the supported depth."""


class TruncationError(DefaultTimesError, ArithmeticError):
    """An infinite sum could not be truncated within the requested bound.

    Attributes
    ----------
    bound : float
        Tail bound achieved when the index cap was reached.
    """

    def __init__(self, message, bound):
        super().__init__(message)
        self.bound = bound


class EmptyLawError(DefaultTimesError, ArithmeticError):
    """Every simulated path was censored."""
