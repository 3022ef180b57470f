"""Exception hierarchy.

Every error raised by the package derives from :class:`ProbMetroError`.
Input-shaped problems also derive from :class:`ValueError` so that callers
using the usual numpy/sklearn conventions can catch them generically.
"""


class ProbMetroError(Exception):
    """Base class for all package errors."""


class NumericalError(ProbMetroError, ArithmeticError):
    """A numerical routine failed to converge or complete."""


class ConvergenceFailure(NumericalError):
    pass


class CompletionFailure(NumericalError):
    """Orthonormal completion of an isometry ran out of independent columns."""


class NotSquare(ProbMetroError, ValueError):
    pass


class NotHermitian(ProbMetroError, ValueError):
    pass


class DimensionOverflow(ProbMetroError, ValueError):
    pass


class DimensionMismatch(ProbMetroError, ValueError):
    pass


class InvalidState(ProbMetroError, ValueError):
    pass


class InvalidOperator(ProbMetroError, ValueError):
    """A Kraus family or POVM violates completeness or positivity."""


class StepTooSmall(ProbMetroError, ValueError):
    pass


class NonFiniteEntries(ProbMetroError, ValueError):
    pass


class BadRank(ProbMetroError, ValueError):
    pass


class NotADistribution(ProbMetroError, ValueError):
    pass


class NotNormalized(ProbMetroError, ValueError):
    pass


class UnsupportedDerivative(ProbMetroError, ValueError):
    """The derivative has weight outside the support of the state.

    The quantum Fisher information is formally infinite in that case.
    """

    def __init__(self, message, leakage):
        super().__init__(message)
        self.leakage = leakage


class FavorableSetEmpty(ProbMetroError, ValueError):
    pass


class VanishingSuccessProbability(ProbMetroError, ValueError):
    pass


class DeltaBelowOne(ProbMetroError, ValueError):
    pass


class NotUnit(ProbMetroError, ValueError):
    pass


class OutOfRange(ProbMetroError, ValueError):
    pass


class QuadratureOrderTooLow(ProbMetroError, ValueError):
    pass


class EmptyFavorableSet(ProbMetroError, ValueError):
    pass


class Unidentifiable(ProbMetroError, ValueError):
    pass


class DegenerateP(ProbMetroError, ValueError):
    pass


class ScenarioError(ProbMetroError, ValueError):
    """A scenario file is malformed; ``where`` names the offending field or line."""

    def __init__(self, message, where=""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
