"""Exception hierarchy shared by all dsswave modules."""


class DSSWaveError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DSSWaveError, ValueError):
    """Input or configuration failed a precondition."""


class NumericalError(DSSWaveError, ArithmeticError):
    """A numerical procedure failed (instability, non-convergence, ...)."""


class ExtremalOrInvalidParams(ValidationError):
    """The two horizons merge (9 m^2 Lambda >= 1) or the parameters are not positive."""


class OutOfDomain(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class OutsideOverlap(ValidationError):
    """The event is not covered by the requested target chart."""


class ChartDegenerate(ValidationError):
    pass


class QuadratureUnderResolved(NumericalError):
    pass


class CFLViolation(ValidationError):
    pass


class NonFiniteDetected(NumericalError):
    pass


class NearResonance(NumericalError):
    """The Wronskian is too small for a well-conditioned resolvent solve."""


class ContourThroughZero(NumericalError):
    pass


class SeriesDivergence(NumericalError):
    """A horizon series could not reach the requested remainder bound."""


class FitUnstable(NumericalError):
    pass


class WindowTooShort(ValidationError):
    pass


class ContourOutsideAnalyticity(ValidationError):
    pass


class ResidueMismatch(NumericalError):
    pass
