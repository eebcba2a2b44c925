"""Exception hierarchy.

Validation problems derive from :class:`ValidationError`; everything that
signals a numerical breakdown derives from :class:`NumericalFailure`.  The
command line maps the two families onto distinct exit codes.
"""


class FracGleError(Exception):
    """Base class for all package errors."""


class ValidationError(FracGleError, ValueError):
    pass


class NumericalFailure(FracGleError, ArithmeticError):
    pass


class DomainError(ValidationError):
    """Parameters outside the admissible or documented range."""


class GridMismatch(ValidationError):
    """Fine and coarse grids are not nested."""


class SoeMismatch(ValidationError):
    """A sum-of-exponentials approximation does not cover the needed range."""


class PlanInfeasible(ValidationError):
    """An MLMC plan needs a grid finer than the configured cap."""


class DegenerateFit(ValidationError):
    """Rate fit asked for on zero, negative or too few error values."""


class QuadratureFailure(NumericalFailure):
    pass


class NotPositiveDefinite(NumericalFailure):
    pass


class CertificationFailure(NumericalFailure):
    pass


class NonFinite(NumericalFailure):
    """A solver state became inf or nan."""
