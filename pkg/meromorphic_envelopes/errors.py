"""Exceptions raised by the numerical layers.

Validation problems are ``ValueError`` subclasses so that callers can
treat them like any other bad argument, numerical breakdowns derive
from ``ArithmeticError``:

    >>> issubclass(GateError, NumericalError)
    True
    >>> issubclass(DimensionError, ValueError)
    True
"""


class DimensionError(ValueError):
    """Matrices of incompatible shapes."""


class GeometryError(ValueError):
    """A path, disk or point violates the puncture bookkeeping."""


class PoleError(ValueError):
    """Evaluation at, or lookup of, a pole failed."""


class NumericalError(ArithmeticError):
    """A numerical procedure could not reach its tolerance."""


class TransportError(NumericalError):
    """Parallel transport broke down."""


class QuadratureError(NumericalError):
    """Quadrature or Cauchy coefficients did not converge."""


class GateError(NumericalError):
    """A section near a pole is not meromorphic at the working tolerance."""


class NotACycleError(NumericalError):
    """A trajectory expected to be closed has a nonzero boundary."""
