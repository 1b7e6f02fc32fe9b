"""Exception hierarchy shared by every module of the package."""


class TTError(Exception):
    """Base class for all errors raised by ``ttinv``."""


class ShapeMismatchError(TTError, ValueError):
    """Operands have incompatible mode sizes, orders or matrix shapes."""


class BoundsError(TTError, IndexError):
    """A multi-index lies outside the tensor."""


class SizeCapError(TTError, MemoryError):
    """A dense materialization would exceed the configured entry cap."""


class DegenerateInputError(TTError, ValueError):
    """The input cannot be processed, e.g. an all-zero tensor to invert."""


class NumericFailureError(TTError, ArithmeticError):
    """NaN or Inf appeared during an iteration."""


class DiagonalizationError(TTError, ArithmeticError):
    """A factor pair could not be jointly diagonalized to the requested accuracy.

    The index of the offending factor (1-based) is stored in ``factor``.
    """

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class InvertibilityError(TTError, ArithmeticError):
    """A spectral quantity that must be nonzero is zero."""


class CertificateStateError(TTError, ValueError):
    """A quantity was requested from a certificate that does not support it."""


class BudgetExceededError(TTError, RuntimeError):
    """Exhaustive enumeration would exceed the allotted budget."""


class RegimeError(TTError, ValueError):
    """Discretization parameters lie outside the regime a result needs."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DomainError(TTError, ValueError):
    """A physical quantity is outside its admissible domain."""


class UnsupportedBoundaryError(TTError, ValueError):
    """The requested boundary condition is not implemented for this operator."""
