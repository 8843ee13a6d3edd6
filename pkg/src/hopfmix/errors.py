"""Exception hierarchy shared by all modules."""


class HopfMixError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HopfMixError, ValueError):
    """Invalid parameters, grid settings or flag combinations."""


class DomainError(HopfMixError, ValueError):
    """A point or argument lies outside the domain of a formula."""


class RegimeError(HopfMixError, ValueError):
    """The requested object does not exist for this sign of delta."""


class GridMismatchError(HopfMixError, ValueError):
    """Fields or operators defined on different grids were combined."""


class NumericalError(HopfMixError, ArithmeticError):
    """A numerical procedure produced non-finite values or failed to solve."""


class DivergenceError(NumericalError):
    """A simulated trajectory left the finite floating-point range."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ConvergenceError(NumericalError):
    """Arnoldi iteration stopped before all requested pairs converged.

    ``values``, ``vectors`` and ``residuals`` carry the converged subset.
    """

    def __init__(self, message, values=None, vectors=None, residuals=None):
        super().__init__(message)
        self.values = values
        self.vectors = vectors
        self.residuals = residuals


class PairingError(NumericalError):
    """Eigenvalues of the generator and of its adjoint could not be matched."""
