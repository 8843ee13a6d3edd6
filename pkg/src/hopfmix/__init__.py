"""Mixing spectra of the stochastic Hopf normal form.

The package discretises the Fokker-Planck operator of the noisy Hopf
oscillator, computes its leading eigenpairs, compares them with
small-noise asymptotics, and reconstructs correlation functions and power
spectra from them. Monte Carlo tools provide independent checks.
"""

from .core import GridField, Grid2D, ModelParams, SparseOperator, build_grid, weighted_inner
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    GridMismatchError,
    HopfMixError,
    NumericalError,
    PairingError,
    RegimeError,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "Grid2D",
    "GridField",
    "SparseOperator",
    "build_grid",
    "weighted_inner",
    "HopfMixError",
    "ConfigurationError",
    "DomainError",
    "RegimeError",
    "GridMismatchError",
    "NumericalError",
    "DivergenceError",
    "ConvergenceError",
    "PairingError",
    "__version__",
]
