"""Correlation functions and power spectra from a mixing spectrum.

For observables f and g the stationary cross-correlation decomposes as

    C_{f,g}(t) = sum_{j >= 1} w_j exp(lambda_j t),

and its Fourier transform as a sum of Lorentzians,

    S_{f,g}(z) = -(1/pi) sum_{j >= 1} w_j Re(lambda_j) / ((z - Im lambda_j)^2 + Re(lambda_j)^2).

The j = 0 term (the product of means) is left out. The weights are
w_j = <psi_j, f>_mu <g, psi*_j>_mu with <a, b>_mu = sum a conj(b) mu dA.
With that ordering the decomposition reproduces C(t) = E[f(X_0) g(X_t)]
for real f and g.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GridField, weighted_inner
from .errors import ConfigurationError, GridMismatchError, NumericalError

KINDS = ("correlation", "power")


@dataclass
class SpectralSeries:
    """Reconstructed correlation (complex values over lags t) or power
    spectrum (real values over angular frequencies z)."""

    kind: str
    abscissa: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}")

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    def argmax(self) -> float:
        vals = self.values.real if np.iscomplexobj(self.values) else self.values
        return float(self.abscissa[int(np.argmax(vals))])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            if self.kind == "correlation":
                fh.write("t,re_C,im_C\n")
                for t, v in zip(self.abscissa, np.asarray(self.values, dtype=complex)):
                    fh.write(f"{t:.17g},{v.real:.17g},{v.imag:.17g}\n")
            else:
                fh.write("z,S\n")
                for z, v in zip(self.abscissa, self.values):
                    fh.write(f"{z:.17g},{v:.17g}\n")
        return path

    def manifest(self) -> dict:
        return dict(
            kind=self.kind,
            n_terms=self.n_terms,
            eigenvalues=[[float(l.real), float(l.imag)] for l in self.eigenvalues],
            weights=[[float(w.real), float(w.imag)] for w in self.weights],
        )

    def write_manifest(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.manifest(), indent=2))
        return path


def _terms(spectrum):
    """Nonzero eigenpairs, completed under conjugation.

    A complex eigenvalue whose conjugate is missing gets a partner built by
    conjugating eigenvalue, eigenfunction and adjoint.
    """
    terms = list(spectrum.pairs[1:])
    out = list(terms)
    for p in terms:
        if p.lam.imag == 0:
            continue
        if not any(abs(q.lam - p.lam.conjugate()) <= 1e-9 * max(1.0, abs(p.lam)) for q in terms):
            out.append(type(p)(p.lam.conjugate(), p.psi.conj(), p.psi_adjoint.conj(), p.residual))
    return out


def spectral_weights(spectrum, f: GridField, g: GridField) -> np.ndarray:
    """w_j for every nonzero eigenpair, in the order of :func:`_terms`."""
    mu = spectrum.invariant_density
    for fld in (f, g):
        if fld.grid != spectrum.grid:
            raise GridMismatchError("observable and spectrum live on different grids")
    return np.array([weighted_inner(p.psi, f, mu) * weighted_inner(g, p.psi_adjoint, mu) for p in _terms(spectrum)])


def _eigs(spectrum) -> np.ndarray:
    return np.array([p.lam for p in _terms(spectrum)])


def reconstruct_correlation(spectrum, f: GridField, g: GridField, t_grid) -> SpectralSeries:
    """C(t) = sum_j w_j exp(lambda_j t) over the nonzero eigenpairs."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ConfigurationError("t_grid must be nonnegative and ascending")
    if len(spectrum.pairs) < 2:
        raise ConfigurationError("the spectrum has no nonzero eigenpairs")
    w = spectral_weights(spectrum, f, g)
    lam = _eigs(spectrum)
    values = np.exp(np.outer(t, lam)) @ w
    return SpectralSeries("correlation", t, values, w, lam)


def lorentzian_sum(lam, w, z) -> np.ndarray:
    """-(1/pi) sum_j w_j Re(lambda_j) / ((z - Im lambda_j)^2 + Re(lambda_j)^2)."""
    lam = np.asarray(lam, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(lam.real >= 0):
        raise NumericalError("a term with Re(lambda) >= 0 makes the Lorentzian sum singular")
    z = np.asarray(z, dtype=float)
    a, b = lam.real, lam.imag
    kernel = -a / ((z[:, None] - b) ** 2 + a * a) / math.pi
    return kernel @ w


def reconstruct_power_spectrum(spectrum, f: GridField, g: GridField, z_grid) -> SpectralSeries:
    """Lorentzian decomposition of the power spectrum on ``z_grid``.

    The returned values are the real part of the sum; for f = g the
    imaginary parts cancel between conjugate pairs.
    """
    if len(spectrum.pairs) < 2:
        raise ConfigurationError("the spectrum has no nonzero eigenpairs")
    w = spectral_weights(spectrum, f, g)
    lam = _eigs(spectrum)
    z = np.asarray(z_grid, dtype=float)
    values = lorentzian_sum(lam, w, z).real
    return SpectralSeries("power", z, values, w, lam)


def grid_variance(spectrum, f: GridField, g: GridField | None = None) -> complex:
    """Direct covariance sum f conj(g) mu dA - (sum f mu dA)(sum conj(g) mu dA)."""
    g = f if g is None else g
    mu = spectrum.invariant_density
    one = GridField.constant(spectrum.grid)
    return weighted_inner(f, g, mu) - weighted_inner(f, one, mu) * weighted_inner(one, g, mu)


OBSERVABLES = {
    "x": lambda x, y: x,
    "y": lambda x, y: y,
    "x2": lambda x, y: x * x,
    "x3": lambda x, y: x**3,
    "r2": lambda x, y: x * x + y * y,
}


def observable(name: str, grid) -> GridField:
    """Named monomial observable sampled on ``grid``."""
    if name not in OBSERVABLES:
        raise ConfigurationError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}")
    return GridField.from_function(grid, OBSERVABLES[name])
