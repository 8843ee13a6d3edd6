"""Small-noise mixing spectra of the stochastic Hopf normal form.

Below the bifurcation (delta < 0) the spectrum is that of the planar
Ornstein-Uhlenbeck process linearised at the origin: a triangular array
lambda_ln = (l + n) delta + i (n - l) gamma with Laguerre-harmonic
eigenfunctions. Above it (delta > 0) there are two families: a triangular
array attached to the unstable origin and parabolas attached to the limit
cycle, whose eigenfunctions are harmonics of the asymptotic phase times
Hermite polynomials of the rescaled distance to the cycle.

Adjoint eigenfunctions are returned as densities per unit area, so that
``weighted_inner(psi, adjoint, uniform)`` on a Cartesian grid is the
biorthogonal pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import GridField, Grid2D, ModelParams
from .errors import ConfigurationError, DomainError, RegimeError

FAMILIES = ("stable_point", "unstable_point", "limit_cycle")


def hermite(l: int, x):
    """Physicists' Hermite polynomial H_l(x) by three-term recurrence."""
    if l < 0:
        raise ConfigurationError("degree must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if l == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, l):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def laguerre(l: int, alpha: int, x):
    """Generalised Laguerre polynomial L_l^alpha(x) by three-term recurrence."""
    if l < 0:
        raise ConfigurationError("degree must be >= 0")
    if alpha < 0:
        raise ConfigurationError("alpha must be >= 0")
    x = np.asarray(x, dtype=float)
    L_prev = np.ones_like(x)
    if l == 0:
        return L_prev
    L = 1.0 + alpha - x
    for k in range(1, l):
        L_prev, L = L, ((2 * k + 1 + alpha - x) * L - (k + alpha) * L_prev) / (k + 1)
    return L


def stable_point_density(params: ModelParams, r):
    """Stationary density of the linearised process in polar coordinates
    (per dr dtheta), -(1/2pi)(2 delta/eps^2) r exp(delta r^2/eps^2)."""
    d, e2 = params.delta, params.epsilon**2
    r = np.asarray(r, dtype=float)
    return -(1.0 / (2 * math.pi)) * (2 * d / e2) * r * np.exp(d * r * r / e2)


def limit_cycle_density(params: ModelParams, r):
    """Gaussian radial density about the cycle (per dr dtheta),
    (1/2pi) sqrt(2 delta/(pi eps^2)) exp(-2 delta (r - sqrt(delta))^2 / eps^2)."""
    d, e2 = params.delta, params.epsilon**2
    r = np.asarray(r, dtype=float)
    return (1.0 / (2 * math.pi)) * math.sqrt(2 * d / (math.pi * e2)) * np.exp(
        -2 * d * (r - math.sqrt(d)) ** 2 / e2
    )


@dataclass(frozen=True)
class AnalyticEigenpair:
    """One small-noise eigenvalue with its eigenfunction and adjoint.

    ``n`` may be negative only for the limit-cycle family. The callables
    take polar (r, theta) arrays. The unstable-point family carries no
    eigenfunctions (none are derived for it).
    """

    family: str
    l: int
    n: int
    lam: complex
    eigenfunction: Optional[Callable] = field(default=None, repr=False, compare=False)
    adjoint_eigenfunction: Optional[Callable] = field(default=None, repr=False, compare=False)


@dataclass
class AnalyticSpectrum:
    """Eigenpairs sorted by descending real part (ties by ascending |Im|)
    with the decorrelation time of the leading family."""

    params: ModelParams
    pairs: list
    tau: float

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def family(self, name: str) -> list:
        return [p for p in self.pairs if p.family == name]

    def find(self, family: str, l: int, n: int) -> AnalyticEigenpair:
        for p in self.pairs:
            if p.family == family and p.l == l and p.n == n:
                return p
        raise KeyError((family, l, n))

    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])


def _sort(pairs):
    return sorted(pairs, key=lambda p: (-p.lam.real, abs(p.lam.imag), p.lam.imag))


def _stable_point_functions(params: ModelParams, l: int, n: int):
    d, e2 = params.delta, params.epsilon**2
    lo, hi = min(l, n), max(l, n)
    m = n - l
    norm = math.sqrt(math.factorial(lo) / math.factorial(hi))
    scale = math.sqrt(-d / e2)

    def psi(r, theta):
        r = np.asarray(r, dtype=float)
        z = -d * r * r / e2
        radial = norm * (scale * r) ** abs(m) * laguerre(lo, abs(m), z)
        return radial * np.exp(1j * m * np.asarray(theta))

    def psi_adj(r, theta):
        r = np.asarray(r, dtype=float)
        # stable_point_density / r, written without the 0/0 at the origin
        area_density = (-d / (math.pi * e2)) * np.exp(d * r * r / e2)
        return psi(r, theta) * area_density

    return psi, psi_adj


def subcritical_spectrum(params: ModelParams, l_max: int = 3, n_max: int = 3) -> AnalyticSpectrum:
    """Stable-point family for delta < 0, 0 <= l <= l_max, 0 <= n <= n_max."""
    if params.delta >= 0:
        raise RegimeError("subcritical spectrum requires delta < 0")
    if params.epsilon <= 0:
        raise ConfigurationError("small-noise eigenfunctions require epsilon > 0")
    d, g = params.delta, params.gamma
    pairs = []
    for l in range(l_max + 1):
        for n in range(n_max + 1):
            lam = complex((l + n) * d + 0.0, (n - l) * g + 0.0)  # + 0.0 clears signed zeros
            psi, adj = _stable_point_functions(params, l, n)
            pairs.append(AnalyticEigenpair("stable_point", l, n, lam, psi, adj))
    return AnalyticSpectrum(params, _sort(pairs), tau=-1.0 / d)


def _limit_cycle_functions(params: ModelParams, l: int, n: int):
    d, eps, b = params.delta, params.epsilon, params.beta
    sq = math.sqrt(d)
    norm = 1.0 / math.sqrt(2.0**l * math.factorial(l))

    def psi(r, theta):
        r = np.asarray(r, dtype=float)
        phase = np.asarray(theta) - b * np.log(r / sq)
        return norm * np.exp(1j * n * phase) * hermite(l, math.sqrt(2 * d) / eps * (r - sq))

    def psi_adj(r, theta):
        r = np.asarray(r, dtype=float)
        return psi(r, theta) * limit_cycle_density(params, r) / r

    return psi, psi_adj


def supercritical_spectrum(params: ModelParams, l_max: int = 2, n_max: int = 3) -> AnalyticSpectrum:
    """Unstable-point family (0 <= l, n <= l_max, n_max) and limit-cycle
    family (0 <= l <= l_max, -n_max <= n <= n_max) for delta > 0."""
    if params.delta <= 0:
        raise RegimeError("supercritical spectrum requires delta > 0")
    if params.epsilon <= 0:
        raise ConfigurationError("small-noise eigenfunctions require epsilon > 0")
    d, g, b, e2 = params.delta, params.gamma, params.beta, params.epsilon**2
    omega = params.omega_f
    pairs = []
    for l in range(l_max + 1):
        for n in range(n_max + 1):
            lam = complex(-(l + n + 2) * d, -(l - n) * g)
            pairs.append(AnalyticEigenpair("unstable_point", l, n, lam))
    for l in range(l_max + 1):
        for n in range(-n_max, n_max + 1):
            if l == 0:
                re = -n * n * e2 * (1 + b * b) / (2 * d)
            else:
                re = -2.0 * l * d
            psi, adj = _limit_cycle_functions(params, l, n)
            pairs.append(AnalyticEigenpair("limit_cycle", l, n, complex(re, n * omega), psi, adj))
    tau = 2 * d / (e2 * (1 + b * b))
    return AnalyticSpectrum(params, _sort(pairs), tau=tau)


def small_noise_spectrum(params: ModelParams, l_max: int = 2, n_max: int = 3) -> AnalyticSpectrum:
    """Dispatch on the sign of delta; there is no expansion at delta = 0."""
    if params.delta < 0:
        return subcritical_spectrum(params, l_max, n_max)
    if params.delta > 0:
        return supercritical_spectrum(params, l_max, n_max)
    raise RegimeError("no small-noise expansion at criticality (delta = 0)")


def evaluate_eigenfield(pair: AnalyticEigenpair, grid: Grid2D, adjoint: bool = False) -> GridField:
    """Sample the eigenfunction (or adjoint) of ``pair`` at the cell centres."""
    func = pair.adjoint_eigenfunction if adjoint else pair.eigenfunction
    if func is None:
        raise ConfigurationError(f"no eigenfunction available for the {pair.family} family")
    x, y = grid.flat_coordinates()
    r = np.hypot(x, y)
    if np.any(r == 0):
        raise DomainError("a cell centre sits at the origin; use an even number of cells")
    values = np.broadcast_to(func(r, np.arctan2(y, x)), r.shape).astype(complex)
    return GridField(grid, values)
