"""The stochastic Hopf normal form: drifts in Cartesian and polar
coordinates, stationary density, isochrons, Floquet structure of the limit
cycle, phase diffusion and Lie-bracket (Hormander) rank computations.

Polar vectors are given in the coordinate basis (d/dr, d/dtheta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad, simpson
from scipy.linalg import expm

from .core import ModelParams
from .errors import ConfigurationError, DomainError, RegimeError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# drifts and stationary objects


def drift_cartesian(params: ModelParams, x, y):
    """Deterministic drift (F_x, F_y) of the Cartesian SDE; vectorised."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    radial = params.delta - r2
    angular = params.gamma - params.beta * r2
    return np.array([radial * x - angular * y, angular * x + radial * y])


def drift_polar(params: ModelParams, r):
    """Ito drift (dr/dt, dtheta/dt) of the polar SDE, including the
    noise-induced term eps^2 / (2 r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("polar drift requires r > 0")
    eps2 = params.epsilon**2
    dr = params.delta * r - r**3 + eps2 / (2.0 * r)
    dtheta = params.gamma - params.beta * r**2
    return np.array([dr, np.broadcast_to(dtheta, np.shape(dr))])


def potential(params: ModelParams, r):
    """Radial potential U(r) = -delta r^2 / 2 + r^4 / 4 (constant fixed to 0)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("potential requires r >= 0")
    return -params.delta * r**2 / 2.0 + r**4 / 4.0


def _require_noise(params: ModelParams) -> None:
    if params.epsilon <= 0:
        raise ConfigurationError("epsilon = 0: the stationary density does not exist")


def _radial_exponent(params: ModelParams, r):
    eps2 = params.epsilon**2
    return params.delta * r**2 / eps2 - r**4 / (2.0 * eps2)


def _exponent_max(params: ModelParams) -> float:
    # maximum over r >= 0 of the exponent, attained at r^2 = max(delta, 0)
    return max(params.delta, 0.0) ** 2 / (2.0 * params.epsilon**2)


@lru_cache(maxsize=256)
def _radial_moments(params: ModelParams) -> tuple[float, float]:
    """(log Z, E[r^2]) with Z = int_0^inf r exp(exponent(r)) dr."""
    _require_noise(params)
    eps = params.epsilon
    shift = _exponent_max(params)
    peak = math.sqrt(max(params.delta, 0.0))
    upper = math.sqrt(max(params.delta, 0.0) + 40.0 * eps)

    def weight(r):
        return r * math.exp(_radial_exponent(params, r) - shift)

    pts = [peak] if 0 < peak < upper else None
    z0, _ = quad(weight, 0.0, upper, points=pts, limit=400, epsabs=0.0, epsrel=1e-13)
    z2, _ = quad(lambda r: r * r * weight(r), 0.0, upper, points=pts, limit=400,
                 epsabs=0.0, epsrel=1e-13)
    return math.log(z0) + shift, z2 / z0


def stationary_density(params: ModelParams, r):
    """Stationary density in polar coordinates,
    rho(r) = N / (2 pi) * r * exp(delta r^2 / eps^2 - r^4 / (2 eps^2)).

    It is a density with respect to dr dtheta, so the integral over
    r in [0, inf) and theta in [0, 2 pi) is 1 and rho(0) = 0. Divide by r
    (or use :func:`stationary_density_xy`) for the density per unit area.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("stationary density requires r >= 0")
    log_z, _ = _radial_moments(params)
    with np.errstate(divide="ignore"):
        log_rho = np.log(r) + _radial_exponent(params, r) - log_z - math.log(TWO_PI)
    return np.exp(log_rho)


def stationary_density_xy(params: ModelParams, x, y):
    """Stationary density per unit area at Cartesian points (x, y)."""
    r = np.hypot(x, y)
    log_z, _ = _radial_moments(params)
    return np.exp(_radial_exponent(params, r) - log_z - math.log(TWO_PI))


def stationary_mean_r2(params: ModelParams) -> float:
    """E[r^2] under the stationary density."""
    return _radial_moments(params)[1]


def estimate_sigma_hat(params: ModelParams) -> float:
    """Stationary standard deviation of x (equal to that of y):
    sqrt(E[r^2] / 2) by quadrature of the stationary density."""
    return math.sqrt(stationary_mean_r2(params) / 2.0)


# ---------------------------------------------------------------------------
# isochrons


def asymptotic_phase(params: ModelParams, r, theta):
    """Asymptotic phase, wrapped to [0, 2 pi).

    delta > 0: theta - beta log(r / sqrt(delta)); delta = 0: theta - beta log r;
    delta < 0: theta - beta log sqrt(r^2 - delta) + beta log sqrt(|delta|).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("asymptotic phase requires r > 0")
    d, b = params.delta, params.beta
    if d > 0:
        shift = -b * np.log(r / math.sqrt(d))
    elif d == 0:
        shift = -b * np.log(r)
    else:
        shift = -0.5 * b * np.log(r * r - d) + 0.5 * b * math.log(-d)
    return np.mod(theta + shift, TWO_PI)


def phase_frequency(params: ModelParams) -> float:
    """Rate at which the asymptotic phase advances under the deterministic flow."""
    return params.omega_f if params.delta > 0 else params.gamma


# ---------------------------------------------------------------------------
# Floquet representation of the limit cycle


def polar_jacobian(r: float, theta: float) -> np.ndarray:
    """Jacobian of (x, y) -> (r, theta)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s / r, c / r]])


def polar_jacobian_inv(r: float, theta: float) -> np.ndarray:
    """Jacobian of (r, theta) -> (x, y)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -r * s], [s, r * c]])


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def cycle_jacobian(params: ModelParams) -> np.ndarray:
    """Polar Jacobian of the deterministic field on the limit cycle."""
    _require_cycle(params)
    d, b = params.delta, params.beta
    return np.array([[-2.0 * d, 0.0], [-2.0 * b * math.sqrt(d), 0.0]])


def _require_cycle(params: ModelParams) -> None:
    if params.delta <= 0:
        raise RegimeError("no limit cycle for delta <= 0")


@dataclass(frozen=True)
class FloquetData:
    """Floquet representation M(t) = Z(t) exp(t R) about the limit cycle,
    with initial phase theta_0 = 0 and M(0) = I."""

    params: ModelParams
    period: float
    R: np.ndarray
    characteristic_exponents: tuple[float, float]
    right_vectors: tuple[np.ndarray, np.ndarray]
    left_vectors: tuple[np.ndarray, np.ndarray]

    @property
    def omega(self) -> float:
        return self.params.omega_f

    def Z(self, t: float) -> np.ndarray:
        return rotation(self.omega * t)

    def fundamental_matrix(self, t: float) -> np.ndarray:
        return self.Z(t) @ expm(t * self.R)

    def monodromy(self) -> np.ndarray:
        return expm(self.period * self.R)

    def multipliers(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.monodromy()).real)

    def right_vectors_cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvectors of R: the polar right vectors converted at (sqrt(delta), 0)."""
        P = polar_jacobian_inv(self.params.r_star, 0.0)
        return tuple(P @ e for e in self.right_vectors)

    def left_vectors_cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        """Left eigenvectors of R (covectors transform with the polar Jacobian)."""
        J = polar_jacobian(self.params.r_star, 0.0)
        return tuple(f @ J for f in self.left_vectors)

    def variational_matrix(self, t: float) -> np.ndarray:
        """Cartesian Jacobian A(t) of the drift along the cycle orbit."""
        p = self.params
        theta = self.omega * t
        x, y = p.r_star * math.cos(theta), p.r_star * math.sin(theta)
        return cartesian_drift_jacobian(p, x, y)


def cartesian_drift_jacobian(params: ModelParams, x: float, y: float) -> np.ndarray:
    d, g, b = params.delta, params.gamma, params.beta
    r2 = x * x + y * y
    return np.array([
        [d - r2 - 2 * x * x + 2 * b * x * y, -(g - b * r2) - 2 * x * y + 2 * b * y * y],
        [(g - b * r2) - 2 * b * x * x - 2 * x * y, d - r2 - 2 * y * y - 2 * b * x * y],
    ])


def floquet_data(params: ModelParams) -> FloquetData:
    """Floquet data of the limit cycle (delta > 0)."""
    _require_cycle(params)
    if params.omega_f == 0:
        raise ConfigurationError("omega_f = gamma - beta*delta = 0: the cycle is a ring of fixed points")
    sq = params.r_star
    b = params.beta
    R = polar_jacobian_inv(sq, 0.0) @ cycle_jacobian(params) @ polar_jacobian(sq, 0.0)
    return FloquetData(
        params=params,
        period=TWO_PI / abs(params.omega_f),
        R=R,
        characteristic_exponents=(-2.0 * params.delta, 0.0),
        right_vectors=(np.array([1.0, b / sq]), np.array([0.0, 1.0])),
        left_vectors=(np.array([1.0, 0.0]), np.array([-b / sq, 1.0])),
    )


def phase_diffusion_coefficient(
    params: ModelParams,
    diffusion_polar: np.ndarray | None = None,
    panels: int = 512,
) -> float:
    """Phase-diffusion coefficient Phi from the correlation matrix of the
    periodic Ornstein-Uhlenbeck process linearised about the cycle.

    C(T) = int_0^T P(T, s) D(s) P(T, s)^T ds with the propagator
    P(T, s) = M(T) M(s)^{-1} and D(s) the Cartesian image of the polar
    diffusion matrix along the orbit. The zero-exponent vectors are scaled
    so that e_2 equals the drift on the cycle and <e_2, f_2> = 1. The
    default diffusion is eps^2 diag(1, 1/delta), which yields
    -eps^2 (1 + beta^2) / delta.
    """
    fl = floquet_data(params)
    omega = params.omega_f
    sq = params.r_star
    if diffusion_polar is None:
        diffusion_polar = params.epsilon**2 * np.diag([1.0, 1.0 / params.delta])
    diffusion_polar = np.asarray(diffusion_polar, dtype=float)
    if panels < 2 or panels % 2:
        raise ConfigurationError("Simpson quadrature needs an even number of panels >= 2")

    e2 = polar_jacobian_inv(sq, 0.0) @ np.array([0.0, omega])
    f2 = (np.array([-params.beta / sq, 1.0]) / omega) @ polar_jacobian(sq, 0.0)

    T = fl.period
    ZT = fl.Z(T)
    s = np.linspace(0.0, T, panels + 1)
    integrand = np.empty_like(s)
    for i, si in enumerate(s):
        # M(T) M(s)^{-1} = Z(T) exp((T - s) R) Z(s)^{-1}, without inverting
        # the strongly contracting exp(s R)
        prop = ZT @ expm((T - si) * fl.R) @ fl.Z(si).T
        J = polar_jacobian_inv(sq, omega * si)
        D = J @ diffusion_polar @ J.T
        v = f2 @ prop
        integrand[i] = v @ D @ v
    cff = simpson(integrand, x=s)
    return float(-(omega**2) / T * cff / (e2 @ f2))


# ---------------------------------------------------------------------------
# Lie brackets and Hormander rank

VectorField = Callable[[float, float], np.ndarray]


def lie_bracket_radial(params: ModelParams, sigma: float, r: float) -> np.ndarray:
    """Closed form of [V0, V1] for the radial forcing V1 = sigma d/dr,
    with [V, W] = DW.V - DV.W (the Lie derivative of W along V)."""
    if r <= 0:
        raise DomainError("lie bracket requires r > 0")
    return np.array([-sigma * (params.delta - 3.0 * r * r), 2.0 * sigma * params.beta * r])


@dataclass(frozen=True)
class ForcingField:
    """Stochastic forcing field in polar components.

    kind is one of ``radial`` (sigma d/dr), ``azimuthal`` (sigma d/dtheta),
    ``isochron`` (sigma (d/dr + beta/r d/dtheta), tangent to the isochrons
    of the limit cycle) or ``general`` (``func(r, theta)`` returns the two
    polar components).
    """

    kind: str = "radial"
    sigma: float = 1.0
    func: VectorField | None = None
    beta: float = 0.0

    KINDS = ("radial", "azimuthal", "isochron", "general")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "general" and self.func is None:
            raise ConfigurationError("general forcing needs func")

    @classmethod
    def isochron_tangent(cls, params: ModelParams, sigma: float = 1.0) -> "ForcingField":
        return cls("isochron", sigma, beta=params.beta)

    def __call__(self, r: float, theta: float) -> np.ndarray:
        if self.kind == "radial":
            return np.array([self.sigma, 0.0])
        if self.kind == "azimuthal":
            return np.array([0.0, self.sigma])
        if self.kind == "isochron":
            return self.sigma * np.array([1.0, self.beta / r])
        return np.asarray(self.func(r, theta), dtype=float)


def polar_drift_field(params: ModelParams) -> VectorField:
    """Deterministic field V0 = (delta r - r^3, gamma - beta r^2)."""

    def v0(r, theta):
        return np.array([params.delta * r - r**3, params.gamma - params.beta * r * r])

    return v0


def _jacobian(field: VectorField, r: float, theta: float, h: float, order: int) -> np.ndarray:
    J = np.empty((2, 2))
    for k, (dr, dth) in enumerate(((h, 0.0), (0.0, h))):
        if order == 2:
            fp = field(r + dr, theta + dth)
            fm = field(r - dr, theta - dth)
            J[:, k] = (fp - fm) / (2.0 * h)
        else:
            f2p = field(r + 2 * dr, theta + 2 * dth)
            f1p = field(r + dr, theta + dth)
            f1m = field(r - dr, theta - dth)
            f2m = field(r - 2 * dr, theta - 2 * dth)
            J[:, k] = (f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * h)
    return J


def numerical_bracket(v: VectorField, w: VectorField, level: int = 1) -> VectorField:
    """Finite-difference Lie bracket [v, w] = Dw.v - Dv.w.

    Level-1 brackets use central differences with step 1e-5 max(1, r).
    Nested brackets differentiate fields that are themselves finite
    differences, so they use a fourth-order stencil with step
    2e-3 max(1, r) to keep rounding noise below the rank tolerance.
    """

    def bracket(r, theta):
        scale = max(1.0, abs(r))
        if level <= 1:
            h, order = 1e-5 * scale, 2
        else:
            h, order = 2e-3 * scale, 4
        return (_jacobian(w, r, theta, h, order) @ v(r, theta)
                - _jacobian(v, r, theta, h, order) @ w(r, theta))

    return bracket


def lie_span_vectors(
    params: ModelParams, forcing: list[VectorField] | VectorField, r: float, theta: float, depth: int
) -> np.ndarray:
    """Vectors of the bracket families V_0, ..., V_depth at (r, theta), in
    Cartesian components (rows)."""
    if r <= 0:
        raise DomainError("hormander rank requires r > 0")
    if depth < 1:
        raise ConfigurationError("depth must be >= 1")
    if callable(forcing):
        forcing = [forcing]
    generators = [polar_drift_field(params)] + list(forcing)
    families = list(forcing)
    newest = list(forcing)
    for level in range(1, depth + 1):
        added = [numerical_bracket(u, vj, level) for u in newest for vj in generators]
        families.extend(added)
        newest = added
    J = polar_jacobian_inv(r, theta)
    return np.array([J @ f(r, theta) for f in families])


def hormander_rank(
    params: ModelParams,
    forcing: ForcingField | list[VectorField],
    r: float,
    theta: float,
    depth: int = 1,
    rel_tol: float = 1e-6,
) -> int:
    """Dimension of the span of the iterated Lie brackets at (r, theta).

    Singular values below ``rel_tol`` times the largest are treated as zero.
    """
    vecs = lie_span_vectors(params, forcing, r, theta, depth)
    s = np.linalg.svd(vecs, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))
