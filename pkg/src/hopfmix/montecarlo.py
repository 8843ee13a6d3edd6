"""Monte Carlo simulation of the stochastic Hopf equation.

Paths are integrated with Euler-Maruyama in Cartesian coordinates,

    x_{k+1} = x_k + F(x_k) dt + eps sqrt(dt) xi_k,

where xi_k is a pair of standard normals. Trajectory i draws its normals
from its own PCG64 stream, spawned from ``SeedSequence(seed)``, so a
trajectory does not depend on how many others run beside it. Normals come
from numpy's ziggurat sampler (``Generator.standard_normal``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from .core import ModelParams
from .errors import ConfigurationError, DivergenceError
from .model import phase_frequency, stationary_mean_r2

_CHUNK = 4096  # steps drawn per RNG call


@dataclass(frozen=True)
class SimulationConfig:
    """Integration settings.

    ``initial_condition`` is either an (x, y) pair or ``"stationary"``,
    which draws each start point from the invariant law. ``record_every``
    thins the stored path.
    """

    dt: float
    n_steps: int
    n_trajectories: int = 1
    seed: int = 0
    initial_condition: tuple | str = (0.0, 0.0)
    record_every: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1 or self.n_trajectories < 1 or self.record_every < 1:
            raise ConfigurationError("n_steps, n_trajectories and record_every must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        ic = self.initial_condition
        if isinstance(ic, str):
            if ic != "stationary":
                raise ConfigurationError(f"unknown initial condition {ic!r}")
        else:
            ic = tuple(float(v) for v in ic)
            if len(ic) != 2 or not all(map(math.isfinite, ic)):
                raise ConfigurationError("initial condition must be a finite (x, y) pair")
            object.__setattr__(self, "initial_condition", ic)


def stability_limit(params: ModelParams, r_max2: float) -> float:
    """Largest admissible dt, 0.1 / max(|delta|, r_max^2)."""
    return 0.1 / max(abs(params.delta), r_max2, 1e-12)


def _typical_r2(params: ModelParams, config: SimulationConfig) -> float:
    if params.epsilon > 0:
        r2 = 2.0 * stationary_mean_r2(params)
    else:
        r2 = max(params.delta, 0.0)
    if not isinstance(config.initial_condition, str):
        x0, y0 = config.initial_condition
        r2 = max(r2, x0 * x0 + y0 * y0)
    return r2


@dataclass
class Trajectory:
    """Recorded paths; ``x`` and ``y`` have shape (n_trajectories, n_records)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int
    dt: float

    @property
    def r2(self) -> np.ndarray:
        return self.x**2 + self.y**2

    def as_array(self, i: int = 0) -> np.ndarray:
        """Rows (t, x, y) of trajectory ``i``."""
        return np.column_stack([self.t, self.x[i], self.y[i]])


def trajectory_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def sample_stationary(params: ModelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the invariant law: r^2 is normal(delta, eps)
    truncated to [0, inf) and the angle is uniform."""
    if params.epsilon <= 0:
        raise ConfigurationError("no stationary law for epsilon = 0")
    d, e = params.delta, params.epsilon
    u = truncnorm.rvs(-d / e, np.inf, loc=d, scale=e, size=n, random_state=rng)
    theta = rng.uniform(0.0, 2 * math.pi, size=n)
    r = np.sqrt(u)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _drift(d, g, b, x, y):
    r2 = x * x + y * y
    a, w = d - r2, g - b * r2
    return a * x - w * y, w * x + a * y


def _initial_points(params, config, streams):
    n = config.n_trajectories
    if config.initial_condition == "stationary":
        return np.vstack([sample_stationary(params, 1, s) for s in streams])
    return np.tile(np.array(config.initial_condition, dtype=float), (n, 1))


def simulate(params: ModelParams, config: SimulationConfig) -> Trajectory:
    """Euler-Maruyama paths of the SHE; identical output for identical
    (params, config)."""
    limit = stability_limit(params, _typical_r2(params, config))
    if config.dt > limit:
        raise ConfigurationError(f"dt = {config.dt} exceeds the stability limit {limit:.3g}")
    n, steps, every = config.n_trajectories, config.n_steps, config.record_every
    d, g, b = params.delta, params.gamma, params.beta
    noise = params.epsilon * math.sqrt(config.dt)
    dt = config.dt
    streams = trajectory_streams(config.seed, n)
    start = _initial_points(params, config, streams)

    n_rec = steps // every + 1
    xs = np.empty((n, n_rec))
    ys = np.empty((n, n_rec))
    xs[:, 0], ys[:, 0] = start[:, 0], start[:, 1]
    scalar = n == 1
    x = float(start[0, 0]) if scalar else start[:, 0].copy()
    y = float(start[0, 1]) if scalar else start[:, 1].copy()

    done = 0
    while done < steps:
        m = min(_CHUNK, steps - done)
        if scalar:
            xi = (noise * streams[0].standard_normal((m, 2))).tolist()
        else:
            xi = noise * np.stack([s.standard_normal((m, 2)) for s in streams], axis=0)
        for j in range(m):
            if scalar:
                wx, wy = xi[j]
            else:
                wx, wy = xi[:, j, 0], xi[:, j, 1]
            fx, fy = _drift(d, g, b, x, y)
            x, y = x + fx * dt + wx, y + fy * dt + wy
            k = done + j + 1
            if k % every == 0:
                xs[:, k // every] = x
                ys[:, k // every] = y
                if not (np.all(np.isfinite(xs[:, k // every])) and np.all(np.isfinite(ys[:, k // every]))):
                    raise DivergenceError(f"non-finite state at step {k}", step=k)
        done += m
    if not (math.isfinite(np.sum(x)) and math.isfinite(np.sum(y))):
        raise DivergenceError(f"non-finite state at step {steps}", step=steps)
    t = np.arange(n_rec) * every * dt
    return Trajectory(t, xs, ys, int(config.seed), dt)


def simulate_radial_forcing(
    params: ModelParams,
    sigma: float,
    r0: float,
    dt: float,
    n_steps: int,
    n_trajectories: int,
    seed: int = 0,
    record_every: int = 1,
) -> Trajectory:
    """Paths driven only along the radial direction, in Stratonovich form
    dX = F(X) dt + sigma X/|X| o dW, integrated with the Euler-Heun
    predictor-corrector. Starts at (r0, 0)."""
    if sigma < 0 or r0 <= 0:
        raise ConfigurationError("need sigma >= 0 and r0 > 0")
    d, g, b = params.delta, params.gamma, params.beta
    streams = trajectory_streams(seed, n_trajectories)
    n_rec = n_steps // record_every + 1
    xs = np.empty((n_trajectories, n_rec))
    ys = np.empty((n_trajectories, n_rec))
    x = np.full(n_trajectories, float(r0))
    y = np.zeros(n_trajectories)
    xs[:, 0], ys[:, 0] = x, y
    sq = math.sqrt(dt)

    def unit(x, y):
        r = np.hypot(x, y)
        return x / r, y / r

    done = 0
    while done < n_steps:
        m = min(_CHUNK, n_steps - done)
        dW = sq * np.stack([s.standard_normal(m) for s in streams], axis=0)
        for j in range(m):
            w = dW[:, j]
            fx, fy = _drift(d, g, b, x, y)
            ux, uy = unit(x, y)
            px, py = x + fx * dt + sigma * ux * w, y + fy * dt + sigma * uy * w
            gx, gy = _drift(d, g, b, px, py)
            vx, vy = unit(px, py)
            x = x + 0.5 * (fx + gx) * dt + 0.5 * sigma * (ux + vx) * w
            y = y + 0.5 * (fy + gy) * dt + 0.5 * sigma * (uy + vy) * w
            k = done + j + 1
            if k % record_every == 0:
                xs[:, k // record_every] = x
                ys[:, k // record_every] = y
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DivergenceError(f"non-finite state by step {done + m}", step=done + m)
        done += m
    t = np.arange(n_rec) * record_every * dt
    return Trajectory(t, xs, ys, int(seed), dt)


def unwrapped_phase(params: ModelParams, traj: Trajectory) -> np.ndarray:
    """Asymptotic phase along each path with the angle unwrapped in time,
    so that phase diffusion is visible as spreading beyond 2 pi."""
    theta = np.unwrap(np.arctan2(traj.y, traj.x), axis=1)
    r = np.hypot(traj.x, traj.y)
    d, b = params.delta, params.beta
    if d > 0:
        return theta - b * np.log(r / math.sqrt(d))
    if d == 0:
        return theta - b * np.log(r)
    return theta - 0.5 * b * np.log(r * r - d) + 0.5 * b * math.log(-d)


def phase_variance(params: ModelParams, traj: Trajectory) -> np.ndarray:
    """Ensemble variance of the asymptotic phase after removing the
    deterministic rotation; one value per recorded time."""
    phi = unwrapped_phase(params, traj)
    return np.var(phi - phase_frequency(params) * traj.t, axis=0, ddof=1)


def ensemble_second_moment(
    params: ModelParams,
    r0: float,
    t_grid,
    n_traj: int,
    seed: int = 0,
    dt: float | None = None,
) -> np.ndarray:
    """Rows (t, mean of r_t^2, standard error) over ``n_traj`` paths started
    at radius ``r0`` with uniformly random angle."""
    if n_traj < 100:
        raise ConfigurationError("n_traj must be >= 100")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ConfigurationError("t_grid must be a nonempty ascending array of times >= 0")
    if dt is None:
        dt = min(2e-3, stability_limit(params, max(r0 * r0, 2.0 * stationary_mean_r2(params)
                                                   if params.epsilon > 0 else r0 * r0)))
    steps_at = np.rint(t_grid / dt).astype(int)
    n_steps = max(int(steps_at[-1]), 1)

    streams = trajectory_streams(seed, n_traj)
    angles = np.array([s.uniform(0.0, 2 * math.pi) for s in streams])
    x, y = r0 * np.cos(angles), r0 * np.sin(angles)
    d, g, b = params.delta, params.gamma, params.beta
    noise = params.epsilon * math.sqrt(dt)
    want = {}
    for i, k in enumerate(steps_at):
        want.setdefault(int(k), []).append(i)
    out = np.empty((t_grid.size, 3))
    out[:, 0] = t_grid

    def record(k, x, y):
        for i in want.get(k, ()):
            r2 = x * x + y * y
            out[i, 1] = r2.mean()
            out[i, 2] = r2.std(ddof=1) / math.sqrt(n_traj)
            if k == 0:
                out[i, 1], out[i, 2] = r0 * r0, 0.0

    record(0, x, y)
    done = 0
    while done < n_steps:
        m = min(_CHUNK, n_steps - done)
        xi = noise * np.stack([s.standard_normal((m, 2)) for s in streams], axis=0)
        for j in range(m):
            fx, fy = _drift(d, g, b, x, y)
            x, y = x + fx * dt + xi[:, j, 0], y + fy * dt + xi[:, j, 1]
            record(done + j + 1, x, y)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DivergenceError(f"non-finite state by step {done + m}", step=done + m)
        done += m
    return out


def bound_constants(params: ModelParams) -> tuple[float, float, float]:
    """(k, c, d) of the ultimate bound E[r_t^2] <= k r0^2 exp(-c t) + d."""
    d, e2 = params.delta, params.epsilon**2
    if d < 0:
        return 1.0, -2.0 * d, e2 / abs(d)
    s = math.sqrt(4.0 * e2 + d * d)
    return 1.0, 2.0 * s, (d + s) / 2.0


@dataclass
class BoundReport:
    passed: bool
    max_violation_in_se: float
    k: float
    c: float
    d: float
    table: np.ndarray = field(repr=False)

    @property
    def bound(self) -> np.ndarray:
        return self.table[:, 3]


def check_ultimate_bound(
    params: ModelParams,
    r0: float,
    horizon: float,
    n_traj: int,
    seed: int = 0,
    n_times: int = 101,
    dt: float | None = None,
) -> BoundReport:
    """Compare the Monte Carlo second moment with the ultimate bound.

    A time point violates the bound by (mean - bound) / SE standard errors;
    the check passes if no point exceeds 3. ``table`` holds rows
    (t, mean, SE, bound).
    """
    if params.epsilon <= 0:
        raise ConfigurationError("the ultimate bound needs epsilon > 0")
    if horizon <= 0 or n_times < 2:
        raise ConfigurationError("need horizon > 0 and n_times >= 2")
    k, c, dd = bound_constants(params)
    moments = ensemble_second_moment(params, r0, np.linspace(0.0, horizon, n_times), n_traj, seed, dt)
    t, mean, se = moments.T
    bound = k * r0 * r0 * np.exp(-c * t) + dd
    excess = mean - bound
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, excess / se, np.where(excess > 0, np.inf, -np.inf))
    worst = float(np.max(z))
    return BoundReport(worst <= 3.0, worst, k, c, dd, np.column_stack([t, mean, se, bound]))


def fit_decay_rate(t, values, limit, stderr=None, min_excess_se: float = 5.0) -> float:
    """Rate a in |values - limit| ~ A exp(-a t), by a straight-line fit of
    the log excess over the points where the excess is well resolved."""
    t, values = np.asarray(t, dtype=float), np.asarray(values, dtype=float)
    excess = np.abs(values - limit)
    mask = excess > 0
    if stderr is not None:
        mask &= excess > min_excess_se * np.asarray(stderr)
    if mask.sum() < 3:
        raise ConfigurationError("fewer than three resolved points for the decay fit")
    slope = np.polyfit(t[mask], np.log(excess[mask]), 1)[0]
    return float(-slope)


def empirical_correlation(series_f, series_g, dt: float, max_lag: int) -> np.ndarray:
    """Rows (lag time, C(lag)) with C(k) = mean over i of
    (f_i - mean f)(g_{i+k} - mean g)."""
    f = np.asarray(series_f, dtype=float)
    g = np.asarray(series_g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise ConfigurationError("series must be one-dimensional and of equal length")
    if max_lag < 0 or max_lag >= f.size:
        raise ConfigurationError(f"max_lag must lie in [0, {f.size - 1}], got {max_lag}")
    fc, gc = f - f.mean(), g - g.mean()
    n = f.size
    vals = np.array([np.dot(fc[: n - k], gc[k:]) / (n - k) for k in range(max_lag + 1)])
    return np.column_stack([np.arange(max_lag + 1) * dt, vals])


def correlation_with_stderr(series_f, series_g, dt: float, max_lag: int, n_batches: int = 50) -> np.ndarray:
    """Rows (lag time, C, standard error) with the error from batch means:
    the series is cut into ``n_batches`` contiguous blocks, each block's
    correlation is estimated, and SE = std over blocks / sqrt(n_batches)."""
    f = np.asarray(series_f, dtype=float)
    g = np.asarray(series_g, dtype=float)
    full = empirical_correlation(f, g, dt, max_lag)
    size = f.size // n_batches
    if n_batches < 2 or size <= max_lag:
        raise ConfigurationError("batches must be longer than max_lag")
    # centre with the global means so that batch estimates average to the full one
    fc, gc = f - f.mean(), g - g.mean()
    per = np.empty((n_batches, max_lag + 1))
    for b in range(n_batches):
        fb, gb = fc[b * size:(b + 1) * size], gc[b * size:(b + 1) * size]
        per[b] = [np.dot(fb[: size - k], gb[k:]) / (size - k) for k in range(max_lag + 1)]
    se = per.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return np.column_stack([full, se])
