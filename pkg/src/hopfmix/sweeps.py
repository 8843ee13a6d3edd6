"""One-parameter sweeps of the leading eigenvalues and least-squares fits.

Each sweep point rebuilds the grid (the domain scales with the stationary
spread unless ``fixed_grid`` is set), solves for the leading eigenvalues,
and appends its rows to ``sweep.csv`` straight away so that an interrupted
sweep can be resumed. Branches are followed across points by
nearest-neighbour continuation in the complex plane, measured from a
secant prediction.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Grid2D, ModelParams, build_grid
from .eigensolver import ArnoldiOptions, arnoldi_leading, sort_key
from .errors import ConfigurationError, HopfMixError
from .fokker_planck import assemble

log = logging.getLogger(__name__)

VARYING = ("delta", "epsilon", "beta", "gamma")
MODELS = ("linear_in_x", "linear_in_x_squared")


@dataclass
class SweepConfig:
    varying: str
    values: list
    fixed: ModelParams
    nx: int = 200
    ny: int = 200
    width_multiplier: float = 5.0
    k: int = 8
    output_dir: Path | None = None
    fixed_grid: bool = False
    selection: str = "shift_invert"
    n_branches: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.varying not in VARYING:
            raise ConfigurationError(f"varying must be one of {VARYING}")
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size == 0 or not np.all(np.isfinite(vals)):
            raise ConfigurationError("sweep values must be a nonempty list of finite numbers")
        if len(np.unique(vals)) != vals.size:
            raise ConfigurationError("sweep values must be distinct")
        self.values = sorted(float(v) for v in vals)
        if self.k < 2 or self.n_branches < 1:
            raise ConfigurationError("need k >= 2 and n_branches >= 1")

    def params_at(self, value: float) -> ModelParams:
        return self.fixed.replace(**{self.varying: value})


@dataclass
class SweepPoint:
    value: float
    eigenvalues: np.ndarray
    residuals: np.ndarray
    grid: Grid2D | None = None
    error: str | None = None


@dataclass
class SweepResult:
    config: SweepConfig
    points: list
    branches: np.ndarray  # (n_points, n_branches), NaN where a point failed
    ambiguities: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def branch(self, b: int = 0) -> np.ndarray:
        return self.branches[:, b]

    def failed(self) -> list:
        return [p for p in self.points if p.error is not None]


@dataclass(frozen=True)
class FitResult:
    model: str
    coefficients: tuple
    r_squared: float

    def predict(self, x):
        a, b = self.coefficients
        x = np.asarray(x, dtype=float)
        return a + b * (x if self.model == "linear_in_x" else x * x)

    def as_dict(self) -> dict:
        return dict(model=self.model, coefficients=list(self.coefficients), r_squared=self.r_squared)


def fit_scaling(xs, ys, model: str = "linear_in_x") -> FitResult:
    """Ordinary least squares for y = a + b x or y = a + b x^2."""
    if model not in MODELS:
        raise ConfigurationError(f"model must be one of {MODELS}")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigurationError("xs and ys must be 1-d arrays of equal length")
    if x.size < 3:
        raise ConfigurationError("need at least 3 points")
    feature = x if model == "linear_in_x" else x * x
    if np.ptp(feature) == 0:
        raise ConfigurationError("rank-deficient design: all abscissae coincide")
    A = np.column_stack([np.ones_like(feature), feature])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a + b * feature)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    floor = y.size * (1e-12 * max(1.0, float(np.abs(y).max()))) ** 2
    if ss_tot <= floor:
        # constant data: R^2 is a ratio of rounding errors, decide on scale
        r2 = 1.0 if ss_res <= floor else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(model, (float(a), float(b)), r2)


def leading_eigenvalues(params: ModelParams, grid: Grid2D, k: int, selection: str = "shift_invert"):
    """Sorted leading eigenvalues and residuals of the discretised generator."""
    gen = assemble(params, grid)
    pairs = arnoldi_leading(gen.generator, opts=ArnoldiOptions(k=k, selection=selection))
    return np.array([p.ritz_value for p in pairs]), np.array([p.residual for p in pairs])


def _solve_point(config: SweepConfig, value: float, grid: Grid2D | None) -> SweepPoint:
    params = config.params_at(value)
    try:
        if grid is None:
            grid = build_grid(params, config.nx, config.ny, config.width_multiplier)
        lam, res = leading_eigenvalues(params, grid, config.k, config.selection)
        return SweepPoint(value, lam, res, grid)
    except HopfMixError as exc:
        log.warning("sweep point %s=%g failed: %s", config.varying, value, exc)
        return SweepPoint(value, np.zeros(0, complex), np.zeros(0), grid, error=str(exc))


def _nonzero_upper(lam: np.ndarray) -> np.ndarray:
    """Nonzero eigenvalues with Im >= 0, in spectral order."""
    keep = [l for l in lam if abs(l) > 1e-8 and l.imag >= -1e-10]
    return np.array(sorted(keep, key=sort_key))


def track_branches(points: list, n_branches: int):
    """Follow the first ``n_branches`` nonzero eigenvalues (Im >= 0 members)
    of the first successful point by continuation.

    The prediction at a new point is the secant extrapolation of the last
    two tracked values (the previous value when only one is known), and the
    nearest eigenvalue to it is taken. Candidates are all nonzero
    eigenvalues, so a branch may cross the real axis onto the conjugate
    member. A step is flagged as ambiguous when the runner-up candidate is
    within 1.5 times the distance of the choice.
    """
    branches = np.full((len(points), n_branches), np.nan + 0j)
    ambiguities = []
    history = []  # (parameter value, branch values) of successful points
    for i, p in enumerate(points):
        if p.error is not None or p.eigenvalues.size == 0:
            continue
        if not history:
            start = _nonzero_upper(p.eigenvalues)[:n_branches]
            branches[i, : len(start)] = start
            history.append((p.value, branches[i].copy()))
            continue
        cand = np.array([l for l in p.eigenvalues if abs(l) > 1e-8])
        v1, b1 = history[-1]
        if len(history) >= 2:
            v0, b0 = history[-2]
            pred = b1 + (b1 - b0) * (p.value - v1) / (v1 - v0)
        else:
            pred = b1
        for b in range(n_branches):
            if np.isnan(pred[b]):
                continue
            d = np.abs(cand - pred[b])
            order = np.argsort(d)
            branches[i, b] = cand[order[0]]
            if len(order) > 1 and d[order[1]] < 1.5 * d[order[0]]:
                ambiguities.append(dict(value=p.value, branch=b, chosen=complex(cand[order[0]]),
                                        runner_up=complex(cand[order[1]])))
        history.append((p.value, branches[i].copy()))
    return branches, ambiguities


def _load_existing(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    with path.open() as fh:
        for row in csv.DictReader(fh):
            v = float(row["param"])
            done.setdefault(v, []).append((complex(float(row["re_lambda"]), float(row["im_lambda"])),
                                           float(row["residual"])))
    return done


def run_sweep(config: SweepConfig) -> SweepResult:
    """Solve every sweep point, write ``sweep.csv`` incrementally and
    return the tracked branches. Points already present in an existing
    ``sweep.csv`` are reused rather than recomputed."""
    out = Path(config.output_dir) if config.output_dir is not None else None
    table = None
    existing = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        table = out / "sweep.csv"
        existing = _load_existing(table)
        if not table.exists():
            table.write_text("param,j,re_lambda,im_lambda,residual\n")

    shared_grid = None
    if config.fixed_grid:
        shared_grid = build_grid(config.params_at(config.values[0]), config.nx, config.ny, config.width_multiplier)

    todo = [v for v in config.values if v not in existing]
    results = {}
    for v, rows in existing.items():
        if v in config.values:
            results[v] = SweepPoint(v, np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))

    def record(pt: SweepPoint):
        results[pt.value] = pt
        if table is not None and pt.error is None:
            with table.open("a") as fh:
                for j, (lam, res) in enumerate(zip(pt.eigenvalues, pt.residuals)):
                    fh.write(f"{pt.value:.17g},{j},{lam.real:.17g},{lam.imag:.17g},{res:.17g}\n")

    if config.workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for pt in pool.map(lambda v: _solve_point(config, v, shared_grid), todo):
                record(pt)
    else:
        for v in todo:
            record(_solve_point(config, v, shared_grid))

    points = [results[v] for v in config.values]
    branches, amb = track_branches(points, config.n_branches)
    result = SweepResult(config, points, branches, amb)
    if out is not None:
        write_tracked(out / "branches.csv", result)
    return result


def write_tracked(path, result: SweepResult) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("param,branch,re_lambda,im_lambda\n")
        for v, row in zip(result.values, result.branches):
            for b, lam in enumerate(row):
                if not np.isnan(lam):
                    fh.write(f"{v:.17g},{b},{lam.real:.17g},{lam.imag:.17g}\n")
    return path


def write_fits(path, fits: dict) -> Path:
    """``fits.json`` mapping a quantity name to its fit."""
    path = Path(path)
    path.write_text(json.dumps({k: f.as_dict() for k, f in fits.items()}, indent=2))
    return path


def standard_fits(result: SweepResult, branch: int = 0) -> dict:
    """Linear fits of Re and Im of a branch against the swept parameter and
    against its square."""
    x = result.values
    lam = result.branch(branch)
    ok = ~np.isnan(lam)
    fits = {}
    if ok.sum() >= 3:
        for part, ys in (("re", lam[ok].real), ("im", lam[ok].imag)):
            for model in MODELS:
                try:
                    fits[f"{part}_lambda{branch + 1}_{model}"] = fit_scaling(x[ok], ys, model)
                except ConfigurationError:
                    pass
    return fits
