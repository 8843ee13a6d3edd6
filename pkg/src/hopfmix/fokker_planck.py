"""Chang-Cooper finite-volume discretisation of the Fokker-Planck operator.

The flux through a face between a left cell L and right cell R (along x or
y) is

    J = B (w rho_L + (1 - w) rho_R) - C (rho_R - rho_L) / h,

with B the face drift, C = eps^2 / 2, P = B h / C and the exponentially
fitted weight w = 1/(1 - e^{-P}) - 1/P. Collecting terms gives the
coefficients (C/h) Bern(-P) on rho_L and -(C/h) Bern(P) on rho_R, where
Bern(x) = x / (e^x - 1) > 0. Those are what the assembly uses, since they
are positive for every P and do not lose digits for large |P|.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import exprel

from .core import Grid2D, GridField, ModelParams, SparseOperator
from .errors import ConfigurationError, GridMismatchError, NumericalError

DRIFTS = ("hopf", "linear")


def chang_cooper_weight(P):
    """Upwind weight w(P) = 1/(1 - e^{-P}) - 1/P on the left cell.

    Uses the series 1/2 + P/12 - P^3/720 for |P| < 1e-4.
    """
    P = np.asarray(P, dtype=float)
    small = np.abs(P) < 1e-4
    Ps = np.where(small, 1.0, P)
    with np.errstate(over="ignore"):
        exact = 1.0 / (-np.expm1(-Ps)) - 1.0 / Ps
    series = 0.5 + P / 12.0 - P**3 / 720.0
    return np.where(small, series, exact)


def bernoulli(x):
    """Bernoulli function x / (e^x - 1), with value 1 at x = 0."""
    return 1.0 / exprel(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class DiscretizedGenerator:
    """Discrete Fokker-Planck operator (``adjoint``, acting on cell
    densities) and its transpose, the discrete Kolmogorov operator."""

    adjoint: SparseOperator
    generator: SparseOperator
    grid: Grid2D
    params: ModelParams
    drift: str = "hopf"

    @property
    def n(self) -> int:
        return self.grid.n_cells


def _cell_drift(params: ModelParams, X, Y, drift: str):
    d, g, b = params.delta, params.gamma, params.beta
    if drift == "linear":
        return d * X - g * Y, g * X + d * Y
    r2 = X * X + Y * Y
    return (d - r2) * X - (g - b * r2) * Y, (g - b * r2) * X + (d - r2) * Y


def assemble(params: ModelParams, grid: Grid2D, drift: str = "hopf") -> DiscretizedGenerator:
    """Assemble the Chang-Cooper discretisation with no-flux boundaries.

    ``drift="linear"`` replaces the Hopf drift by its linearisation at the
    origin, which turns the model into a planar Ornstein-Uhlenbeck process
    with a known spectrum.
    """
    if params.epsilon <= 0:
        raise ConfigurationError("degenerate diffusion: epsilon must be > 0 for the Fokker-Planck operator")
    if grid.nx < 3 or grid.ny < 3:
        raise ConfigurationError(f"grid too small: need nx, ny >= 3, got {grid.nx}x{grid.ny}")
    if drift not in DRIFTS:
        raise ConfigurationError(f"drift must be one of {DRIFTS}, got {drift!r}")

    X, Y = grid.mesh()
    Fx, Fy = _cell_drift(params, X, Y, drift)
    C = 0.5 * params.epsilon**2
    idx = np.arange(grid.n_cells).reshape(grid.ny, grid.nx)

    rows, cols, vals = [], [], []
    faces = (
        (0.5 * (Fx[:, :-1] + Fx[:, 1:]), grid.dx, idx[:, :-1], idx[:, 1:]),
        (0.5 * (Fy[:-1, :] + Fy[1:, :]), grid.dy, idx[:-1, :], idx[1:, :]),
    )
    for B, h, left, right in faces:
        P = B * h / C
        # flux left -> right = a_left * rho_L - a_right * rho_R, per unit volume
        a_left = (C / h**2 * bernoulli(-P)).ravel()
        a_right = (C / h**2 * bernoulli(P)).ravel()
        i, j = left.ravel(), right.ravel()
        rows += [i, j, j, i]
        cols += [i, i, j, j]
        vals += [-a_left, a_left, -a_right, a_right]

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_cells),
    )
    adjoint = SparseOperator(A)
    return DiscretizedGenerator(adjoint, adjoint.transpose(), grid, params, drift)


def apply(genmat: SparseOperator, fld: GridField) -> GridField:
    """Sparse matrix-vector product on a grid field."""
    if genmat.n_cols != fld.grid.n_cells:
        raise GridMismatchError(
            f"operator has {genmat.n_cols} columns, field has {fld.grid.n_cells} cells"
        )
    return GridField(fld.grid, genmat.matvec(fld.values))


def implicit_step(gen: DiscretizedGenerator, density: GridField, dt: float, rtol: float = 1e-10) -> GridField:
    """One backward-Euler step, solving (I - dt K*) rho_new = rho.

    The solve is BiCGSTAB with a Jacobi preconditioner.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if density.grid != gen.grid:
        raise GridMismatchError("density and generator live on different grids")
    rho = np.asarray(density.values, dtype=float)
    if np.any(rho < -1e-8 * np.abs(rho).max()):
        raise ConfigurationError("density must be nonnegative")

    M = (sp.identity(gen.n, format="csr") - dt * gen.adjoint.matrix).tocsr()
    inv_diag = 1.0 / M.diagonal()
    precond = spla.LinearOperator(M.shape, matvec=lambda v: inv_diag * v)
    sol, info = spla.bicgstab(M, rho, x0=rho.copy(), rtol=rtol, atol=0.0, M=precond, maxiter=20 * gen.n)
    residual = np.linalg.norm(M @ sol - rho) / max(np.linalg.norm(rho), np.finfo(float).tiny)
    if info != 0 or not np.all(np.isfinite(sol)):
        raise NumericalError(f"implicit step linear solve failed (info={info}, relative residual {residual:.3e})")
    return GridField(gen.grid, sol)


def relax_to_stationary(
    gen: DiscretizedGenerator, dt: float = 1.0, max_steps: int = 500, tol: float = 1e-10
) -> GridField:
    """Iterate implicit steps from the uniform density until the L1 change
    per step drops below ``tol``. Returns a density of unit mass."""
    grid = gen.grid
    rho = GridField(grid, np.full(grid.n_cells, 1.0 / (grid.n_cells * grid.cell_area)))
    for _ in range(max_steps):
        new = implicit_step(gen, rho, dt)
        change = np.abs(new.values - rho.values).sum() * grid.cell_area
        rho = new
        if change < tol:
            break
    values = np.clip(rho.values, 0.0, None)
    return GridField(grid, values / (values.sum() * grid.cell_area))


def export_matrix(path, op: SparseOperator, grid: Grid2D, params: ModelParams, **meta) -> tuple[Path, Path]:
    """Write ``row col value`` lines plus a JSON sidecar with grid metadata."""
    path = Path(path)
    r, c, v = op.triplets()
    with path.open("w") as fh:
        fh.write("row col value\n")
        for a, b, x in zip(r, c, v):
            fh.write(f"{a} {b} {x:.17g}\n")
    sidecar = path.with_suffix(path.suffix + ".json")
    info = dict(
        shape=[op.n_rows, op.n_cols],
        nnz=op.nnz,
        ordering="row-major, index = iy * nx + ix",
        grid=grid.as_dict(),
        params=params.as_dict(),
        **meta,
    )
    sidecar.write_text(json.dumps(info, indent=2))
    return path, sidecar


def import_matrix(path) -> SparseOperator:
    """Read a matrix written by :func:`export_matrix`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    m = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=tuple(meta["shape"]))
    return SparseOperator(m.tocsr())
