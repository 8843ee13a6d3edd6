"""Shared domain types: model parameters, the Cartesian cell grid, grid
fields, sparse operators and the measure-weighted inner product.

Cells are ordered row-major, ``index = iy * nx + ix``, everywhere in the
package including every file format.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GridMismatchError

__all__ = [
    "ModelParams",
    "Grid2D",
    "GridField",
    "SparseOperator",
    "build_grid",
    "weighted_inner",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the stochastic Hopf normal form.

    ``delta`` is the bifurcation parameter (critical value 0), ``gamma`` the
    base angular frequency, ``beta`` the twist factor and ``epsilon`` the
    additive noise amplitude on each Cartesian coordinate.
    """

    delta: float
    gamma: float = 1.0
    beta: float = 0.0
    epsilon: float = 1.0

    delta_c = 0.0

    def __post_init__(self):
        for name in ("delta", "gamma", "beta", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def omega_f(self) -> float:
        """Angular frequency of the limit cycle, gamma - beta * delta."""
        return self.gamma - self.beta * self.delta

    @property
    def r_star(self) -> float:
        """Radius of the deterministic limit cycle (delta > 0)."""
        if self.delta <= 0:
            raise ConfigurationError("no limit cycle for delta <= 0")
        return math.sqrt(self.delta)

    def replace(self, **changes) -> "ModelParams":
        values = dict(delta=self.delta, gamma=self.gamma, beta=self.beta, epsilon=self.epsilon)
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return dict(delta=self.delta, gamma=self.gamma, beta=self.beta, epsilon=self.epsilon)


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred grid on the square [-half_width, half_width]^2."""

    nx: int
    ny: int
    half_width: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"nx, ny must be integers >= 2, got {self.nx}, {self.ny}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ConfigurationError(f"half_width must be > 0, got {self.half_width}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.half_width / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def centers_x(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def centers_y(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.ny) + 0.5) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two (ny, nx) arrays."""
        return np.meshgrid(self.centers_x, self.centers_y)

    def flat_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates flattened in row-major cell order."""
        X, Y = self.mesh()
        return X.ravel(), Y.ravel()

    def as_dict(self) -> dict:
        return dict(nx=self.nx, ny=self.ny, half_width=self.half_width, dx=self.dx, dy=self.dy)


@dataclass(frozen=True, eq=False)
class GridField:
    """One complex (or real) value per cell of ``grid``, row-major."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 2:
            values = values.ravel()
        if values.shape != (self.grid.n_cells,):
            raise GridMismatchError(
                f"field has {values.size} values, grid has {self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("grid field contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> "GridField":
        """Sample ``func(x, y)`` (vectorised) at the cell centres."""
        x, y = grid.flat_coordinates()
        return cls(grid, np.broadcast_to(func(x, y), x.shape))

    @classmethod
    def constant(cls, grid: Grid2D, value=1.0) -> "GridField":
        return cls(grid, np.full(grid.n_cells, value))

    def as_array(self) -> np.ndarray:
        """Values reshaped to (ny, nx)."""
        return self.values.reshape(self.grid.ny, self.grid.nx)

    def total(self) -> complex:
        """Integral of the field over the domain (sum times cell area)."""
        return self.values.sum() * self.grid.cell_area

    def conj(self) -> "GridField":
        return GridField(self.grid, np.conj(self.values))


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Real sparse matrix in compressed-row storage."""

    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def column_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def entries(self) -> np.ndarray:
        return self.matrix.data

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def transpose(self) -> "SparseOperator":
        return SparseOperator(self.matrix.T.tocsr())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


def build_grid(
    params: ModelParams,
    nx: int = 200,
    ny: int = 200,
    width_multiplier: float = 5.0,
    half_width: float | None = None,
    drift: str = "hopf",
) -> Grid2D:
    """Grid on [-w * sigma_hat, w * sigma_hat]^2 where sigma_hat is the
    stationary standard deviation of x (and y).

    With ``drift="linear"`` sigma_hat is that of the Ornstein-Uhlenbeck
    process obtained by linearising at the origin, eps / sqrt(2 |delta|),
    which needs delta < 0. Pass ``half_width`` to bypass the density-based
    sizing, which is required when ``params.epsilon == 0``.
    """
    if half_width is not None:
        return Grid2D(nx, ny, half_width)
    if not (math.isfinite(width_multiplier) and width_multiplier > 0):
        raise ConfigurationError(f"width_multiplier must be > 0, got {width_multiplier}")
    if params.epsilon == 0:
        raise ConfigurationError(
            "epsilon = 0 has no normalizable stationary density; pass half_width explicitly"
        )
    if drift == "linear":
        if params.delta >= 0:
            raise ConfigurationError("the linearised process is only stationary for delta < 0")
        return Grid2D(nx, ny, width_multiplier * params.epsilon / math.sqrt(-2.0 * params.delta))
    from .model import estimate_sigma_hat

    return Grid2D(nx, ny, width_multiplier * estimate_sigma_hat(params))


def _check_same_grid(*fields: GridField) -> None:
    first = fields[0].grid
    for f in fields[1:]:
        if f.grid != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {f.grid}")


def weighted_inner(f: GridField, g: GridField, weight: GridField) -> complex:
    """Sum over cells of f * conj(g) * weight * cell_area.

    With ``weight`` the invariant density this is the L^2(mu) inner
    product; the second argument is conjugated.
    """
    _check_same_grid(f, g, weight)
    w = weight.values
    if np.iscomplexobj(w):
        if np.any(w.imag != 0):
            raise ConfigurationError("weight must be real")
        w = w.real
    if np.any(w < 0):
        raise ConfigurationError("weight must be nonnegative")
    return complex(np.sum(f.values * np.conj(g.values) * w) * f.grid.cell_area)


def write_field_csv(path, fld: GridField) -> Path:
    """Write ``ix,iy,x,y,re,im`` rows in row-major order."""
    path = Path(path)
    grid = fld.grid
    x, y = grid.flat_coordinates()
    ix = np.tile(np.arange(grid.nx), grid.ny)
    iy = np.repeat(np.arange(grid.ny), grid.nx)
    v = fld.values.astype(complex)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ix", "iy", "x", "y", "re", "im"])
        for row in zip(ix, iy, x, y, v.real, v.imag):
            w.writerow([row[0], row[1]] + [repr(float(a)) for a in row[2:]])
    return path


def read_field_csv(path, grid: Grid2D | None = None) -> GridField:
    """Read a field written by :func:`write_field_csv`.

    Without ``grid`` the grid is inferred from the index ranges and the
    outermost cell centres.
    """
    data = np.genfromtxt(path, delimiter=",", names=True)
    ix = data["ix"].astype(int)
    iy = data["iy"].astype(int)
    if grid is None:
        nx, ny = ix.max() + 1, iy.max() + 1
        dx = (data["x"].max() - data["x"].min()) / (nx - 1)
        grid = Grid2D(nx, ny, float(data["x"].max() + dx / 2))
    order = iy * grid.nx + ix
    values = np.empty(grid.n_cells, dtype=complex)
    values[order] = data["re"] + 1j * data["im"]
    if not np.any(values.imag):
        values = values.real
    return GridField(grid, values)
