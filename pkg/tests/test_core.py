import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopfmix.core import (
    Grid2D,
    GridField,
    ModelParams,
    SparseOperator,
    build_grid,
    read_field_csv,
    weighted_inner,
    write_field_csv,
)
from hopfmix.errors import ConfigurationError, GridMismatchError


def test_params_validation_and_derived():
    p = ModelParams(2.0, gamma=1.0, beta=0.3, epsilon=0.5)
    assert p.omega_f == pytest.approx(1.0 - 0.6)
    assert p.r_star == pytest.approx(math.sqrt(2.0))
    assert p.replace(beta=0.0).omega_f == 1.0
    with pytest.raises(ConfigurationError):
        ModelParams(1.0, epsilon=-1.0)
    with pytest.raises(ConfigurationError):
        ModelParams(float("nan"))
    with pytest.raises(ConfigurationError):
        ModelParams(-1.0).r_star


def test_grid_geometry_and_row_major_order():
    g = Grid2D(4, 3, 2.0)
    assert g.dx == pytest.approx(1.0) and g.dy == pytest.approx(4 / 3)
    x, y = g.flat_coordinates()
    # index = iy * nx + ix
    assert x[1] == pytest.approx(g.centers_x[1]) and y[1] == pytest.approx(g.centers_y[0])
    assert y[4] == pytest.approx(g.centers_y[1]) and x[4] == pytest.approx(g.centers_x[0])
    with pytest.raises(ConfigurationError):
        Grid2D(1, 4, 1.0)
    with pytest.raises(ConfigurationError):
        Grid2D(4, 4, 0.0)


def test_build_grid_uses_stationary_spread():
    p = ModelParams(-1.0, 1.0, 0.0, 1.0)
    g = build_grid(p)
    # oracle: E[r^2] is the mean of a normal(-1, 1) truncated to [0, inf)
    assert g.half_width == pytest.approx(5.0 * math.sqrt(0.525135276160982 / 2), rel=1e-10)
    assert g.nx == g.ny == 200
    with pytest.raises(ConfigurationError):
        build_grid(ModelParams(1.0, epsilon=0.0))
    assert build_grid(ModelParams(1.0, epsilon=0.0), 8, 8, half_width=3.0).half_width == 3.0
    lin = build_grid(p, drift="linear")
    assert lin.half_width == pytest.approx(5.0 * math.sqrt(0.5))


def test_field_is_immutable_and_checks_size():
    g = Grid2D(3, 3, 1.0)
    f = GridField.constant(g, 2.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(GridMismatchError):
        GridField(g, np.zeros(5))
    with pytest.raises(ConfigurationError):
        GridField(g, np.full(9, np.nan))
    assert f.total() == pytest.approx(2.0 * 4.0)


def test_weighted_inner_conjugates_second_argument():
    g = Grid2D(2, 2, 1.0)
    f = GridField(g, np.array([1j, 0, 0, 0]))
    w = GridField.constant(g, 1.0)
    assert weighted_inner(f, f, w) == pytest.approx(1.0)
    assert weighted_inner(f, GridField.constant(g), w) == pytest.approx(1j)
    with pytest.raises(GridMismatchError):
        weighted_inner(f, GridField.constant(Grid2D(3, 3, 1.0)), w)
    with pytest.raises(ConfigurationError):
        weighted_inner(f, f, GridField.constant(g, -1.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_weighted_inner_is_hermitian(nx, ny, seed):
    g = Grid2D(nx, ny, 1.5)
    rng = np.random.default_rng(seed)
    a, b = (rng.normal(size=g.n_cells) + 1j * rng.normal(size=g.n_cells) for _ in range(2))
    f, h, w = GridField(g, a), GridField(g, b), GridField(g, rng.uniform(0, 2, g.n_cells))
    assert weighted_inner(f, h, w) == pytest.approx(np.conj(weighted_inner(h, f, w)), abs=1e-12)
    assert weighted_inner(f, f, w).real >= 0


def test_field_csv_roundtrip(tmp_path):
    g = Grid2D(5, 4, 2.5)
    rng = np.random.default_rng(1)
    f = GridField(g, rng.normal(size=20) + 1j * rng.normal(size=20))
    write_field_csv(tmp_path / "f.csv", f)
    back = read_field_csv(tmp_path / "f.csv")
    assert back.grid.nx == 5 and back.grid.ny == 4
    assert back.grid.half_width == pytest.approx(2.5)
    np.testing.assert_array_equal(back.values, f.values)
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "ix,iy,x,y,re,im"


def test_sparse_operator_views():
    dense = np.array([[0.0, 2.0], [3.0, -1.0]])
    op = SparseOperator(dense)
    assert op.nnz == 3
    np.testing.assert_array_equal(op.to_dense(), dense)
    np.testing.assert_array_equal(op.transpose().to_dense(), dense.T)
    r, c, v = op.triplets()
    assert list(zip(r, c, v)) == [(0, 1, 2.0), (1, 0, 3.0), (1, 1, -1.0)]
    np.testing.assert_allclose(op.matvec(np.array([1.0, 1.0])), [2.0, 2.0])
