import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopfmix import fokker_planck as fp
from hopfmix.core import Grid2D, GridField, ModelParams, build_grid
from hopfmix.errors import ConfigurationError, GridMismatchError
from hopfmix.model import stationary_density_xy


def _dense_w_form(params, grid):
    """Independent dense assembly from the weighted-flux form
    J = B (w rho_L + (1 - w) rho_R) - C (rho_R - rho_L) / h."""
    C = 0.5 * params.epsilon**2
    X, Y = grid.mesh()
    r2 = X * X + Y * Y
    d, g, b = params.delta, params.gamma, params.beta
    Fx = (d - r2) * X - (g - b * r2) * Y
    Fy = (g - b * r2) * X + (d - r2) * Y
    A = np.zeros((grid.n_cells, grid.n_cells))
    k = lambda ix, iy: iy * grid.nx + ix
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            for dx, dy, F, h in ((1, 0, Fx, grid.dx), (0, 1, Fy, grid.dy)):
                jx, jy = ix + dx, iy + dy
                if jx >= grid.nx or jy >= grid.ny:
                    continue
                B = 0.5 * (F[iy, ix] + F[jy, jx])
                w = float(fp.chang_cooper_weight(B * h / C))
                cl = (B * w + C / h) / h
                cr = (B * (1 - w) - C / h) / h
                L, R = k(ix, iy), k(jx, jy)
                A[L, L] -= cl
                A[L, R] -= cr
                A[R, L] += cl
                A[R, R] += cr
    return A


def test_pure_diffusion_is_neumann_laplacian():
    p = ModelParams(0.0, 0.0, 0.0, 1.0)
    g = Grid2D(3, 3, 1.5)  # h = 1
    A = fp.assemble(p, g, drift="linear").adjoint.to_dense()
    expected = np.zeros((9, 9))
    for iy in range(3):
        for ix in range(3):
            i = iy * 3 + ix
            for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
                if 0 <= jx < 3 and 0 <= jy < 3:
                    expected[i, jy * 3 + jx] += 0.5
                    expected[i, i] -= 0.5
    np.testing.assert_allclose(A, expected, atol=1e-14)


@pytest.mark.parametrize("params", [ModelParams(1.0, 1.0, 0.5, 0.4), ModelParams(-2.0, 0.5, -0.3, 1.0)])
def test_assembly_matches_weighted_flux_form(params):
    g = Grid2D(5, 4, 2.0)
    np.testing.assert_allclose(fp.assemble(params, g).adjoint.to_dense(), _dense_w_form(params, g), rtol=1e-10, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2.0),
       st.integers(3, 9), st.integers(3, 9))
def test_conservative_metzler_structure(delta, gamma, beta, eps, nx, ny):
    p = ModelParams(delta, gamma, beta, eps)
    gen = fp.assemble(p, Grid2D(nx, ny, 2.5))
    A = gen.adjoint.to_dense()
    off = A - np.diag(np.diag(A))
    assert off.min() >= 0.0
    scale = np.abs(A).max()
    np.testing.assert_allclose(A.sum(axis=0), 0.0, atol=1e-12 * scale)
    np.testing.assert_allclose(gen.generator.to_dense(), A.T, atol=0)
    np.testing.assert_allclose(gen.generator.matvec(np.ones(gen.n)), 0.0, atol=1e-12 * scale)


def test_apply_matches_dense_product():
    gen = fp.assemble(ModelParams(0.5, 1.0, 0.2, 0.7), Grid2D(4, 4, 2.0))
    v = np.random.default_rng(0).normal(size=16)
    out = fp.apply(gen.adjoint, GridField(gen.grid, v))
    np.testing.assert_allclose(out.values, gen.adjoint.to_dense() @ v, rtol=1e-13)
    with pytest.raises(GridMismatchError):
        fp.apply(gen.adjoint, GridField.constant(Grid2D(5, 4, 2.0)))


def test_weight_series_branch_is_continuous():
    P = np.array([-2e-4, -1.0001e-4, -9.999e-5, 0.0, 9.999e-5, 1.0001e-4, 2e-4])
    w = fp.chang_cooper_weight(P)
    assert w[3] == 0.5
    np.testing.assert_allclose(w, 0.5 + P / 12, atol=1e-12)
    np.testing.assert_allclose(fp.chang_cooper_weight([-50.0, 50.0]), [0.02, 0.98], atol=1e-12)
    assert fp.bernoulli(0.0) == pytest.approx(1.0)


def test_assemble_rejects_degenerate_input():
    with pytest.raises(ConfigurationError):
        fp.assemble(ModelParams(1.0, epsilon=0.0), Grid2D(8, 8, 2.0))
    with pytest.raises(ConfigurationError):
        fp.assemble(ModelParams(1.0), Grid2D(2, 8, 2.0))
    with pytest.raises(ConfigurationError):
        fp.assemble(ModelParams(1.0), Grid2D(8, 8, 2.0), drift="cubic")


def test_implicit_step_conserves_mass_and_positivity():
    p = ModelParams(1.0, 1.0, 0.5, 0.6)
    g = build_grid(p, 40, 40)
    gen = fp.assemble(p, g)
    rho = GridField.from_function(g, lambda x, y: np.exp(-((x - 0.5) ** 2 + y * y) / 0.1))
    new = fp.implicit_step(gen, rho, 0.05)
    assert new.total().real == pytest.approx(rho.total().real, rel=1e-9)
    assert new.values.min() > -1e-12 * new.values.max()
    with pytest.raises(ConfigurationError):
        fp.implicit_step(gen, rho, 0.0)
    with pytest.raises(ConfigurationError):
        fp.implicit_step(gen, GridField(g, -rho.values), 0.1)


@pytest.mark.parametrize("params,tol", [(ModelParams(-1.0, 1.0, 0.0, 1.0), 5e-4),
                                        (ModelParams(1.0, 1.0, 0.5, 0.4), 5e-3)])
def test_relaxation_converges_to_exact_stationary_density(params, tol):
    g = build_grid(params, 120, 120)
    gen = fp.assemble(params, g)
    rho = fp.relax_to_stationary(gen, dt=1.0, max_steps=400)
    exact = GridField.from_function(g, lambda x, y: stationary_density_xy(params, x, y))
    exact = exact.values / exact.total().real
    assert np.abs(rho.values - exact).sum() * g.cell_area < tol
    # and it is a fixed point of the implicit step
    again = fp.implicit_step(gen, rho, 10.0)
    assert np.abs(again.values - rho.values).sum() * g.cell_area < 1e-8


def test_export_import_roundtrip(tmp_path):
    p = ModelParams(0.3, 1.0, 0.1, 0.5)
    g = Grid2D(6, 5, 1.2)
    gen = fp.assemble(p, g)
    path, sidecar = fp.export_matrix(tmp_path / "K.txt", gen.generator, g, p, note="test")
    assert sidecar.exists()
    back = fp.import_matrix(path)
    np.testing.assert_array_equal(back.to_dense(), gen.generator.to_dense())
    assert path.read_text().splitlines()[0] == "row col value"
