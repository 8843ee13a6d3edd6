"""Acceptance criteria 1-12. Each test prints one PASS/FAIL line, which is
also collected into the terminal summary."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES, mixing_spectrum
from hopfmix.analytic import subcritical_spectrum
from hopfmix.core import Grid2D, GridField, ModelParams, build_grid
from hopfmix.eigensolver import ArnoldiOptions, arnoldi_leading
from hopfmix.fokker_planck import assemble
from hopfmix.model import (
    ForcingField,
    hormander_rank,
    phase_diffusion_coefficient,
    stationary_density_xy,
    stationary_mean_r2,
)
from hopfmix.montecarlo import (
    SimulationConfig,
    check_ultimate_bound,
    correlation_with_stderr,
    fit_decay_rate,
    simulate,
)
from hopfmix.spectral import observable, reconstruct_correlation, reconstruct_power_spectrum
from hopfmix.sweeps import SweepConfig, fit_scaling, run_sweep

pytestmark = pytest.mark.acceptance


def report(n, passed, detail):
    line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def rel(a, b):
    return abs(a - b) / abs(b)


def _closest(values, target):
    return values[np.argmin(np.abs(values - target))]


def test_criterion_01_subcritical_agreement():
    _, spec = mixing_spectrum(-5.0, 1.0, 0.0, 1.0, k=20, selection="largest_real_part")
    lam = spec.eigenvalues
    lead = _closest(lam, complex(-5, 1))
    checks = [(complex(-5, 1), lead, 0.05)]
    # the next two groups l + n = 2 and l + n = 3 of the expansion
    theory = subcritical_spectrum(ModelParams(-5.0, 1.0, 0.0, 1.0))
    for group in (2, 3):
        for p in theory:
            if p.l + p.n == group:
                checks.append((p.lam, _closest(lam, p.lam), 0.10))
    worst = []
    ok = True
    for want, got, tol in checks:
        re_err = rel(got.real, want.real)
        im_err = rel(got.imag, want.imag) if want.imag != 0 else abs(got.imag)
        ok &= re_err <= tol and im_err <= tol
        worst.append((want, got, re_err, im_err))
    detail = "; ".join(f"{w:.0f}->{g.real:.4f}{g.imag:+.4f}i (re {r:.1%}, im {i:.1%})" for w, g, r, i in worst)
    assert report(1, ok, detail)


def test_criterion_02_supercritical_agreement():
    params = ModelParams(7.0, 1.0, 0.0, 1.0)
    gen, spec = mixing_spectrum(7.0, 1.0, 0.0, 1.0)
    lam = spec.eigenvalues
    parts = []
    ok = True
    for n in (1, 2, 3):
        want = complex(-n * n * params.epsilon**2 * (1 + params.beta**2) / (2 * params.delta), n * params.omega_f)
        got = _closest(lam, want)
        r, i = rel(got.real, want.real), rel(got.imag, want.imag)
        ok &= r <= 0.10 and i <= 0.02
        parts.append(f"n={n}: {got.real:.4f}{got.imag:+.4f}i (re {r:.1%}, im {i:.1%})")
    # the unstable-point family lies far below the leading cycle harmonics, so
    # the same operator is searched around -2 delta with a targeted shift
    target = -2 * params.delta
    near = arnoldi_leading(gen.generator, opts=ArnoldiOptions(k=8, selection="shift_invert", sigma=target))
    cand = np.array([p.ritz_value for p in near])
    best = _closest(cand, target)
    ok_u = rel(best, target) <= 0.10
    parts.append(f"unstable point {best.real:.4f}{best.imag:+.4f}i ({rel(best, target):.1%})")
    assert report(2, ok and ok_u, "; ".join(parts))


def _leading_nonzero(result):
    return result.branch(0)


def test_criterion_03_critical_scaling():
    eps = [0.25, 0.5, 1.0, 1.5, 2.0]
    res = run_sweep(SweepConfig("epsilon", eps, ModelParams(0.0, 1.0, 0.5, 1.0), k=8, n_branches=1))
    re = _leading_nonzero(res).real
    fit = fit_scaling(eps, re)
    intercept_ok = abs(fit.coefficients[0]) <= 0.02 * abs(re[-1])
    ok = fit.r_squared >= 0.99 and intercept_ok
    assert report(3, ok, f"R2={fit.r_squared:.8f}, intercept={fit.coefficients[0]:.3e}, "
                         f"slope={fit.coefficients[1]:.4f}, Re lambda1(eps=2)={re[-1]:.4f}")


def test_criterion_04_beta_laws():
    betas = [0.0, 0.25, 0.5, 0.75, 1.0]
    res = run_sweep(SweepConfig("beta", betas, ModelParams(0.0, 1.0, 0.0, 1.0), k=8, n_branches=1))
    lam = _leading_nonzero(res)
    f_re = fit_scaling(betas, lam.real, "linear_in_x_squared")
    f_im = fit_scaling(betas, lam.imag, "linear_in_x")
    ok = f_re.r_squared >= 0.99 and f_im.r_squared >= 0.99
    assert report(4, ok, f"Re vs beta^2 R2={f_re.r_squared:.6f}; Im vs beta R2={f_im.r_squared:.6f}")


def test_criterion_05_near_critical_linearity():
    deltas = list(np.linspace(-0.5, 0.5, 5))
    slopes, r2 = [], []
    for e in (1.0, 1.5, 2.0):
        res = run_sweep(SweepConfig("delta", deltas, ModelParams(0.0, 1.0, 0.0, e), k=6, n_branches=1))
        fit = fit_scaling(deltas, _leading_nonzero(res).real)
        slopes.append(fit.coefficients[1])
        r2.append(fit.r_squared)
    spread = max(rel(a, b) for a in slopes for b in slopes)
    ok = min(r2) >= 0.98 and spread <= 0.15
    assert report(5, ok, f"slopes {[round(s, 4) for s in slopes]}, R2 {[round(r, 5) for r in r2]}, "
                         f"max pairwise difference {spread:.1%}")


def test_criterion_06_stationary_density():
    errors = []
    for key in ((-1.0, 1.0, 0.0, 1.0), (1.0, 1.0, 0.5, 0.4)):
        gen, spec = mixing_spectrum(*key)
        exact = GridField.from_function(spec.grid, lambda x, y: stationary_density_xy(gen.params, x, y))
        errors.append(float(np.abs(spec.invariant_density.values - exact.values).sum() * spec.grid.cell_area))
    ok = max(errors) <= 1e-2
    assert report(6, ok, f"L1 errors {errors[0]:.2e}, {errors[1]:.2e}")


_fuzz_failures = []


@settings(max_examples=50, deadline=None, derandomize=True)
@given(st.floats(-10, 10), st.floats(-5, 5), st.floats(-3, 3), st.floats(0.05, 3.0),
       st.integers(3, 24), st.integers(3, 24), st.floats(0.5, 8.0))
def _fuzz(delta, gamma, beta, eps, nx, ny, half):
    gen = assemble(ModelParams(delta, gamma, beta, eps), Grid2D(nx, ny, half))
    A = gen.adjoint.matrix.tocoo()
    scale = np.abs(A.data).max()
    col = np.abs(np.asarray(gen.adjoint.matrix.sum(axis=0))).max() / scale
    off = A.data[A.row != A.col]
    if col > 1e-12 or (off < 0).any():
        _fuzz_failures.append((delta, gamma, beta, eps, nx, ny, half, col))


def test_criterion_07_generator_structure():
    _fuzz_failures.clear()
    _fuzz()
    ok = not _fuzz_failures
    assert report(7, ok, f"50 assembled operators, {len(_fuzz_failures)} violations of conservation or sign pattern")


def test_criterion_08_ou_oracle():
    params = ModelParams(-1.0, 1.0, 0.0, 1.0)
    grid = build_grid(params, 200, 200, drift="linear")
    gen = assemble(params, grid, drift="linear")
    pairs = arnoldi_leading(gen.generator, opts=ArnoldiOptions(k=8, selection="shift_invert"))
    lam = np.array([p.ritz_value for p in pairs])[:6]
    theory = [0, complex(-1, 1), complex(-1, -1), -2, complex(-2, 2), complex(-2, -2)]
    errs = []
    for want in theory:
        got = _closest(lam, want)
        errs.append(abs(got) if want == 0 else abs(got - want) / abs(want))
    ok = errs[0] < 1e-8 and max(errs[1:]) <= 0.02
    assert report(8, ok, f"max relative error {max(errs[1:]):.2%} over "
                         f"{', '.join(f'{l.real:.4f}{l.imag:+.4f}i' for l in lam)}")


def test_criterion_09_phase_diffusion():
    worst = 0.0
    for d in (0.5, 1.0, 2.0):
        for b in (0.0, 0.5, 1.0):
            for e in (0.25, 0.5, 1.0):
                p = ModelParams(d, 3.0, b, e)
                want = -e * e * (1 + b * b) / d
                worst = max(worst, rel(phase_diffusion_coefficient(p), want))
    assert report(9, worst <= 1e-6, f"max relative error {worst:.2e} over 27 parameter triples")


def test_criterion_10_hormander_rank():
    rng = np.random.default_rng(10)
    pts = list(zip(rng.uniform(0.3, 2.0, 20), rng.uniform(0, 2 * math.pi, 20)))
    base = ModelParams(1.0, 1.0, 0.0, 1.0)
    radial = ForcingField("radial", 1.0)
    r0 = {hormander_rank(base, [radial], r, t) for r, t in pts}
    r8 = {hormander_rank(base.replace(beta=0.8), [radial], r, t) for r, t in pts}
    iso = {hormander_rank(base.replace(beta=b), [ForcingField.isochron_tangent(base.replace(beta=b))], r, t)
           for b in (0.0, 0.5, 1.0) for r, t in pts}
    ok = r0 == {1} and r8 == {2} and iso == {1}
    assert report(10, ok, f"radial beta=0 ranks {sorted(r0)}, beta=0.8 {sorted(r8)}, isochron {sorted(iso)}")


def test_criterion_11_ultimate_bounds():
    parts, ok = [], True
    for d in (-1.0, 0.0, 1.0):
        p = ModelParams(d, 1.0, 0.0, 1.0)
        rep = check_ultimate_bound(p, r0=2.0, horizon=3.0, n_traj=10_000, seed=3)
        ok &= rep.passed
        parts.append(f"delta={d:g}: max excess {rep.max_violation_in_se:.1f} SE")
        if d == 0.0:
            t, mean, se = rep.table[:, 0], rep.table[:, 1], rep.table[:, 2]
            rate = fit_decay_rate(t, mean, stationary_mean_r2(p), se)
            ok &= rel(rate, rep.c) <= 0.5
            parts.append(f"decay rate {rate:.3f} vs c={rep.c:g}")
    assert report(11, ok, "; ".join(parts))


def test_criterion_12_cross_validation():
    params = ModelParams(-1.0, 1.0, 0.0, 0.5)
    dt = 0.01
    traj = simulate(params, SimulationConfig(dt=dt, n_steps=1_000_000, seed=0, initial_condition="stationary"))
    max_lag = int(round(2.0 / abs(params.delta) / dt))
    emp = correlation_with_stderr(traj.x[0], traj.x[0], dt, max_lag, n_batches=50)
    _, spec = mixing_spectrum(*params.as_dict().values())
    f = observable("x", spec.grid)
    model = reconstruct_correlation(spec, f, f, emp[:, 0]).values.real
    z = np.abs(model - emp[:, 1]) / emp[:, 2]
    ok_c = z.max() <= 3.0

    _, sup = mixing_spectrum(7.0, 1.0, 0.0, 1.0)
    omega = 1.0
    zg = np.arange(0.0, 5.0 + 0.025, 0.05)
    peaks = {}
    for name in ("x", "x2", "x3"):
        v = reconstruct_power_spectrum(sup, observable(name, sup.grid), observable(name, sup.grid), zg).values
        peaks[name] = [float(zg[i]) for i in range(1, len(zg) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
        if v[0] > v[1]:
            peaks[name].insert(0, 0.0)
    near = lambda vals, target: any(abs(v - target) <= 0.05 + 1e-9 for v in vals)
    ok_p = (near(peaks["x"], omega) and near(peaks["x2"], 2 * omega)
            and near(peaks["x3"], omega) and near(peaks["x3"], 3 * omega))
    assert report(12, ok_c and ok_p, f"max |z| = {z.max():.2f} over {len(z)} lags; spectral peaks {peaks}")
