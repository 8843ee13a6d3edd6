"""Command-line front end.

Every command writes its outputs under ``--output-dir`` and finishes by
writing ``manifest.json`` (a :class:`RunManifest`) that lists the resolved
settings and a SHA-256 checksum of every output. Settings are resolved as
flags > ``--config`` JSON file > built-in defaults; JSON keys use the
flag names with underscores (``n_traj``) or dashes (``n-traj``).

Exit codes: 0 success, 1 error, 2 partial convergence of the eigensolver.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelParams, build_grid
from .errors import ConfigurationError, ConvergenceError, HopfMixError

log = logging.getLogger("hopfmix")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2
THREADS_ENV = "HOPFMIX_THREADS"
SIM_DT = 0.01  # path simulations; the bound check picks its own step

# ---------------------------------------------------------------------------
# manifests


@dataclass
class RunManifest:
    command: str
    settings: dict
    version: str = __version__
    grid: dict | None = None
    seeds: list = field(default_factory=list)
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)
    status: str = "ok"

    def add_output(self, path: Path, root: Path) -> None:
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.outputs.append(dict(path=str(Path(path).relative_to(root)), sha256=digest))

    def write(self, out_dir: Path) -> Path:
        """Write ``manifest.json`` atomically (temp file and rename)."""
        target = out_dir / "manifest.json"
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
        os.replace(tmp, target)
        return target


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


def _fmt(v) -> str:
    return f"{v:.17g}"


# ---------------------------------------------------------------------------
# argument handling

DEFAULTS = {
    "delta": None, "gamma": 1.0, "beta": 0.0, "epsilon": 1.0,
    "nx": 200, "ny": 200, "width": 5.0,
    "output_dir": "hopfmix-out",
    "k": 20, "solver": "plain", "sigma": 0.1, "tol": 1e-8, "max_restarts": 500, "n_fields": 2,
    "export_matrix": False,
    "l_max": 2, "n_max": 3,
    "dt": None, "n_steps": 10000, "n_traj": 1, "seed": 0, "x0": None, "y0": 0.0,
    "stationary": False, "record_every": 1,
    "obs": None, "obs2": None, "burn_in": None, "max_lag_time": 2.0, "batches": 50,
    "with_spectrum": False,
    "z_min": 0.0, "z_max": 5.0, "dz": 0.05,
    "vary": "delta", "values": None, "fixed_grid": False, "workers": None, "branches": 2,
    "forcing": "radial", "forcing_sigma": 1.0, "depth": 1, "points": 20, "r": None, "theta": None,
    "r0": 2.0, "horizon": 3.0, "n_times": 101,
}

COMMANDS = ("spectrum", "analytic", "simulate", "correlate", "power", "sweep", "isochron", "floquet", "bound")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are errors (1), not partial results (2)
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--delta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--epsilon", type=float)


def _grid_flags(p):
    g = p.add_argument_group("grid")
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--width", type=float, help="half-width in units of the stationary std of x")


def _solver_flags(p):
    g = p.add_argument_group("eigensolver")
    g.add_argument("--k", type=int, help="number of eigenpairs")
    g.add_argument("--solver", choices=["plain", "shift-invert"])
    g.add_argument("--sigma", type=float, help="shift for shift-invert")
    g.add_argument("--tol", type=float)
    g.add_argument("--max-restarts", type=int)


def _sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--dt", type=float)
    g.add_argument("--n-steps", type=int)
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hopfmix", description="Mixing spectra of the stochastic Hopf normal form.")
    parser.add_argument("--version", action="version", version=f"hopfmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON file with default settings")
        p.add_argument("--output-dir", type=Path)
        p.add_argument("-v", "--verbose", action="store_true")
        _model_flags(p)
        return p

    p = command("spectrum", "leading eigenpairs of the discretised generator")
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--n-fields", type=int, help="number of eigenfunction fields to write")
    p.add_argument("--export-matrix", action="store_true", default=None)

    p = command("analytic", "small-noise eigenvalue families")
    p.add_argument("--l-max", type=int)
    p.add_argument("--n-max", type=int)

    p = command("simulate", "Euler-Maruyama paths")
    _sim_flags(p)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--x0", type=float)
    p.add_argument("--y0", type=float)
    p.add_argument("--stationary", action="store_true", default=None)
    p.add_argument("--record-every", type=int)

    p = command("correlate", "empirical correlation from a long path")
    _sim_flags(p)
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--obs", choices=["x", "y", "x2", "x3", "r2"])
    p.add_argument("--obs2", choices=["x", "y", "x2", "x3", "r2"])
    p.add_argument("--burn-in", type=float)
    p.add_argument("--max-lag-time", type=float)
    p.add_argument("--batches", type=int)
    p.add_argument("--with-spectrum", action="store_true", default=None,
                   help="also reconstruct the correlation from an eigensolve")

    p = command("power", "Lorentzian power spectra of observables")
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--obs", action="append", choices=["x", "y", "x2", "x3", "r2"])
    p.add_argument("--z-min", type=float)
    p.add_argument("--z-max", type=float)
    p.add_argument("--dz", type=float)

    p = command("sweep", "eigenvalues along a parameter sweep")
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--vary", choices=["delta", "epsilon", "beta"])
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--fixed-grid", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--branches", type=int)

    p = command("isochron", "asymptotic phase and Hormander rank")
    p.add_argument("--forcing", choices=["radial", "azimuthal", "isochron"])
    p.add_argument("--forcing-sigma", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--points", type=int, help="number of sampled points")
    p.add_argument("--r", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--seed", type=int)

    command("floquet", "Floquet data and phase-diffusion coefficient")

    p = command("bound", "Monte Carlo check of the ultimate bound")
    p.add_argument("--r0", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--n-times", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the JSON config and explicit flags."""
    settings = dict(DEFAULTS)
    if THREADS_ENV in os.environ:
        settings["workers"] = int(os.environ[THREADS_ENV])
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in settings:
                raise ConfigurationError(f"unknown config key {key!r}")
            settings[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        settings[key] = value
    settings["output_dir"] = str(settings["output_dir"])
    return settings


def _params(s: dict) -> ModelParams:
    if s["delta"] is None:
        raise ConfigurationError("--delta is required (flag or config)")
    return ModelParams(s["delta"], s["gamma"], s["beta"], s["epsilon"])


def _arnoldi_opts(s: dict, k: int | None = None):
    from .eigensolver import ArnoldiOptions

    return ArnoldiOptions(
        k=k if k is not None else s["k"],
        tol=s["tol"],
        max_restarts=s["max_restarts"],
        selection="shift_invert" if s["solver"] == "shift-invert" else "largest_real_part",
        sigma=s["sigma"],
    )


def _require_noise(params: ModelParams, what: str):
    if params.epsilon <= 0:
        raise ConfigurationError(f"degenerate diffusion: {what} needs epsilon > 0")


def _grid(params: ModelParams, s: dict):
    return build_grid(params, s["nx"], s["ny"], s["width"])


def _solve(params: ModelParams, s: dict):
    from .eigensolver import solve_mixing_spectrum
    from .fokker_planck import assemble

    grid = _grid(params, s)
    gen = assemble(params, grid)
    return gen, solve_mixing_spectrum(gen, s["k"], _arnoldi_opts(s))


# ---------------------------------------------------------------------------
# commands; each returns (exit code, list of written files, extra manifest fields)


def cmd_spectrum(s, out):
    from .eigensolver import write_spectrum
    from .fokker_planck import assemble, export_matrix

    params = _params(s)
    _require_noise(params, "the Fokker-Planck operator")
    opts = _arnoldi_opts(s)
    grid = _grid(params, s)
    gen = assemble(params, grid)
    extra = dict(grid=grid.as_dict())
    files = []
    if s["export_matrix"]:
        files += list(export_matrix(out / "adjoint.coo", gen.adjoint, grid, params, operator="fokker_planck"))
    try:
        from .eigensolver import solve_mixing_spectrum

        spec = solve_mixing_spectrum(gen, s["k"], opts)
    except ConvergenceError as exc:
        table = out / "spectrum_partial.csv"
        with table.open("w") as fh:
            fh.write("j,re_lambda,im_lambda,residual\n")
            vals = exc.values if exc.values is not None else []
            res = exc.residuals if exc.residuals is not None else []
            for j, (lam, r) in enumerate(zip(vals, res)):
                fh.write(f"{j},{_fmt(lam.real)},{_fmt(lam.imag)},{_fmt(r)}\n")
        print(f"partial convergence: {exc}", file=sys.stderr)
        return EXIT_PARTIAL, files + [table], extra
    files += write_spectrum(out, spec, s["n_fields"])
    for j, p in enumerate(spec.pairs[: min(6, len(spec.pairs))]):
        print(f"lambda_{j} = {p.lam.real:+.6f} {p.lam.imag:+.6f}i  residual {p.residual:.2e}")
    return EXIT_OK, files, extra


def cmd_analytic(s, out):
    from .analytic import small_noise_spectrum

    params = _params(s)
    spec = small_noise_spectrum(params, s["l_max"], s["n_max"])
    path = out / "analytic_spectrum.csv"
    with path.open("w") as fh:
        fh.write("family,l,n,re_lambda,im_lambda\n")
        for p in spec:
            fh.write(f"{p.family},{p.l},{p.n},{_fmt(p.lam.real)},{_fmt(p.lam.imag)}\n")
    meta = _write_json(out / "analytic.json", dict(params=params.as_dict(), tau=spec.tau,
                                                    families=sorted({p.family for p in spec})))
    print(f"{len(spec)} eigenvalues, decorrelation time tau = {spec.tau:.6g}")
    return EXIT_OK, [path, meta], {}


def _initial(s):
    if s["stationary"]:
        return "stationary"
    if s["x0"] is None:
        return (0.0, 0.0)
    return (s["x0"], s["y0"])


def cmd_simulate(s, out):
    from .montecarlo import SimulationConfig, simulate

    params = _params(s)
    cfg = SimulationConfig(s["dt"] or SIM_DT, s["n_steps"], s["n_traj"], s["seed"], _initial(s), s["record_every"])
    traj = simulate(params, cfg)
    files = []
    path = out / "trajectory.csv"
    np.savetxt(path, traj.as_array(0), delimiter=",", header="t,x,y", comments="", fmt="%.17g")
    files.append(path)
    if cfg.n_trajectories > 1:
        r2 = traj.r2
        table = np.column_stack([traj.t, r2.mean(axis=0), r2.std(axis=0, ddof=1) / math.sqrt(cfg.n_trajectories)])
        ens = out / "ensemble.csv"
        np.savetxt(ens, table, delimiter=",", header="t,mean,stderr", comments="", fmt="%.17g")
        files.append(ens)
    return EXIT_OK, files, dict(seeds=[cfg.seed])


def cmd_correlate(s, out):
    from .montecarlo import SimulationConfig, correlation_with_stderr, simulate
    from .spectral import OBSERVABLES, observable, reconstruct_correlation

    params = _params(s)
    f_name = s["obs"] or "x"
    g_name = s["obs2"] or f_name
    if s["with_spectrum"]:
        _require_noise(params, "the spectral reconstruction")
    dt = s["dt"] or SIM_DT
    burn = s["burn_in"]
    if burn is None:
        burn = 10.0 / max(min(abs(params.delta), params.epsilon**2), 1e-3)
    n_burn = int(round(burn / dt))
    max_lag = int(round(s["max_lag_time"] / dt))
    cfg = SimulationConfig(dt, s["n_steps"] + n_burn, 1, s["seed"],
                           "stationary" if params.epsilon > 0 else (1.0, 0.0))
    traj = simulate(params, cfg)
    x, y = traj.x[0, n_burn:], traj.y[0, n_burn:]
    table = correlation_with_stderr(OBSERVABLES[f_name](x, y), OBSERVABLES[g_name](x, y), dt, max_lag, s["batches"])
    path = out / "correlation_empirical.csv"
    np.savetxt(path, table, delimiter=",", header="t,C,stderr", comments="", fmt="%.17g")
    files = [path]
    extra = dict(seeds=[cfg.seed], burn_in=burn)
    if s["with_spectrum"]:
        gen, spec = _solve(params, s)
        series = reconstruct_correlation(spec, observable(f_name, gen.grid), observable(g_name, gen.grid), table[:, 0])
        files.append(series.write_csv(out / "correlation_spectral.csv"))
        files.append(series.write_manifest(out / "correlation_spectral.json"))
        extra["grid"] = gen.grid.as_dict()
    return EXIT_OK, files, extra


def cmd_power(s, out):
    from .spectral import observable, reconstruct_power_spectrum

    params = _params(s)
    _require_noise(params, "the power spectrum")
    names = s["obs"] or ["x"]
    if isinstance(names, str):
        names = [names]
    if not s["dz"] > 0 or s["z_max"] <= s["z_min"]:
        raise ConfigurationError("need dz > 0 and z_max > z_min")
    z = np.arange(s["z_min"], s["z_max"] + 0.5 * s["dz"], s["dz"])
    gen, spec = _solve(params, s)
    files, peaks = [], {}
    for name in names:
        f = observable(name, gen.grid)
        series = reconstruct_power_spectrum(spec, f, f, z)
        files.append(series.write_csv(out / f"power_{name}.csv"))
        v = series.values
        local = [float(z[i]) for i in range(1, len(z) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
        peaks[name] = dict(argmax=series.argmax(), local_maxima=local, **series.manifest())
        print(f"{name}: argmax z = {series.argmax():.3f}, local maxima {local}")
    files.append(_write_json(out / "power.json", dict(omega_f=params.omega_f, observables=peaks)))
    return EXIT_OK, files, dict(grid=gen.grid.as_dict())


def cmd_sweep(s, out):
    from .sweeps import SweepConfig, run_sweep, standard_fits, write_fits

    params_template = dict(delta=s["delta"] if s["delta"] is not None else 0.0,
                           gamma=s["gamma"], beta=s["beta"], epsilon=s["epsilon"])
    if not s["values"]:
        raise ConfigurationError("--values is required for a sweep")
    cfg = SweepConfig(
        varying=s["vary"], values=s["values"], fixed=ModelParams(**params_template),
        nx=s["nx"], ny=s["ny"], width_multiplier=s["width"], k=s["k"], output_dir=out,
        fixed_grid=bool(s["fixed_grid"]),
        selection="shift_invert" if s["solver"] == "shift-invert" else "largest_real_part",
        n_branches=s["branches"], workers=s["workers"] or 1,
    )
    for v in cfg.values:
        if cfg.params_at(v).epsilon <= 0:
            raise ConfigurationError("degenerate diffusion: every sweep point needs epsilon > 0")
    result = run_sweep(cfg)
    fits = {}
    for b in range(cfg.n_branches):
        fits.update(standard_fits(result, b))
    files = [out / "sweep.csv", out / "branches.csv", write_fits(out / "fits.json", fits)]
    if result.ambiguities:
        files.append(_write_json(out / "ambiguities.json", result.ambiguities))
    for name, fit in fits.items():
        print(f"{name}: a={fit.coefficients[0]:.6g} b={fit.coefficients[1]:.6g} R2={fit.r_squared:.6f}")
    code = EXIT_PARTIAL if result.failed() else EXIT_OK
    return code, [f for f in files if f.exists()], {}


def cmd_isochron(s, out):
    from .model import ForcingField, asymptotic_phase, hormander_rank

    params = _params(s)
    if s["forcing"] == "isochron":
        forcing = ForcingField.isochron_tangent(params, s["forcing_sigma"])
    else:
        forcing = ForcingField(s["forcing"], s["forcing_sigma"])
    if s["r"] is not None:
        pts = [(s["r"], s["theta"] or 0.0)]
    else:
        rng = np.random.Generator(np.random.PCG64(s["seed"]))
        scale = math.sqrt(abs(params.delta)) if params.delta != 0 else 1.0
        pts = [(float(scale * rng.uniform(0.3, 2.0)), float(rng.uniform(0, 2 * math.pi))) for _ in range(s["points"])]
    rows = []
    for r, th in pts:
        rank = hormander_rank(params, [forcing], r, th, depth=s["depth"])
        rows.append(dict(r=r, theta=th, rank=rank, phase=float(asymptotic_phase(params, r, th))))
    ranks = sorted({row["rank"] for row in rows})
    path = _write_json(out / "isochron.json", dict(forcing=s["forcing"], depth=s["depth"], ranks=ranks, points=rows))
    print(f"Hormander rank ({s['forcing']} forcing, depth {s['depth']}): {ranks}")
    return EXIT_OK, [path], dict(seeds=[s["seed"]])


def cmd_floquet(s, out):
    from .model import floquet_data, phase_diffusion_coefficient

    params = _params(s)
    fl = floquet_data(params)
    phi = phase_diffusion_coefficient(params)
    payload = dict(
        period=fl.period, R=fl.R, characteristic_exponents=fl.characteristic_exponents,
        multipliers=fl.multipliers(), right_vectors=[v.tolist() for v in fl.right_vectors_cartesian()],
        left_vectors=[v.tolist() for v in fl.left_vectors_cartesian()], phase_diffusion=phi,
        phase_diffusion_closed_form=-params.epsilon**2 * (1 + params.beta**2) / params.delta,
    )
    path = _write_json(out / "floquet.json", payload)
    print(f"period {fl.period:.6g}, exponents {fl.characteristic_exponents}, Phi = {phi:.10g}")
    return EXIT_OK, [path], {}


def cmd_bound(s, out):
    from .montecarlo import check_ultimate_bound, fit_decay_rate
    from .model import stationary_mean_r2

    params = _params(s)
    n_traj = s["n_traj"] if s["n_traj"] > 1 else 10000
    rep = check_ultimate_bound(params, s["r0"], s["horizon"], n_traj, s["seed"], s["n_times"], s["dt"])
    path = out / "bound.csv"
    np.savetxt(path, rep.table, delimiter=",", header="t,mean,stderr,bound", comments="", fmt="%.17g")
    try:
        rate = fit_decay_rate(rep.table[:, 0], rep.table[:, 1], stationary_mean_r2(params), rep.table[:, 2])
    except ConfigurationError:
        rate = None
    report = dict(passed=rep.passed, max_violation_in_se=rep.max_violation_in_se, k=rep.k, c=rep.c, d=rep.d,
                  fitted_decay_rate=rate, n_traj=n_traj)
    rpath = _write_json(out / "bound.json", report)
    print(f"{'PASS' if rep.passed else 'FAIL'}: k={rep.k:g} c={rep.c:.6g} d={rep.d:.6g}, "
          f"max violation {rep.max_violation_in_se:.2f} SE, fitted decay rate {rate}")
    return EXIT_OK, [path, rpath], dict(seeds=[s["seed"]])


HANDLERS = {
    "spectrum": cmd_spectrum, "analytic": cmd_analytic, "simulate": cmd_simulate,
    "correlate": cmd_correlate, "power": cmd_power, "sweep": cmd_sweep,
    "isochron": cmd_isochron, "floquet": cmd_floquet, "bound": cmd_bound,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        settings = resolve_settings(args)
        if args.command not in ("sweep",):
            _params(settings)  # validate before any heavy work
        out = Path(settings["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        code, files, extra = HANDLERS[args.command](settings, out)
    except HopfMixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    manifest = RunManifest(args.command, settings, grid=extra.get("grid"), seeds=extra.get("seeds", []),
                           status="ok" if code == EXIT_OK else "partial")
    for f in files:
        manifest.add_output(Path(f), out)
    manifest.duration_s = time.perf_counter() - start
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
