"""Leading mixing eigenvalues of the discretised generator.

Eigenpairs come from implicitly restarted Arnoldi (ARPACK through
``scipy.sparse.linalg.eigs``), either selecting the largest real parts
directly or through a shift-invert transform about a small positive
shift. The Kolmogorov operator gives the eigenfunctions psi_j, the
Fokker-Planck operator gives the eigendensities rho_j, and the two lists
are paired by eigenvalue.

With mu the invariant density, the L^2(mu) adjoint eigenfunctions are
psi*_j = conj(rho_j) / mu, scaled so that <psi*_j, psi_j>_mu = 1.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import GridField, Grid2D, ModelParams, SparseOperator, weighted_inner, write_field_csv
from .errors import ConfigurationError, ConvergenceError, NumericalError, PairingError
from .fokker_planck import DiscretizedGenerator

SELECTIONS = ("largest_real_part", "shift_invert")


@dataclass(frozen=True)
class ArnoldiOptions:
    """Settings for :func:`arnoldi_leading`.

    ``m`` is the Krylov dimension (default max(2k + 8, 40), capped at the
    matrix size). ``shift_invert`` selects the eigenvalues of largest
    magnitude of (A - sigma I)^{-1}, which are those of A closest to
    ``sigma``.
    """

    k: int = 20
    m: int | None = None
    tol: float = 1e-8
    max_restarts: int = 500
    selection: str = "largest_real_part"
    sigma: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.m is not None and self.m <= self.k:
            raise ConfigurationError(f"Krylov dimension m={self.m} must exceed k={self.k}")
        if self.selection not in SELECTIONS:
            raise ConfigurationError(f"selection must be one of {SELECTIONS}")
        if not (self.tol > 0) or self.max_restarts < 1:
            raise ConfigurationError("tol must be > 0 and max_restarts >= 1")

    def krylov_dim(self, n: int) -> int:
        m = self.m if self.m is not None else max(2 * self.k + 8, 40)
        return min(m, n)

    def replace(self, **changes) -> "ArnoldiOptions":
        values = dict(k=self.k, m=self.m, tol=self.tol, max_restarts=self.max_restarts,
                      selection=self.selection, sigma=self.sigma)
        values.update(changes)
        return ArnoldiOptions(**values)


@dataclass
class RitzPair:
    ritz_value: complex
    ritz_vector: np.ndarray = field(repr=False)
    residual: float


def _as_matrix(operator):
    if isinstance(operator, SparseOperator):
        return operator.matrix
    if sp.issparse(operator) or isinstance(operator, np.ndarray):
        return operator
    return None


def _guarded(matvec):
    def mv(v):
        out = matvec(v)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite value in operator matvec output")
        return out

    return mv


def sort_key(lam: complex):
    """Descending real part, then ascending |Im|, positive imaginary first."""
    return (-round(lam.real, 10), round(abs(lam.imag), 10), -lam.imag)


def arnoldi_leading(operator, n: int | None = None, opts: ArnoldiOptions | None = None) -> list[RitzPair]:
    """Leading Ritz pairs of a real linear operator.

    ``operator`` is a sparse or dense matrix, a :class:`SparseOperator`, or
    a matvec callable (in which case ``n`` is required and shift-invert is
    unavailable). The start vector is all ones, so runs are deterministic.
    Residuals ||A v - lambda v|| / ||v|| are recomputed outside ARPACK.
    """
    opts = opts or ArnoldiOptions()
    matrix = _as_matrix(operator)
    if matrix is not None:
        n = matrix.shape[0]
        matvec = _guarded(lambda v: matrix @ v)
    else:
        if n is None:
            raise ConfigurationError("dimension n is required for a matvec callable")
        matvec = _guarded(operator)
    m = opts.krylov_dim(n)
    if not opts.k < m <= n:
        raise ConfigurationError(f"need k < m <= n, got k={opts.k}, m={m}, n={n}")
    k = opts.k
    if k >= n - 1:
        raise ConfigurationError(f"k={k} too large for a {n}x{n} operator (ARPACK needs k < n - 1)")

    A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.ones(n) / math.sqrt(n)
    kwargs = dict(k=k, v0=v0, ncv=m, maxiter=opts.max_restarts, tol=opts.tol)
    try:
        if opts.selection == "shift_invert":
            if matrix is None:
                raise ConfigurationError("shift-invert needs an explicit matrix")
            shifted = (sp.csc_matrix(matrix) - opts.sigma * sp.identity(n, format="csc")).tocsc()
            lu = spla.splu(shifted)
            OPinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
            vals, vecs = spla.eigs(A, sigma=opts.sigma, which="LM", OPinv=OPinv, **kwargs)
        else:
            vals, vecs = spla.eigs(A, which="LR", **kwargs)
    except spla.ArpackNoConvergence as exc:
        partial = _ritz_pairs(matvec, exc.eigenvalues, exc.eigenvectors)
        raise ConvergenceError(
            f"Arnoldi did not converge after {opts.max_restarts} restarts "
            f"({len(partial)} of {k} pairs converged)",
            values=np.array([p.ritz_value for p in partial]),
            vectors=[p.ritz_vector for p in partial],
            residuals=np.array([p.residual for p in partial]),
        ) from exc
    return _ritz_pairs(matvec, vals, vecs)


def _ritz_pairs(matvec, vals, vecs) -> list[RitzPair]:
    pairs = []
    for lam, v in zip(np.atleast_1d(vals), np.asarray(vecs).T):
        Av = matvec(v.real) + 1j * matvec(v.imag)
        res = float(np.linalg.norm(Av - lam * v) / np.linalg.norm(v))
        pairs.append(RitzPair(complex(lam), v, res))
    pairs.sort(key=lambda p: sort_key(p.ritz_value))
    return pairs


@dataclass
class EigenPair:
    lam: complex
    psi: GridField = field(repr=False)
    psi_adjoint: GridField = field(repr=False)
    residual: float
    adjoint_residual: float = 0.0


@dataclass
class MixingSpectrum:
    """Leading eigenpairs of the generator with their L^2(mu) adjoints.

    ``pairs[0]`` is the invariant pair (lambda = 0, psi = 1, psi* = 1).
    ``clamped_cells`` counts cells where mu is too small to divide by;
    psi* is set to 0 there.
    """

    pairs: list
    invariant_density: GridField
    grid: Grid2D
    params: ModelParams
    clamped_cells: int = 0

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.pairs])

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def nonzero(self) -> list:
        return self.pairs[1:]

    def decorrelation_time(self) -> float:
        return -1.0 / self.pairs[1].lam.real


def _match(target: complex, candidates: list[RitzPair], used: set, tol: float):
    best, best_d = None, math.inf
    for i, c in enumerate(candidates):
        if i in used:
            continue
        d = abs(c.ritz_value - target)
        if d < best_d:
            best, best_d = i, d
    if best is None or best_d > tol:
        return None, best_d
    return best, best_d


def _density_from_null(rho: np.ndarray, grid: Grid2D) -> np.ndarray:
    rho = rho.real if np.iscomplexobj(rho) else rho
    if rho.sum() < 0:
        rho = -rho
    neg = rho.min()
    if neg < -1e-8 * rho.max():
        warnings.warn(
            f"invariant density has negative lobes (min {neg:.3e}, max {rho.max():.3e})",
            RuntimeWarning,
            stacklevel=3,
        )
    rho = np.clip(rho, 0.0, None)
    return rho / (rho.sum() * grid.cell_area)


def solve_mixing_spectrum(
    gen: DiscretizedGenerator,
    k: int = 20,
    opts: ArnoldiOptions | None = None,
    match_tol: float = 1e-6,
) -> MixingSpectrum:
    """Leading ``k`` eigenpairs (including the invariant pair) of the
    discretised generator.

    Both operators are solved with ``k + 2`` Ritz values so that a
    conjugate pair split by the cutoff can be completed; the result keeps
    the first ``k`` eigenvalues plus a partner if the k-th one is complex.
    """
    if k < 2:
        raise ConfigurationError("k must be >= 2")
    opts = (opts or ArnoldiOptions()).replace(k=k + 2)
    grid = gen.grid
    area = grid.cell_area

    right = arnoldi_leading(gen.generator, opts=opts)
    left = arnoldi_leading(gen.adjoint, opts=opts)

    # pair every generator eigenvalue with the same eigenvalue of K*
    matched, used = [], set()
    unmatched = []
    for rp in right:
        i, dist = _match(rp.ritz_value, left, used, match_tol)
        if i is None:
            unmatched.append((rp.ritz_value, dist))
            continue
        used.add(i)
        matched.append((rp, left[i]))

    # keep one representative per conjugate pair (Im >= 0), then rebuild
    reps = [(r, l) for r, l in matched if r.ritz_value.imag >= -1e-12 * max(1.0, abs(r.ritz_value))]
    reps.sort(key=lambda rl: sort_key(rl[0].ritz_value))
    if not reps or abs(reps[0][0].ritz_value) > max(1e3 * opts.tol, 1e-6):
        raise PairingError(f"no zero eigenvalue among the matched pairs: {[r.ritz_value for r, _ in reps][:3]}")

    null_rho = left[[i for i, c in enumerate(left) if c is reps[0][1]][0]].ritz_vector
    mu = _density_from_null(null_rho, grid)
    mu_field = GridField(grid, mu)
    clamp = mu < 1e-14 * mu.max()
    safe_mu = np.where(clamp, 1.0, mu)

    ones = np.ones(grid.n_cells)
    pairs = [EigenPair(0j, GridField(grid, ones), GridField(grid, ones), reps[0][0].residual, reps[0][1].residual)]
    for rp, lp in reps[1:]:
        lam = rp.ritz_value
        psi = rp.ritz_vector.astype(complex)
        rho = lp.ritz_vector.astype(complex)
        is_real = abs(lam.imag) <= 1e-10 * max(1.0, abs(lam))
        if is_real:
            lam = complex(lam.real, 0.0)
            psi, rho = psi.real.astype(complex), rho.real.astype(complex)
        # psi normalised in L^2(mu), phase fixed by the largest entry
        psi = psi / math.sqrt(np.sum(np.abs(psi) ** 2 * mu) * area)
        pivot = psi[np.argmax(np.abs(psi))]
        psi = psi * (abs(pivot) / pivot)
        c = np.sum(psi * rho) * area
        if abs(c) < 1e-300:
            raise PairingError(f"eigenfunction and eigendensity for {lam} are orthogonal")
        rho = rho / c
        adj = np.where(clamp, 0.0, np.conj(rho) / safe_mu)
        pairs.append(EigenPair(lam, GridField(grid, psi), GridField(grid, adj), rp.residual, lp.residual))
        if not is_real:
            pairs.append(EigenPair(lam.conjugate(), GridField(grid, np.conj(psi)),
                                   GridField(grid, np.conj(adj)), rp.residual, lp.residual))

    pairs.sort(key=lambda p: sort_key(p.lam))
    keep = min(k, len(pairs))
    if keep < len(pairs) and pairs[keep - 1].lam.imag > 0 and pairs[keep].lam == pairs[keep - 1].lam.conjugate():
        keep += 1
    pairs = pairs[:keep]

    if len(pairs) < k:
        kept = [p.lam for p in pairs]
        raise PairingError(
            f"only {len(pairs)} of {k} eigenvalues could be paired between K and K*; "
            f"unmatched (value, distance): {unmatched}; paired: {kept}"
        )
    return MixingSpectrum(pairs, mu_field, grid, gen.params, int(clamp.sum()))


def biorthogonality_matrix(spectrum: MixingSpectrum) -> np.ndarray:
    """Matrix of <psi_i, psi*_j>_mu over the returned pairs."""
    mu = spectrum.invariant_density
    return np.array([[weighted_inner(p.psi, q.psi_adjoint, mu) for q in spectrum.pairs] for p in spectrum.pairs])


def write_spectrum(out_dir, spectrum: MixingSpectrum, n_fields: int = 0, extra: dict | None = None) -> list[Path]:
    """Write ``spectrum.csv`` (j,re_lambda,im_lambda,residual), the first
    ``n_fields`` eigenfunction and adjoint fields, the invariant density,
    and a ``spectrum.json`` manifest listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    table = out / "spectrum.csv"
    with table.open("w") as fh:
        fh.write("j,re_lambda,im_lambda,residual\n")
        for j, p in enumerate(spectrum.pairs):
            fh.write(f"{j},{p.lam.real:.17g},{p.lam.imag:.17g},{p.residual:.17g}\n")
    files.append(table)
    files.append(write_field_csv(out / "invariant_density.csv", spectrum.invariant_density))
    fields = {}
    for j, p in enumerate(spectrum.pairs[:n_fields]):
        a = write_field_csv(out / f"psi_{j}.csv", p.psi)
        b = write_field_csv(out / f"psi_adjoint_{j}.csv", p.psi_adjoint)
        fields[j] = [a.name, b.name]
        files += [a, b]
    manifest = dict(
        params=spectrum.params.as_dict(),
        grid=spectrum.grid.as_dict(),
        n_pairs=len(spectrum.pairs),
        clamped_cells=spectrum.clamped_cells,
        table=table.name,
        invariant_density="invariant_density.csv",
        fields=fields,
        **(extra or {}),
    )
    mpath = out / "spectrum.json"
    mpath.write_text(json.dumps(manifest, indent=2))
    files.append(mpath)
    return files
