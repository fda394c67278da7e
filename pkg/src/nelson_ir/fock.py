"""
Truncated Fock-space representation of the renormalized Hamiltonian.

Each antipodal pair ``(k, -k)`` of the mode grid is recombined into a cosine
and a sine mode with real couplings, so every operator is a real symmetric
matrix. With ``X = a + a^*`` the Hamiltonian reads

    H = H_p + sum_m omega_m a_m^* a_m + sum_m g_m(q) X_m + c_0(q),

    g_cos = sqrt(w / omega) rho_hat (cos k.q - h_hat),   g_sin = -sqrt(w / omega) rho_hat sin k.q,
    c_0(q) = -sum_j w_j rho_hat^2 h_hat / k_j^2 (cos k_j.q - h_hat)   (sum over all modes).

For a frozen particle every mode is a displaced oscillator, which gives the
closed-form oracle ``E_0 = c_0 - sum g^2/omega`` and ``<N> = sum g^2/omega^2``.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import spherical_jn

from .model import ValidationError, build_mode_grid

log = logging.getLogger(__name__)

MATRIX_FREE_DIM = 100_000


class FockSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# particle degrees of freedom
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Static:
    """Particle frozen at ``q`` (infinite mass)."""

    q: tuple = (0.0, 0.0, 0.0)

    @property
    def dim(self):
        return 1

    def positions(self):
        return np.asarray(self.q, dtype=float).reshape(1, 3)

    def hamiltonian(self, V=None):
        r = np.linalg.norm(self.q)
        return np.array([[0.0 if V is None else float(V(np.array([r]))[0])]])

    def phases(self, grid):
        """``(cos k.q, sin k.q)`` per site and representative mode."""
        kq = self.positions() @ grid.k[: grid.half].T
        return np.cos(kq), np.sin(kq)


@dataclass(frozen=True)
class Grid1D:
    """Sites on the z axis, centred on the origin, with a finite-difference Laplacian."""

    n_sites: int
    spacing: float

    @property
    def dim(self):
        return self.n_sites

    def positions(self):
        z = (np.arange(self.n_sites) - 0.5 * (self.n_sites - 1)) * self.spacing
        return np.column_stack([np.zeros_like(z), np.zeros_like(z), z])

    def hamiltonian(self, V):
        z = self.positions()[:, 2]
        h = self.spacing
        H = np.diag(1.0 / h**2 + V(np.abs(z)))
        off = -0.5 / h**2 * np.ones(self.n_sites - 1)
        return H + np.diag(off, 1) + np.diag(off, -1)

    def phases(self, grid):
        kq = self.positions() @ grid.k[: grid.half].T
        return np.cos(kq), np.sin(kq)


@dataclass(frozen=True)
class RadialGrid:
    """s-wave radial sites ``r_i = i h`` (``u = r psi`` representation, Dirichlet ends).

    Position couplings are projected on the s-wave: ``cos k.q -> j_0(kr)`` and
    ``sin k.q -> 0``. Angular excitations of the particle are not represented.
    """

    n_r: int
    R_max: float

    @property
    def dim(self):
        return self.n_r

    @property
    def h(self):
        return self.R_max / (self.n_r + 1)

    @property
    def r(self):
        return self.h * np.arange(1, self.n_r + 1)

    def positions(self):
        return np.column_stack([np.zeros(self.n_r), np.zeros(self.n_r), self.r])

    def hamiltonian(self, V):
        h = self.h
        H = np.diag(1.0 / h**2 + V(self.r))
        off = -0.5 / h**2 * np.ones(self.n_r - 1)
        return H + np.diag(off, 1) + np.diag(off, -1)

    def phases(self, grid):
        kabs = grid.kabs[: grid.half]
        c = spherical_jn(0, np.outer(self.r, kabs))
        return c, np.zeros_like(c)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


def _occupations(n_modes, n_max):
    """All occupation vectors with total <= n_max, ordered by total then lexicographically."""
    rows = []
    for total in range(n_max + 1):
        for combo in combinations_with_replacement(range(n_modes), total):
            occ = np.zeros(n_modes, dtype=np.int64)
            for m in combo:
                occ[m] += 1
            rows.append(occ)
    return np.array(rows, dtype=np.int64).reshape(-1, n_modes)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Particle sites tensor boson occupations with ``sum n <= n_max``.

    Real modes are ordered as ``(cos_0, sin_0, cos_1, sin_1, ...)`` over the
    grid's representatives. ``mode_set="cos"`` keeps only the cosine modes,
    which is exact when the sine couplings vanish (s-wave particle).
    """

    grid: object
    n_max: int
    particle: object = field(default_factory=Static)
    mode_set: str = "all"
    max_dim: int = 5_000_000

    def __post_init__(self):
        if self.n_max < 0:
            raise ValidationError("n_max must be >= 0")
        if self.mode_set not in ("all", "cos"):
            raise ValidationError("mode_set must be 'all' or 'cos'")
        M = self.n_modes
        nb = comb(M + self.n_max, self.n_max)
        dim = nb * self.particle.dim
        if dim > self.max_dim:
            mem = dim * (2 * M + 2) * 16 / 2**30
            raise ValidationError(f"basis dimension {dim} exceeds budget {self.max_dim} (~{mem:.1f} GiB sparse)")
        occ = _occupations(M, self.n_max)
        base = np.int64(self.n_max + 1)
        if M * np.log(float(base)) > 62 * np.log(2):
            raise ValidationError("too many modes for integer state keys")
        powers = base ** np.arange(M, dtype=np.int64)
        keys = occ @ powers
        order = np.argsort(keys, kind="stable")
        object.__setattr__(self, "occupations", occ)
        object.__setattr__(self, "_powers", powers)
        object.__setattr__(self, "_sorted_keys", keys[order])
        object.__setattr__(self, "_order", order)

    @property
    def mode_columns(self):
        """Columns of :func:`real_mode_couplings` kept in this basis."""
        step = 2 if self.mode_set == "cos" else 1
        return np.arange(0, 2 * self.grid.half, step)

    @property
    def n_modes(self):
        return self.mode_columns.size

    @property
    def boson_dim(self):
        return self.occupations.shape[0]

    @property
    def dim(self):
        return self.particle.dim * self.boson_dim

    @property
    def omega(self):
        return np.repeat(self.grid.kabs[: self.grid.half], 2)[self.mode_columns]

    def index(self, occ):
        """Boson index of an occupation vector (or -1 if outside the truncation)."""
        key = np.asarray(occ, dtype=np.int64) @ self._powers
        pos = np.searchsorted(self._sorted_keys, key)
        pos = np.minimum(pos, self._sorted_keys.size - 1)
        found = self._sorted_keys[pos] == key
        return np.where(found, self._order[pos], -1)

    def ladder(self, m):
        """Matrix of ``a_m + a_m^*`` on the boson space."""
        occ = self.occupations
        src = np.nonzero(occ[:, m] > 0)[0]
        lowered = occ[src].copy()
        lowered[:, m] -= 1
        dst = self.index(lowered)
        vals = np.sqrt(occ[src, m].astype(float))
        A = sp.coo_matrix((vals, (dst, src)), shape=(self.boson_dim,) * 2).tocsr()
        return A + A.T

    def number(self):
        return self.occupations.sum(axis=1).astype(float)


# ---------------------------------------------------------------------------
# couplings and counterterm
# ---------------------------------------------------------------------------


def real_mode_couplings(grid, ff, ir, particle):
    """``g[site, m]`` for the real modes of ``FockBasis`` ordering."""
    h = grid.half
    kabs = grid.kabs[:h]
    amp = np.sqrt(grid.w[:h] / kabs) * ff.rho_hat(kabs)
    c, s = particle.phases(grid)
    g = np.empty((c.shape[0], 2 * h))
    g[:, 0::2] = amp * (c - ir.h_hat(kabs))
    g[:, 1::2] = -amp * s
    return g


def counterterm(grid, ff, ir, particle, method="modes"):
    """``c_0`` per particle site.

    ``modes`` sums over the grid (the same truncation as the field);
    ``quadrature`` evaluates ``-4 pi \\int rho_hat^2 h_hat (sinc(kr) - h_hat) dk``.
    """
    if method == "modes":
        h = grid.half
        kabs = grid.kabs[:h]
        c, _ = particle.phases(grid)
        amp = -2 * grid.w[:h] * ff.rho_hat_sq(kabs) * ir.h_hat(kabs) / kabs**2
        return (c - ir.h_hat(kabs)) @ amp
    if method == "quadrature":
        K = ff.uv_cutoff(1e-32)
        out = []
        for x in particle.positions():
            r = np.linalg.norm(x)

            def f(k):
                hh = ir.h_hat(k)
                return ff.rho_hat_sq(k) * hh * (np.sinc(k * r / np.pi) - hh)

            val, _ = quad(f, 0.0, K, epsabs=1e-14, epsrel=1e-12, limit=400)
            out.append(-4 * np.pi * val)
        return np.array(out)
    raise ValidationError(f"unknown counterterm method {method!r}")


def van_hove_oracle(grid, ff, ir, q=(0.0, 0.0, 0.0)):
    """Closed-form ``(E0, <N>)`` of the frozen-particle Hamiltonian (particle energy excluded)."""
    p = Static(tuple(q))
    g = real_mode_couplings(grid, ff, ir, p)[0]
    omega = np.repeat(grid.kabs[: grid.half], 2)
    c0 = counterterm(grid, ff, ir, p)[0]
    return float(c0 - np.sum(g**2 / omega)), float(np.sum(g**2 / omega**2))


def n_exact_quadrature(ff, k_min, k_max):
    """``2 pi \\int_{k_min}^{k_max} rho_hat^2 / k dk``: frozen particle, h = 0."""
    val, _ = quad(lambda u: ff.rho_hat_sq(np.exp(u)), np.log(k_min), np.log(k_max), epsabs=0, epsrel=1e-12)
    return 2 * np.pi * val


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SparseHamiltonian:
    basis: FockBasis
    H_p: np.ndarray
    couplings: np.ndarray
    c0: np.ndarray
    matrix: object = None
    symmetric: bool = True

    @property
    def dimension(self):
        return self.basis.dim

    def _free_diag(self):
        return self.basis.occupations @ self.basis.omega

    def assemble(self):
        """Explicit CSR matrix (cached)."""
        if self.matrix is not None:
            return self.matrix
        b = self.basis
        P = b.particle.dim
        Ib = sp.identity(b.boson_dim, format="csr")
        H = sp.kron(sp.csr_matrix(self.H_p + np.diag(self.c0)), Ib, format="csr")
        H = H + sp.kron(sp.identity(P, format="csr"), sp.diags(self._free_diag()), format="csr")
        for m in range(b.n_modes):
            g = self.couplings[:, m]
            if not np.any(g):
                continue
            H = H + sp.kron(sp.diags(g), b.ladder(m), format="csr")
        H = H.tocsr()
        H.sum_duplicates()
        asym = abs(H - H.T).max() if H.nnz else 0.0
        if asym > 1e-12 * max(1.0, abs(H).max()):
            raise ValidationError(f"assembled Hamiltonian is not symmetric ({asym:.2e})")
        if not np.all(np.isfinite(H.data)):
            raise ValidationError("non-finite Hamiltonian entries")
        self.matrix = H
        return H

    def lower_bound(self):
        """``min spectrum(H_p + c_0 - sum_m g_m^2 / omega_m)``, a lower bound on E0.

        For a fixed particle site each mode obeys ``omega a^*a + g X >= -g^2/omega``.
        """
        shift = self.c0 - (self.couplings**2) @ (1.0 / self.basis.omega)
        return float(np.linalg.eigvalsh(self.H_p + np.diag(shift))[0])

    def entries(self):
        H = self.assemble().tocoo()
        return np.column_stack([H.row, H.col, H.data])

    def operator(self):
        """Matrix-free ``LinearOperator`` with the same action as :meth:`assemble`."""
        b = self.basis
        P, nb = b.particle.dim, b.boson_dim
        free = self._free_diag()
        diag_p = self.H_p + np.diag(self.c0)
        active = [(m, b.ladder(m)) for m in range(b.n_modes) if np.any(self.couplings[:, m])]

        def matvec(v):
            V = np.asarray(v, dtype=float).reshape(P, nb)
            out = diag_p @ V + V * free[None, :]
            for m, X in active:
                out += self.couplings[:, m][:, None] * (X @ V.T).T
            return out.ravel()

        return LinearOperator((b.dim, b.dim), matvec=matvec, rmatvec=matvec, dtype=float)


def build_hamiltonian(basis, ff, ir, V=None, counterterm_method="modes"):
    """Renormalized Hamiltonian on a truncated basis."""
    p = basis.particle
    if not isinstance(p, Static) and V is None:
        raise ValidationError("a mobile particle needs a potential")
    H_p = p.hamiltonian(V)
    g_all = real_mode_couplings(basis.grid, ff, ir, p)
    dropped = np.setdiff1d(np.arange(g_all.shape[1]), basis.mode_columns)
    if np.any(g_all[:, dropped]):
        raise ValidationError("mode_set drops modes with non-zero coupling")
    g = g_all[:, basis.mode_columns]
    c0 = counterterm(basis.grid, ff, ir, p, counterterm_method)
    return SparseHamiltonian(basis, H_p, g, c0)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


@dataclass
class SpectralResult:
    E0: float
    gap: float
    ground_vector: np.ndarray
    mean_boson_number: float
    vacuum_overlap: float
    residual: float
    method: str = ""

    def row(self):
        return (self.E0, self.gap, self.mean_boson_number, self.vacuum_overlap, self.residual)


def _sign_fix(v):
    big = np.nonzero(np.abs(v) > 1e-12 * np.abs(v).max())[0]
    return -v if v[big[0]] < 0 else v


def _particle_ground(H_p):
    P = H_p.shape[0]
    if P == 1:
        return np.ones(1)
    w, v = eigh_tridiagonal(np.diag(H_p).copy(), np.diag(H_p, 1).copy(), select="i", select_range=(0, 0))
    return _sign_fix(v[:, 0])


def ground_state(H, tol=1e-10, method="auto", dense_limit=2000, maxiter=None):
    """Two lowest eigenpairs and ground-state observables.

    ``method`` is ``dense`` (LAPACK), ``sparse`` (Lanczos on the CSR matrix),
    ``matrix-free`` (Lanczos on the matvec) or ``auto``.
    """
    n = H.dimension
    if method == "auto":
        method = "dense" if n <= dense_limit else ("sparse" if n <= MATRIX_FREE_DIM else "matrix-free")
    if method == "dense":
        A = H.assemble().toarray()
        w, v = eigh(A, subset_by_index=[0, min(1, n - 1)])
        op = H.assemble()
    else:
        k = min(2, n - 1)
        try:
            if method == "sparse":
                # shift-invert just below a rigorous lower bound: the low spectrum
                # E0 + n omega_min is tightly clustered when k_min is small
                op = H.assemble()
                lb = H.lower_bound()
                sigma = lb - 1e-6 * max(1.0, abs(lb))
                w, v = eigsh(op, k=k, sigma=sigma, which="LM", tol=tol * 1e-2, maxiter=maxiter or 10 * n)
            else:
                op = H.operator()
                w, v = eigsh(op, k=k, which="SA", tol=tol * 1e-2, maxiter=maxiter or 20 * n, ncv=min(n - 1, 60))
        except ArpackNoConvergence as exc:
            raise FockSolverError(f"Lanczos did not converge; {len(exc.eigenvalues)} eigenvalues found") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    psi = _sign_fix(v[:, 0] / np.linalg.norm(v[:, 0]))
    E0 = float(w[0])
    res = float(np.linalg.norm(op @ psi - E0 * psi))
    if res > tol * max(1.0, abs(E0)) * 1e3:
        raise FockSolverError(f"residual {res:.2e} too large")
    gap = float(w[1] - w[0]) if len(w) > 1 else float("nan")
    b = H.basis
    Psi = psi.reshape(b.particle.dim, b.boson_dim)
    N = float(np.sum(Psi**2 * b.number()[None, :]))
    vac = int(b.index(np.zeros(b.n_modes, dtype=np.int64)))
    overlap = float((_particle_ground(H.H_p) @ Psi[:, vac]) ** 2)
    return SpectralResult(E0, max(gap, 0.0), psi, N, overlap, res, method)


# ---------------------------------------------------------------------------
# observables and scans
# ---------------------------------------------------------------------------


def transform_observable(basis, obs, mode=None, ff=None, ir=None):
    """Matrix of a physical observable in the working (shifted) representation.

    Parameters
    ----------
    obs : {"identity", "q2", "field"}
        ``q2`` is the particle's ``|q|^2``. ``field`` is the cosine quadrature
        ``(a + a^*)/sqrt(2 omega)`` of real mode ``mode``; the shift adds the
        c-number mean ``sqrt(2 w) gamma_hat(k)`` of that quadrature.
    """
    P, nb = basis.particle.dim, basis.boson_dim
    Ib = sp.identity(nb, format="csr")
    if obs == "identity":
        return sp.identity(basis.dim, format="csr")
    if obs == "q2":
        r2 = np.sum(basis.particle.positions() ** 2, axis=1)
        return sp.kron(sp.diags(r2), Ib, format="csr")
    if obs == "field":
        if mode is None or ff is None or ir is None:
            raise ValidationError("field observable needs mode, ff and ir")
        col = int(basis.mode_columns[mode])
        if col % 2:
            raise ValidationError("only cosine quadratures are shifted; sine modes have zero mean")
        j = col // 2
        k = basis.grid.kabs[j]
        X = basis.ladder(mode) / np.sqrt(2 * k)
        gamma = np.sqrt(2 * basis.grid.w[j]) * (-ff.rho_hat(k) * ir.h_hat(k) / k**2)
        return sp.kron(sp.identity(P, format="csr"), X + gamma * Ib, format="csr")
    raise ValidationError(f"unsupported observable {obs!r}")


def expectation(result, A):
    return float(result.ground_vector @ (A @ result.ground_vector))


def ir_scan(k_mins, ff, ir, V=None, particle=None, k_max=8.6, panel_nodes=2, n_dirs=2, n_max=3, tol=1e-10,
            method="auto", mode_set=None):
    """Solve the truncated problem for each ``k_min``.

    Grids are decade-aligned composite rules, so lowering ``k_min`` only adds
    shells. Failures are recorded as NaN rows with the error text.
    Returns a list of dicts.
    """
    particle = Static() if particle is None else particle
    if mode_set is None:
        mode_set = "cos" if isinstance(particle, RadialGrid) else "all"
    rows = []
    for k_min in k_mins:
        row = {"k_min": float(k_min), "n_max": n_max}
        try:
            grid = build_mode_grid(k_min, k_max, 0, n_dirs, panel_nodes=panel_nodes)
            basis = FockBasis(grid, n_max, particle, mode_set)
            H = build_hamiltonian(basis, ff, ir, V)
            res = ground_state(H, tol=tol, method=method)
            row.update(
                M=basis.n_modes,
                dim=basis.dim,
                E0=res.E0,
                gap=res.gap,
                N_mean=res.mean_boson_number,
                vacuum_overlap=res.vacuum_overlap,
                residual=res.residual,
                error="",
            )
            if isinstance(particle, Static):
                E_ex, N_ex = van_hove_oracle(grid, ff, ir, particle.q)
                row.update(E0_exact=E_ex + float(H.H_p[0, 0]), N_exact=N_ex)
        except (FockSolverError, ValidationError, MemoryError) as exc:
            log.warning("scan point k_min=%g failed: %s", k_min, exc)
            row.update(M=np.nan, dim=np.nan, E0=np.nan, gap=np.nan, N_mean=np.nan,
                       vacuum_overlap=np.nan, residual=np.nan, error=str(exc))
        rows.append(row)
    return rows


__all__ = [
    "FockBasis",
    "FockSolverError",
    "Grid1D",
    "RadialGrid",
    "SparseHamiltonian",
    "SpectralResult",
    "Static",
    "build_hamiltonian",
    "counterterm",
    "expectation",
    "ground_state",
    "ir_scan",
    "n_exact_quadrature",
    "real_mode_couplings",
    "transform_observable",
    "van_hove_oracle",
]
