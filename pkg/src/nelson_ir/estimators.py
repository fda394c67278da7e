"""
Estimators on path ensembles: m_T, the infrared exponent D_T, density ratios
and the constants of the overlap bound, with batch-means error bars.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import nnls

from .kernels import exp_kernel_weights
from .model import ValidationError, half_directions
from .particle import stationary_moment


# ---------------------------------------------------------------------------
# error bars
# ---------------------------------------------------------------------------


def batch_means(x, n_batches=20):
    """Mean and standard error of per-chain series ``x`` (shape ``(n_chains, n, ...)``).

    Each chain is cut into ``ceil(n_batches / n_chains)`` contiguous batches so
    at least ``n_batches`` batch means enter the error estimate.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None]
    n_chains, n = x.shape[:2]
    per = int(np.ceil(n_batches / n_chains))
    if n < per:
        raise ValidationError(f"need at least {per} samples per chain for {n_batches} batches")
    size = n // per
    trimmed = x[:, : size * per].reshape((n_chains, per, size) + x.shape[2:])
    means = trimmed.mean(axis=2).reshape((n_chains * per,) + x.shape[2:])
    nb = means.shape[0]
    return x.mean(axis=(0, 1)), means.std(axis=0, ddof=1) / np.sqrt(nb)


def integrated_autocorrelation(x, c=5.0):
    """Integrated autocorrelation time of a 1D series (Sokal's adaptive window)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    y = x - x.mean()
    if n < 4 or not np.any(y):
        return 1.0
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 2 * np.cumsum(acf) - 1
    for m in range(1, n):
        if m >= c * tau[m]:
            return float(max(tau[m], 1.0))
    return float(max(tau[-1], 1.0))


def chain_iat(x):
    """Mean integrated autocorrelation time over chains of ``x`` (shape ``(n_chains, n)``)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return float(np.mean([integrated_autocorrelation(row) for row in x]))


# ---------------------------------------------------------------------------
# m_T
# ---------------------------------------------------------------------------


def probe_directions(n_half=6):
    """Antipodally closed unit vectors (the icosahedron's 12 vertices by default)."""
    d = half_directions(n_half)
    return np.concatenate([d, -d])


def mT_samples(ens, ir, k, s, t, directions=None):
    """Per-sample direction-averaged ``(e^{ik.q_t} - h)(e^{-ik.q_s} - h)``.

    With an antipodally closed direction set the average is real.
    """
    dirs = probe_directions() if directions is None else np.asarray(directions, dtype=float)
    kk = float(k) * dirs
    hh = float(ir.h_hat(float(k)))
    qt, qs = ens.node(t), ens.node(s)
    ft = np.exp(1j * qt @ kk.T) - hh
    fs = np.exp(-1j * qs @ kk.T) - hh
    return (ft * fs).mean(axis=-1)


@dataclass(frozen=True)
class Estimate:
    value: complex
    stderr: float
    iat: float = 1.0

    def as_tuple(self):
        return self.value, self.stderr


def estimate_mT(ens, ir, k, s, t, directions=None):
    """``m_T(k; s, t)`` with batch-means standard error.

    The uniform bound ``|m_T| <= (1 + h_max)^2`` is asserted on the estimate.
    """
    x = mT_samples(ens, ir, k, s, t, directions)
    mean, se = batch_means(x)
    se = float(np.hypot(np.real(se), np.imag(se)))
    bound = (1 + ir.h_max) ** 2
    if abs(mean) > bound * (1 + 1e-12):
        raise AssertionError(f"|m_T| = {abs(mean)} exceeds the uniform bound {bound}")
    return Estimate(complex(mean), se, chain_iat(x.real))


def mT_table(ens, ir, k_values=None, st_pairs=None, directions=None):
    """Rows ``(|k|, s, t, Re m, Im m, stderr)``."""
    k_values = ens.config.k_probes if k_values is None else k_values
    st_pairs = ens.config.st_pairs if st_pairs is None else st_pairs
    rows = []
    for s, t in st_pairs:
        for k in k_values:
            est = estimate_mT(ens, ir, k, s, t, directions)
            rows.append((float(k), float(s), float(t), est.value.real, est.value.imag, est.stderr))
    return np.array(rows)


def loglog_slope(k, m):
    """Least-squares slope of ``log|m|`` against ``log k``."""
    k, m = np.asarray(k, dtype=float), np.abs(np.asarray(m))
    if np.any(m <= 0):
        raise ValidationError("log-log slope needs non-zero estimates")
    slope, _ = np.polyfit(np.log(k), np.log(m), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# infrared exponent
# ---------------------------------------------------------------------------


def overlap_amplitudes(positions, times, grid, ir, chunk=64):
    """``F_j = sum_i a_i(k_j) (e^{ik_j.q_i} - h_hat)`` for each stored path and representative mode.

    ``a_i(k)`` are product-quadrature weights of ``e^{-|k||tau|}`` on the
    time nodes, so ``|F_j|^2`` is the full double time integral of the
    m_T integrand for one path.
    """
    h = grid.half
    kv = grid.k[:h]
    kabs = grid.kabs[:h]
    a = exp_kernel_weights(kabs, 0.0, times)  # (h, n)
    hh = ir.h_hat(kabs)
    flat = positions.reshape((-1,) + positions.shape[-2:])
    out = np.empty((flat.shape[0], h), dtype=complex)
    for s in range(0, flat.shape[0], chunk):
        ph = np.exp(1j * flat[s : s + chunk] @ kv.T) - hh  # (c, n, h)
        out[s : s + chunk] = np.einsum("jn,cnj->cj", a, ph)
    return out.reshape(positions.shape[:-2] + (h,))


def overlap_exponent_samples(ens, ff, ir, grid):
    """Per-sample ``D = sum_j w_j |rho_hat|^2 / |k_j| |F_j|^2``, shape ``(n_chains, n_kept)``."""
    F = overlap_amplitudes(ens.positions, ens.tg.nodes, grid, ir)
    h = grid.half
    kabs = grid.kabs[:h]
    # both members of an antipodal pair give the same |F|^2
    amp = 2 * grid.w[:h] * ff.rho_hat_sq(kabs) / kabs
    return np.einsum("j,...j->...", amp, np.abs(F) ** 2), F


def deterministic_exponent(ff, ir, grid, tg, q=(0.0, 0.0, 0.0)):
    """D for the constant path ``q``; with h = 0 this is the ``m = 1`` prediction."""
    pos = np.tile(np.asarray(q, dtype=float), (tg.n, 1))[None, None]
    F = overlap_amplitudes(pos, tg.nodes, grid, ir)[0, 0]
    h = grid.half
    kabs = grid.kabs[:h]
    return float(np.sum(2 * grid.w[:h] * ff.rho_hat_sq(kabs) / kabs * np.abs(F) ** 2))


def shell_integrand(F, grid):
    """Direction- and sample-averaged ``|F|^2`` per radial shell: ``(k_shell, J, stderr)``."""
    h = grid.half
    kabs = grid.kabs[:h]
    shells, inverse = np.unique(np.round(kabs, 12), return_inverse=True)
    P = np.abs(F) ** 2
    J = np.stack([P[..., inverse == s].mean(axis=-1) for s in range(shells.size)], axis=-1)
    mean, se = batch_means(J)
    return shells, mean, se


def fit_A1_A2(k, J, se=None):
    """Non-negative fit ``J(k) ~ A1/k + A2``."""
    k = np.asarray(k, dtype=float)
    w = np.ones_like(k) if se is None else 1.0 / np.maximum(np.asarray(se), 1e-300)
    X = np.column_stack([1 / k, np.ones_like(k)]) * w[:, None]
    coef, _ = nnls(X, np.asarray(J) * w)
    return float(coef[0]), float(coef[1])


def fit_log_growth(T, D, se=None):
    """Weighted fit ``D = a + b ln T``; returns ``(a, b, b_stderr, R^2)``."""
    x = np.log(np.asarray(T, dtype=float))
    y = np.asarray(D, dtype=float)
    wts = np.ones_like(y) if se is None else 1.0 / np.maximum(np.asarray(se), 1e-300) ** 2
    X = np.column_stack([np.ones_like(x), x])
    WX = X * wts[:, None]
    cov = np.linalg.inv(X.T @ WX)
    a, b = cov @ (WX.T @ y)
    resid = y - (a + b * x)
    ybar = np.sum(wts * y) / np.sum(wts)
    r2 = 1 - np.sum(wts * resid**2) / np.sum(wts * (y - ybar) ** 2)
    dof = max(len(y) - 2, 1)
    scale = np.sum(wts * resid**2) / dof if se is None else 1.0
    return float(a), float(b), float(np.sqrt(cov[1, 1] * scale)), float(r2)


def jensen_lower_bound(c_hat, D):
    return float(c_hat**-0.5 * np.exp(-c_hat * D / 8))


# ---------------------------------------------------------------------------
# density ratios
# ---------------------------------------------------------------------------


def _radial_bins(gs, n_bins):
    return gs.radial_quantile(np.linspace(0.0, 1.0, n_bins + 1))


def marginal_density_ratio(ens, gs, t=0.0, n_bins=10, min_expected=5):
    """Histogram of the time-``t`` radial marginal against the stationary law.

    Bins have equal stationary probability. Returns ``(c_hat, table)`` where
    table rows are ``(r_lo, r_hi, count, expected, ratio)`` and ``c_hat`` is the
    larger of the sup ratio and sup inverse ratio over non-empty bins with at
    least ``min_expected`` expected counts.
    """
    r = np.linalg.norm(ens.node(t), axis=-1).ravel()
    edges = _radial_bins(gs, n_bins)
    edges[-1] = max(edges[-1], r.max()) + 1e-12
    counts, _ = np.histogram(r, bins=edges)
    expected = np.full(n_bins, r.size / n_bins)
    ratio = counts / expected
    ok = (counts > 0) & (expected >= min_expected)
    c_hat = float(max(ratio[ok].max(), (1 / ratio[ok]).max())) if np.any(ok) else float("nan")
    table = np.column_stack([edges[:-1], edges[1:], counts, expected, ratio])
    return c_hat, table


def two_time_density_bound(ens, gs, st_pairs, n_bins=8, min_gap=1.0):
    """Sup over bins and probe pairs (|t - s| >= min_gap) of the joint radial density ratio."""
    edges = _radial_bins(gs, n_bins)
    best = 0.0
    used = 0
    for s, t in st_pairs:
        if abs(t - s) < min_gap:
            continue
        rs = np.linalg.norm(ens.node(s), axis=-1).ravel()
        rt = np.linalg.norm(ens.node(t), axis=-1).ravel()
        e = edges.copy()
        e[-1] = max(e[-1], rs.max(), rt.max()) + 1e-12
        H, _, _ = np.histogram2d(rs, rt, bins=[e, e])
        best = max(best, float((H / (rs.size / n_bins**2)).max()))
        used += 1
    return best if used else float("nan")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    m_table: np.ndarray
    D_T: float
    D_T_stderr: float
    D_T_iat: float
    c_hat: float
    c1_hat: float
    c2_hat: float
    c3: dict
    A1_hat: float
    A2_hat: float
    lower_bound: float
    acceptance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.D_T_stderr < 0 or (self.m_table.size and np.any(self.m_table[:, 5] < 0)):
            raise ValidationError("standard errors must be non-negative")
        if self.m_table.size:
            m = np.hypot(self.m_table[:, 3], self.m_table[:, 4])
            if np.any(m > self.c1_hat * (1 + 1e-12)):
                raise ValidationError("m_T table exceeds the uniform bound")

    def to_dict(self):
        d = asdict(self)
        d["m_table"] = [dict(zip(("k", "s", "t", "re", "im", "stderr"), map(float, row))) for row in self.m_table]
        return d


def overlap_exponent(ens, ff, ir, grid, gs=None):
    """Infrared exponent with error bar, the constants of the bound and the Jensen lower bound."""
    D, F = overlap_exponent_samples(ens, ff, ir, grid)
    D_mean, D_se = batch_means(D)
    notes = []
    if D_mean < 0:
        notes.append("negative D_T at noise level")
    shells, J, J_se = shell_integrand(F, grid)
    A1, A2 = fit_A1_A2(shells, J, J_se)
    c_hat = 1.0
    c2 = float("nan")
    c3 = {}
    if gs is not None:
        c_hat, _ = marginal_density_ratio(ens, gs)
        c2 = two_time_density_bound(ens, gs, ens.config.st_pairs)
        c3 = {0.0: stationary_moment(gs, 0.0), 1.0: stationary_moment(gs, 1.0)}
    return DiagnosticsReport(
        m_table=mT_table(ens, ir),
        D_T=float(D_mean),
        D_T_stderr=float(D_se),
        D_T_iat=chain_iat(D),
        c_hat=c_hat,
        c1_hat=(1 + ir.h_max) ** 2,
        c2_hat=c2,
        c3=c3,
        A1_hat=A1,
        A2_hat=A2,
        lower_bound=jensen_lower_bound(c_hat, float(D_mean)),
        acceptance=dict(ens.acceptance),
        notes=notes,
    )


__all__ = [
    "DiagnosticsReport",
    "Estimate",
    "batch_means",
    "chain_iat",
    "deterministic_exponent",
    "estimate_mT",
    "fit_A1_A2",
    "fit_log_growth",
    "integrated_autocorrelation",
    "jensen_lower_bound",
    "loglog_slope",
    "marginal_density_ratio",
    "mT_table",
    "overlap_amplitudes",
    "overlap_exponent",
    "overlap_exponent_samples",
    "probe_directions",
    "shell_integrand",
    "two_time_density_bound",
]
