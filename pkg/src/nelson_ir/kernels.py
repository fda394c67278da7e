"""
Deterministic kernels: the pair potential W, the mean shift gamma, the
classical minimizer, the field covariance and the boundary energies.

Every k-integral of a spherically symmetric integrand is reduced to a 1D
radial integral before quadrature, using

    \\int d^3k f(|k|) cos(k.x) = 4 pi \\int_0^inf k^2 f(k) sin(kr)/(kr) dk.

Direct evaluations go through adaptive Gauss-Kronrod (``scipy.integrate.quad``,
QAWO for the oscillatory tail). Tables used in hot loops are filled with a
composite Gauss-Legendre rule and interpolated.
"""

import logging
import warnings

import numpy as np
from scipy import integrate
from scipy.interpolate import RectBivariateSpline

from .model import ValidationError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message}: estimate={estimate!r}, error bound={error!r}")
        self.estimate = estimate
        self.error = error


def _quad(f, a, b, tol, what, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-11, limit=400, **kw)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-11, limit=400, **kw)
            raise QuadratureError(f"{what} did not converge ({exc})", val, err) from None
    if err > 10 * max(tol, 1e-11 * abs(val)):
        raise QuadratureError(f"{what} did not converge", val, err)
    return val, err


def _sin_transform(g, r, K, tol, what):
    """``\\int_0^K g(k) sin(k r) dk`` with QAWO for the oscillatory part."""
    if r == 0.0:
        return 0.0, 0.0
    k0 = min(K, 2.0 / r)
    val, err = _quad(lambda k: g(k) * np.sin(k * r), 0.0, k0, tol, what)
    if k0 < K:
        v2, e2 = _quad(g, k0, K, tol, what, weight="sin", wvar=r)
        val, err = val + v2, err + e2
    return val, err


def _norm(x):
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x)) if x.ndim else abs(float(x))


# ---------------------------------------------------------------------------
# direct (adaptive) evaluations
# ---------------------------------------------------------------------------


def pair_potential(ff, q, t, tol=DEFAULT_TOL, return_error=False):
    """Effective pair interaction of the particle with itself.

    ``W(q, t) = -1/4 \\int |rho_hat|^2/|k| e^{-|k||t|} cos(k.q) dk``, evaluated as
    ``-pi \\int_0^K |rho_hat|^2 e^{-k|t|} sin(kr)/r dk``.
    """
    r, tau = _norm(q), abs(float(t))
    if ff.charge == 0:
        return (0.0, 0.0) if return_error else 0.0
    K = ff.uv_cutoff()
    tol = tol * ff.rho_hat_sq(0.0)  # tol is relative to the integrand's scale

    def g(k):
        return ff.rho_hat_sq(k) * np.exp(-k * tau)

    if r == 0.0:
        val, err = _quad(lambda k: k * g(k), 0.0, K, tol, "W(0,t)")
    else:
        val, err = _sin_transform(g, r, K, r * tol, "W(q,t)")
        val, err = val / r, err / r
    val, err = -np.pi * val, np.pi * err
    return (val, err) if return_error else val


def mean_shift_gamma(ff, ir, k):
    """Mean of the shifted free field in momentum space, ``-rho_hat h_hat / |k|^2``."""
    k = _norm(k)
    if k == 0:
        raise ValidationError("gamma_hat is singular at k = 0")
    return float(-ff.rho_hat(k) * ir.h_hat(k) / k**2)


def _sinc_transform(fhat, r, K, tol, what):
    """``4 pi \\int_0^K k^2 fhat(k) sin(kr)/(kr) dk``."""
    if r == 0.0:
        val, _ = _quad(lambda k: k**2 * fhat(k), 0.0, K, tol, what)
        return 4.0 * np.pi * val
    val, _ = _sin_transform(lambda k: k * fhat(k), r, K, r * tol, what)
    return 4.0 * np.pi * val / r


def gamma_position(ff, ir, x, tol=DEFAULT_TOL):
    """Position-space mean shift ``gamma(x) = \\int e^{ik.x} gamma_hat(k) dk``."""
    if ff.charge == 0 or ir.variant == "zero":
        return 0.0
    K = ff.uv_cutoff(1e-32)
    tol = tol * abs(ff.rho_hat(0.0))
    return _sinc_transform(lambda k: -ff.rho_hat(k) * ir.h_hat(k) / k**2, _norm(x), K, tol, "gamma(x)")


def classical_minimizer(ff, x, tol=DEFAULT_TOL):
    """Field of minimal energy ``(Delta^{-1} rho)(x)`` for the particle at the origin.

    Decays like ``-e / (4 pi |x|)``; for the Gaussian form factor it equals
    ``-e erf(Lambda |x|) / (4 pi |x|)``.
    """
    if ff.charge == 0:
        return 0.0
    K = ff.uv_cutoff(1e-32)
    tol = tol * abs(ff.rho_hat(0.0))
    return _sinc_transform(lambda k: -ff.rho_hat(k) / k**2, _norm(x), K, tol, "xi_min(x)")


def field_covariance(k, dt):
    """Stationary covariance kernel ``e^{-|k||dt|} / (2|k|)`` of one field mode."""
    k = np.abs(np.asarray(k, dtype=float))
    if np.any(k == 0):
        raise ValidationError("field covariance is singular at k = 0")
    return np.exp(-k * np.abs(dt)) / (2.0 * k)


# ---------------------------------------------------------------------------
# product quadrature for exponential time kernels
# ---------------------------------------------------------------------------


def _pq(x):
    """``P = \\int_0^1 (1-s) e^{-xs} ds`` and ``Q = \\int_0^1 s e^{-xs} ds``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    em = np.expm1(-xs)
    P = np.where(small, 0.5 - x / 6 + x**2 / 24 - x**3 / 120 + x**4 / 720, (xs + em) / xs**2)
    Q = np.where(small, 0.5 - x / 3 + x**2 / 8 - x**3 / 30 + x**4 / 144, (-em - xs * np.exp(-xs)) / xs**2)
    return P, Q


def exp_kernel_weights(k, t, nodes):
    """Weights ``a`` with ``\\int e^{-k|t-tau|} f(tau) dtau ~= sum_i a_i f(tau_i)``.

    The integral runs over ``[nodes[0], nodes[-1]]`` and is exact when ``f`` is
    piecewise linear between nodes, so the exponential is never sampled.

    Returns an array of shape ``(len(k), len(nodes))``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))[:, None]
    nodes = np.asarray(nodes, dtype=float)
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    out = np.zeros((k.shape[0], nodes.size))

    left = b <= t  # kernel grows towards b
    P, Q = _pq(k * h[left])
    E = np.exp(-k * (t - b[left]))
    il = np.nonzero(left)[0]
    np.add.at(out, (slice(None), il + 1), h[left] * E * P)
    np.add.at(out, (slice(None), il), h[left] * E * Q)

    right = a >= t
    P, Q = _pq(k * h[right])
    E = np.exp(-k * (a[right] - t))
    ir = np.nonzero(right)[0]
    np.add.at(out, (slice(None), ir), h[right] * E * P)
    np.add.at(out, (slice(None), ir + 1), h[right] * E * Q)

    inside = np.nonzero(~left & ~right)[0]
    for c in inside:
        h1, h2 = t - a[c], b[c] - t
        theta = h1 / h[c]
        P1, Q1 = _pq(k[:, 0] * h1)
        P2, Q2 = _pq(k[:, 0] * h2)
        ft = h1 * P1 + h2 * P2  # weight on f(t)
        out[:, c] += ft * (1 - theta) + h1 * Q1
        out[:, c + 1] += ft * theta + h2 * Q2
    return out


def exp_kernel_integral(k, t, T):
    """``\\int_{-T}^{T} e^{-k|t - tau|} dtau`` in closed form."""
    k = np.asarray(k, dtype=float)
    return -(np.expm1(-k * (T - t)) + np.expm1(-k * (T + t))) / k


def exp_tail_integral(k, t, T):
    """``\\int_{|s|>T} e^{-k|t - s|} ds = (e^{-k(T-t)} + e^{-k(T+t)}) / k``."""
    k = np.asarray(k, dtype=float)
    return (np.exp(-k * (T - t)) + np.exp(-k * (T + t))) / k


# ---------------------------------------------------------------------------
# vectorized Gauss-Legendre radial rule used for tables
# ---------------------------------------------------------------------------


def radial_rule(K, n_panels=24, per_panel=32):
    """Composite Gauss-Legendre nodes/weights on ``[0, K]``."""
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(0.0, K, n_panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    k = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    wk = (0.5 * (hi - lo) * w).ravel()
    return k, wk


def _sin_over_r(k, r):
    """``sin(kr)/r`` and its r-derivative, regular at r = 0."""
    kr = np.multiply.outer(r, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(kr < 1e-4, k * (1 - kr**2 / 6), np.sin(kr) / np.where(r[:, None] > 0, r[:, None], 1))
        ds = np.where(
            kr < 1e-4,
            -(k**2) * kr / 3,
            k**2 * (kr * np.cos(kr) - np.sin(kr)) / np.where(kr > 0, kr, 1) ** 2,
        )
    return s, ds


def w_values(ff, r, tau, rule=None):
    """``W(r, tau)`` and ``dW/dr`` on the outer product of ``r`` and ``tau``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    tau = np.atleast_1d(np.abs(np.asarray(tau, dtype=float)))
    k, wk = rule if rule is not None else radial_rule(ff.uv_cutoff())
    s, ds = _sin_over_r(k, r)
    amp = -np.pi * wk * ff.rho_hat_sq(k)
    decay = np.exp(-np.outer(k, tau)) * amp[:, None]
    return s @ decay, ds @ decay


def boundary_density_values(ff, ir, r, sigma, rule=None):
    """``G(r, sigma) = -2 pi \\int |rho_hat|^2 h_hat sin(kr)/(kr) e^{-k sigma} dk`` and ``dG/dr``.

    The boundary energy density at time t is ``G(r, T - t) + G(r, T + t)``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    k, wk = rule if rule is not None else radial_rule(ff.uv_cutoff())
    s, ds = _sin_over_r(k, r)
    amp = -2.0 * np.pi * wk * ff.rho_hat_sq(k) * ir.h_hat(k) / k
    decay = np.exp(-np.outer(k, sigma)) * amp[:, None]
    return s @ decay, ds @ decay


def boundary_energy(path, T, ff, ir, grid=None, tail="exact"):
    """Energy of the path against the constant boundary condition outside ``[-T, T]``.

    Sum of the two boundary exponents of the Gibbs weight,
    ``-1/2 sum_t dt \\int dk |rho_hat|^2 h_hat / k^2 cos(k.q_t) (e^{-k(T-t)} + e^{-k(T+t)})``,
    time-summed with the trapezoid weights of the path's grid.

    Parameters
    ----------
    path : ParticlePath
    grid : ModeGrid, optional
        Sum over these modes instead of radial quadrature.
    tail : {"exact", "matched"}
        ``exact`` uses the closed-form tail integral. ``matched`` (mode grid
        only) replaces it by ``2/k - sum_s dt_s e^{-k|t-s|}``, the tail seen by a
        node-sampled interaction functional; this is what makes the
        Gaussian factorization an identity at finite ``dt``.
    """
    times = np.asarray(path.times)
    if abs(times[0] + T) > 1e-9 * T or abs(times[-1] - T) > 1e-9 * T:
        raise ValidationError("path does not cover [-T, T]")
    if ff.charge == 0 or ir.variant == "zero":
        return 0.0
    tw = path.time_weights
    q = np.asarray(path.positions)
    if grid is None:
        if tail != "exact":
            raise ValidationError("matched tail requires a mode grid")
        r = np.linalg.norm(q, axis=1)
        total = 0.0
        for i in range(times.size):
            g, _ = boundary_density_values(ff, ir, r[i : i + 1], [T - times[i], T + times[i]])
            total += tw[i] * g.sum()
        return float(total)
    kabs = grid.kabs
    amp = -0.5 * grid.w * ff.rho_hat_sq(kabs) * ir.h_hat(kabs) / kabs
    if tail == "exact":
        tails = exp_tail_integral(kabs[None, :], times[:, None], T)
    elif tail == "matched":
        lag = np.abs(times[:, None] - times[None, :])
        S = np.einsum("s,sti->ti", tw, np.exp(-lag[:, :, None] * kabs[None, None, :]))
        tails = 2.0 / kabs[None, :] - S
    else:
        raise ValidationError(f"unknown tail mode {tail!r}")
    cosines = np.cos(q @ grid.k.T)
    return float(np.sum(tw[:, None] * amp[None, :] * cosines * tails))


def pair_potential_modes(grid, ff, q, t):
    """Mode-grid counterpart of :func:`pair_potential` (same truncation as the field)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kabs = grid.kabs
    amp = -0.25 * grid.w * ff.rho_hat_sq(kabs) / kabs
    return np.cos(q @ grid.k.T) * np.exp(-np.abs(t)[:, None] * kabs[None, :]) @ amp


# ---------------------------------------------------------------------------
# caches
# ---------------------------------------------------------------------------


class KernelCache:
    """Bicubic tables of W over ``(log(1+r), log(1+tau))`` and of gamma over r.

    Built once, read-only afterwards. Queries outside the table fall back to
    direct quadrature.
    """

    def __init__(self, ff, ir, r_max=12.0, tau_max=130.0, n_r=161, n_tau=161, tol=DEFAULT_TOL):
        self.ff, self.ir = ff, ir
        self.r_max, self.tau_max, self.tol = r_max, tau_max, tol
        self.u = np.linspace(0.0, np.log1p(r_max), n_r)
        self.v = np.linspace(0.0, np.log1p(tau_max), n_tau)
        r, tau = np.expm1(self.u), np.expm1(self.v)
        rule = radial_rule(ff.uv_cutoff(), n_panels=48, per_panel=32)
        self.w_grid, _ = w_values(ff, r, tau, rule)
        self._w = RectBivariateSpline(self.u, self.v, self.w_grid, kx=3, ky=3)
        self.gamma_r = r
        self.gamma_grid = np.array([gamma_position(ff, ir, x, tol) for x in r])
        self.n_fallback = 0

    def W(self, r, tau):
        r = np.abs(np.asarray(r, dtype=float))
        tau = np.abs(np.asarray(tau, dtype=float))
        r, tau = np.broadcast_arrays(r, tau)
        out = self._w.ev(np.log1p(r), np.log1p(tau))
        miss = (r > self.r_max) | (tau > self.tau_max)
        if np.any(miss):
            self.n_fallback += int(miss.sum())
            log.info("W cache miss at %d points; using direct quadrature", int(miss.sum()))
            out = np.array(out, dtype=float)
            out[miss] = [pair_potential(self.ff, x, y, self.tol) for x, y in zip(r[miss], tau[miss])]
        return out

    def gamma(self, r):
        return np.interp(np.abs(r), self.gamma_r, self.gamma_grid)

    def rows(self):
        """(r, tau, W) rows of the table, for CSV export."""
        r, tau = np.expm1(self.u), np.expm1(self.v)
        R, TAU = np.meshgrid(r, tau, indexing="ij")
        return np.column_stack([R.ravel(), TAU.ravel(), self.w_grid.ravel()])


class PathKernelTables:
    """Lag-resolved tables for paths living on one TimeGrid.

    For paths on a uniform time grid every pair (i, j) has ``|t_i - t_j| = l dt``
    exactly, so W is tabulated per lag as a function of r and interpolated by
    cubic Hermite with the analytic r-derivative. The boundary density gets
    one table row per node.
    """

    def __init__(self, ff, ir, tg, r_max=12.0, h=0.02):
        self.ff, self.ir, self.tg = ff, ir, tg
        self.h, self.r_max = h, r_max
        self.r = np.arange(0.0, r_max + 2 * h, h)
        rule = radial_rule(ff.uv_cutoff(), n_panels=24, per_panel=32)
        lags = np.arange(tg.n) * tg.dt
        if ff.charge == 0:
            z = np.zeros((tg.n, self.r.size))
            self.w_val, self.w_der, self.b_val, self.b_der = z, z, z, z
            self.n_fallback = 0
            return
        w, dw = w_values(ff, self.r, lags, rule)
        self.w_val, self.w_der = np.ascontiguousarray(w.T), np.ascontiguousarray(dw.T)
        t = tg.nodes
        if ir.variant == "zero":
            self.b_val = np.zeros((tg.n, self.r.size))
            self.b_der = np.zeros((tg.n, self.r.size))
        else:
            g1, d1 = boundary_density_values(ff, ir, self.r, tg.T - t, rule)
            g2, d2 = boundary_density_values(ff, ir, self.r, tg.T + t, rule)
            self.b_val = np.ascontiguousarray((g1 + g2).T)
            self.b_der = np.ascontiguousarray((d1 + d2).T)
        self.n_fallback = 0

    def _hermite(self, val, der, row, r):
        x = r / self.h
        i = np.minimum(x.astype(np.int64), self.r.size - 2)
        s = x - i
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return (
            h00 * val[row, i]
            + h10 * self.h * der[row, i]
            + h01 * val[row, i + 1]
            + h11 * self.h * der[row, i + 1]
        )

    def _check_range(self, r):
        miss = r > self.r_max
        if np.any(miss):
            self.n_fallback += int(miss.sum())
            log.info("path kernel table miss at %d points; using direct quadrature", int(miss.sum()))
        return miss

    def pair(self, r, lag):
        """W at distance ``r`` and time lag index ``lag`` (broadcast arrays)."""
        r, lag = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(lag))
        miss = self._check_range(r)
        if not np.any(miss):
            return self._hermite(self.w_val, self.w_der, lag, r)
        out = self._hermite(self.w_val, self.w_der, lag, np.where(miss, 0.0, r))
        out[miss] = [pair_potential(self.ff, x, l * self.tg.dt) for x, l in zip(r[miss], lag[miss])]
        return out

    def boundary(self, r, node):
        """Boundary energy density of a path point at distance ``r`` at node ``node``."""
        r, node = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(node))
        if self.ir.variant == "zero" or self.ff.charge == 0:
            return np.zeros(r.shape)
        miss = self._check_range(r)
        out = self._hermite(self.b_val, self.b_der, node, np.where(miss, 0.0, r))
        T = self.tg.T
        for pos in zip(*np.nonzero(miss)):
            tt = self.tg.nodes[node[pos]]
            g, _ = boundary_density_values(self.ff, self.ir, [r[pos]], [T - tt, T + tt])
            out[pos] = g.sum()
        return out
