"""
The reference particle process.

The ground state psi_0 of ``-Delta/2 + V`` is computed in the s-wave sector
(``u(r) = r psi_0(r)``, Dirichlet at 0 and ``R_max``) with second-order finite
differences. It defines the stationary law ``psi_0^2 dx`` and the drift
``grad log psi_0`` of the diffusion ``dq = grad log psi_0 dt + dB``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .model import TimeGrid, ValidationError


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticlePath:
    """Positions ``q_t`` (shape ``(n, 3)``) on the nodes of a time grid."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if pos.shape != (times.size, 3):
            raise ValidationError("need one 3-vector per time node")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("path has non-finite coordinates")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("times must be strictly increasing")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "times", times)

    @classmethod
    def constant(cls, tg, q=(0.0, 0.0, 0.0)):
        return cls(tg.nodes, np.tile(np.asarray(q, dtype=float), (tg.n, 1)))

    @property
    def time_weights(self):
        dt = np.diff(self.times)
        w = np.zeros(self.times.size)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return w


@dataclass(frozen=True, eq=False)
class GroundStateSolution:
    """Radial ground state of the particle Hamiltonian.

    ``u`` holds ``r psi_0(r) sqrt(4 pi)`` on the interior nodes, normalized so
    that ``h sum u^2 = 1`` (the trapezoid value of ``4 pi \\int r^2 psi_0^2 dr``).
    """

    potential: object
    radial_grid: np.ndarray
    u: np.ndarray
    E_p: float
    R_max: float
    residual: float

    def __post_init__(self):
        r, u = self.radial_grid, self.u
        logpsi = np.log(np.abs(u) / (np.sqrt(4 * np.pi) * r))
        # log psi_0 is even in r: extrapolate to r = 0 through r^2
        r1, r2 = r[0], r[1]
        l0 = (r2**2 * logpsi[0] - r1**2 * logpsi[1]) / (r2**2 - r1**2)
        keep = (np.abs(u) > 1e-250) & (r < self.R_max - 10 * self.h)
        last = int(np.nonzero(keep)[0].max())
        rr = np.concatenate([[0.0], r[: last + 1]])
        ll = np.concatenate([[l0], logpsi[: last + 1]])
        spline = CubicSpline(rr, ll, bc_type=((1, 0.0), "not-a-knot"))
        object.__setattr__(self, "_logpsi", spline)
        object.__setattr__(self, "_dlogpsi", spline.derivative())
        object.__setattr__(self, "r_valid", float(rr[-1]))
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * self.h * (self._dens[1:] + self._dens[:-1]))])
        object.__setattr__(self, "_cdf", cdf / cdf[-1])

    @property
    def h(self):
        return self.R_max / (self.radial_grid.size + 1)

    @property
    def _r_full(self):
        return np.concatenate([[0.0], self.radial_grid, [self.R_max]])

    @property
    def _dens(self):
        return np.concatenate([[0.0], self.u**2, [0.0]])

    @property
    def psi0(self):
        return self.u / (np.sqrt(4 * np.pi) * self.radial_grid)

    def log_psi(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        return np.where(r <= self.r_valid, self._logpsi(np.minimum(r, self.r_valid)), -np.inf)

    def psi(self, r):
        return np.exp(self.log_psi(r))

    def drift_radial(self, r):
        """``d/dr log psi_0``."""
        return self._dlogpsi(np.abs(np.asarray(r, dtype=float)))

    def drift(self, x):
        """Vector drift ``grad log psi_0(x)`` for points of shape ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)
        return self.drift_radial(r) * unit

    def radial_density(self, r):
        """Density of |q| under psi_0^2 dx, i.e. ``4 pi r^2 psi_0(r)^2``."""
        return np.interp(np.abs(r), self._r_full, self._dens)

    def radial_cdf(self, r):
        return np.interp(np.abs(r), self._r_full, self._cdf)

    def radial_quantile(self, p):
        return np.interp(p, self._cdf, self._r_full)

    def expect(self, f):
        """``\\int f(|q|) psi_0^2 dq`` with the solver's own (trapezoid) rule."""
        return float(self.h * np.sum(self.u**2 * f(self.radial_grid)))


def _h4_residual(V, r, u, E, h):
    """Relative residual of u under a fourth-order Laplacian stencil."""
    up = np.concatenate([[0.0], u, [0.0]])
    lap = (-up[4:] + 16 * up[3:-1] - 30 * up[2:-2] + 16 * up[1:-3] - up[:-4]) / (12 * h**2)
    res = -0.5 * lap + (V(r[1:-1]) - E) * u[1:-1]
    return float(np.linalg.norm(res) / np.linalg.norm(u))


def solve_ground_state(V, R_max=6.0, n_grid=6000, residual_tol=1e-3):
    """Smallest eigenpair of ``-u''/2 + V u`` on ``(0, R_max)`` with Dirichlet ends.

    Raises
    ------
    SolverError
        If ``psi_0`` is not negligible at ``R_max`` or the fourth-order residual
        exceeds ``residual_tol`` (the grid is too coarse).
    """
    if n_grid < 10 or not R_max > 0:
        raise ValidationError("need n_grid >= 10 and R_max > 0")
    h = R_max / (n_grid + 1)
    r = h * np.arange(1, n_grid + 1)
    d = 1.0 / h**2 + V(r)
    off = np.full(n_grid - 1, -0.5 / h**2)
    w, v = eigh_tridiagonal(d, off, select="i", select_range=(0, 0))
    u = v[:, 0] / np.sqrt(h)
    u *= np.sign(u[np.argmax(np.abs(u))])
    E = float(w[0])
    big = np.abs(u) > 1e-12 * np.abs(u).max()
    if np.any(u[big] <= 0):
        raise SolverError("ground state has a node; the grid is inconsistent")
    psi = np.abs(u) / r
    if psi[-5:].max() > 1e-10 * psi.max():
        raise SolverError(f"psi_0(R_max) not negligible; increase R_max (={R_max})")
    res = _h4_residual(V, r, u, E, h)
    if res > residual_tol:
        raise SolverError(f"discretization residual {res:.2e} > {residual_tol:.0e}; refine the grid")
    return GroundStateSolution(V, r, u, E, float(R_max), res)


def _directions(rng, n):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_stationary(gs, seed, n):
    """i.i.d. draws from ``psi_0^2 dx`` (inverse CDF in r, uniform direction)."""
    rng = np.random.default_rng(seed)
    r = gs.radial_quantile(rng.random(n))
    return r[:, None] * _directions(rng, n)


def stationary_moment(gs, b=0.0):
    """``\\int (|q| + b) psi_0^2 dq``."""
    if b < 0:
        raise ValidationError("b must be >= 0")
    return gs.expect(lambda r: r + b)


def _auto_substeps(gs, dt, quantile=0.999):
    r_typ = gs.radial_quantile(quantile)
    rr = np.linspace(0.0, r_typ, 200)
    sup = float(np.max(gs.drift_radial(rr) ** 2))
    return max(1, int(np.ceil(dt * sup / 0.1)))


def sample_path(gs, tg, seed, noise=1.0, start=None, substeps=None):
    """Euler-Maruyama path of ``dq = grad log psi_0 dt + noise dB`` over ``[-T, T]``.

    Integration uses ``substeps`` internal steps per grid interval, chosen so
    that ``h sup|drift|^2 < 0.1`` up to the 99.9% radius of the stationary law;
    only grid nodes are returned.
    """
    rng = np.random.default_rng(seed)
    if substeps is None:
        substeps = _auto_substeps(gs, tg.dt)
    hs = tg.dt / substeps
    if hs * float(np.max(gs.drift_radial(np.linspace(0, gs.radial_quantile(0.99), 100)) ** 2)) >= 1:
        raise ValidationError("time step too large for the drift")
    q = sample_stationary(gs, rng, 1)[0] if start is None else np.asarray(start, dtype=float).copy()
    out = np.empty((tg.n, 3))
    out[0] = q
    sq = np.sqrt(hs) * noise
    for i in range(1, tg.n):
        for _ in range(substeps):
            q = q + gs.drift(q) * hs + sq * rng.standard_normal(3)
        if np.linalg.norm(q) > gs.r_valid:
            raise SolverError(f"path escaped the ground-state grid at t={tg.nodes[i]:.3f} (|q|={np.linalg.norm(q):.3g})")
        out[i] = q
    return ParticlePath(tg.nodes, out)


__all__ = [
    "GroundStateSolution",
    "ParticlePath",
    "SolverError",
    "TimeGrid",
    "sample_path",
    "sample_stationary",
    "solve_ground_state",
    "stationary_moment",
]
