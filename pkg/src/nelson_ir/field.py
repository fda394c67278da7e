"""
Finite-mode Gaussian calculus for the field.

A field configuration is stored per mode: ``values[i, j]`` is the amplitude of
mode ``j`` at time node ``i``, scaled by ``sqrt(w_j)`` so that the stationary
law has ``E|phi_j|^2 = 1/(2|k_j|)`` and the pairing ``xi(f) = sum_j sqrt(w_j)
conj(f_hat(k_j)) phi_j`` reproduces the continuum covariance on the grid.
Antipodal modes are complex conjugates of each other (the field is real).
"""

from dataclasses import dataclass

import numpy as np

from .kernels import boundary_energy, exp_kernel_weights, pair_potential_modes
from .model import ModeGrid, TimeGrid, ValidationError


def _conj_symmetric(grid, values, atol=0.0):
    """True when ``values[..., partner] == conj(values)`` (exact by default)."""
    p = grid.partner
    v = np.asarray(values)
    if atol == 0.0:
        return bool(np.array_equal(v[..., p], np.conj(v)))
    return bool(np.allclose(v[..., p], np.conj(v), atol=atol, rtol=0.0))


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """Stationary Gauss-Markov law of the field modes.

    Each mode relaxes at rate ``|k|`` around ``mean`` with variance ``1/(2|k|)``.
    """

    grid: ModeGrid
    mean: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex)
        if mean.shape != (self.grid.size,):
            raise ValidationError("one mean per mode required")
        if not _conj_symmetric(self.grid, mean, atol=1e-15 * max(1.0, np.abs(mean).max())):
            raise ValidationError("mean violates the conjugation constraint")
        object.__setattr__(self, "mean", mean)

    @classmethod
    def centred(cls, grid):
        return cls(grid, np.zeros(grid.size, dtype=complex))

    @classmethod
    def shifted(cls, grid, ff, ir):
        """Law whose mean is the shift ``gamma_hat = -rho_hat h_hat / k^2``."""
        kabs = grid.kabs
        return cls(grid, np.sqrt(grid.w) * (-ff.rho_hat(kabs) * ir.h_hat(kabs) / kabs**2) + 0j)

    @property
    def variance(self):
        return 1.0 / (2.0 * self.grid.kabs)

    @property
    def relaxation(self):
        return self.grid.kabs

    def covariance(self, times):
        """``C[j, i, i'] = e^{-|k_j| |t_i - t_i'|} / (2 |k_j|)``."""
        lag = np.abs(np.subtract.outer(times, times))
        k = self.grid.kabs
        return np.exp(-k[:, None, None] * lag[None]) / (2 * k[:, None, None])


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    grid: ModeGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (len(self.times), self.grid.size):
            raise ValidationError("values must have shape (n_times, n_modes)")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite field amplitudes")
        if not _conj_symmetric(self.grid, v):
            raise ValidationError("trajectory violates the conjugation constraint")
        object.__setattr__(self, "values", v)

    def real_modes(self):
        """Real quadratures ``(sqrt(2) Re phi, sqrt(2) Im phi)`` of the representatives.

        Each has stationary variance ``1/(2|k|)``.
        """
        half = self.values[:, : self.grid.half]
        return np.sqrt(2) * half.real, np.sqrt(2) * half.imag


@dataclass(frozen=True, eq=False)
class DressingFunction:
    grid: ModeGrid
    g_hat: np.ndarray
    t: float
    T: float

    def __post_init__(self):
        g = np.asarray(self.g_hat, dtype=complex)
        if g.shape != (self.grid.size,) or not np.all(np.isfinite(g)):
            raise ValidationError("dressing function must be finite, one value per mode")
        object.__setattr__(self, "g_hat", g)

    def is_real_field(self, rtol=1e-12):
        scale = max(np.abs(self.g_hat).max(), 1e-300)
        return _conj_symmetric(self.grid, self.g_hat, atol=rtol * scale)

    def rows(self):
        """``(|k|, Re g, Im g)`` per mode, sorted by ``|k|``."""
        kabs = self.grid.kabs
        order = np.argsort(kabs, kind="stable")
        return np.column_stack([kabs[order], self.g_hat.real[order], self.g_hat.imag[order]])


def sample_field(law, tg, seed):
    """Stationary trajectory of the mode process on the nodes of ``tg``.

    Representatives get two independent real OU components; antipodes are
    filled by conjugation so reality holds exactly.
    """
    rng = np.random.default_rng(seed)
    grid = law.grid
    h = grid.half
    k = grid.kabs[:h]
    sd = np.sqrt(1.0 / (2.0 * k))
    rho = np.exp(-k * tg.dt)
    innov = sd * np.sqrt(-np.expm1(-2.0 * k * tg.dt))
    x = np.empty((tg.n, 2, h))
    x[0] = sd * rng.standard_normal((2, h))
    for i in range(1, tg.n):
        x[i] = rho * x[i - 1] + innov * rng.standard_normal((2, h))
    half = law.mean[:h] + (x[:, 0] + 1j * x[:, 1]) / np.sqrt(2)
    values = np.concatenate([half, np.conj(half)], axis=1)
    return FieldTrajectory(grid, tg.nodes.copy(), values)


def shift_map(traj, law):
    """Coordinate form of the unitary shift: centred amplitudes -> shifted ones.

    ``F`` evaluated on the result is ``(U F)`` evaluated on the input, i.e. the
    shifted-law expectation of ``F`` equals the centred-law expectation of
    ``F(. + gamma)``.
    """
    if law.grid is not traj.grid and not np.array_equal(law.grid.k, traj.grid.k):
        raise ValidationError("law and trajectory live on different mode grids")
    return FieldTrajectory(traj.grid, traj.times, traj.values + law.mean[None, :])


def _check_window(path, t, T):
    times = np.asarray(path.times)
    if abs(times[0] + T) > 1e-9 * max(T, 1) or abs(times[-1] - T) > 1e-9 * max(T, 1):
        raise ValidationError("path does not cover [-T, T]")
    if not -T - 1e-12 <= t <= T + 1e-12:
        raise ValidationError(f"t={t} outside [-{T}, {T}]")


def conditional_mean(path, grid, ir, ff, t, T, form="B"):
    """Mean of the field at time ``t`` given the particle path on ``[-T, T]``.

    Form ``A`` adds the path-driven response to the free shift ``gamma_hat``;
    form ``B`` moves the constant ``h_hat`` part into the closed-form tail
    ``-(rho_hat h_hat / 2k^2)(e^{-k(T-t)} + e^{-k(T+t)})``. Time integrals use
    exponential product quadrature (exact for a path linear between nodes), so
    the two forms coincide to rounding.
    """
    _check_window(path, t, T)
    kabs = grid.kabs
    rho = ff.rho_hat(kabs)
    hh = ir.h_hat(kabs)
    a = exp_kernel_weights(kabs, t, path.times)  # (M, n)
    phases = np.exp(1j * (path.positions @ grid.k.T))  # (n, M)
    drive = np.einsum("jn,nj->j", a, phases)
    form = str(form).upper()
    if form == "A":
        gamma = -rho * hh / kabs**2
        g = gamma - rho / (2 * kabs) * (drive - hh * a.sum(axis=1))
    elif form == "B":
        tail = np.exp(-kabs * (T - t)) + np.exp(-kabs * (T + t))
        g = -rho / (2 * kabs) * drive - rho * hh / (2 * kabs**2) * tail
    else:
        raise ValidationError(f"unknown form {form!r}")
    return DressingFunction(grid, g, float(t), float(T))


def _check_coeffs(grid, coeffs):
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim == 1:
        c = c[None, :]
    if c.shape[-1] != grid.size:
        raise ValidationError("one coefficient per mode required")
    scale = max(np.abs(c).max(), 1e-300)
    if not _conj_symmetric(grid, c, atol=1e-13 * scale):
        raise ValidationError("coefficients must satisfy l(-k) = conj(l(k)) for a real functional")
    return c


def log_gaussian_exp_functional(coeffs, law, times=None):
    """``log E exp(sum_{i,j} l_ij phi_j(t_i))`` for the mode process ``law``.

    Parameters
    ----------
    coeffs : array, shape (n_times, n_modes) or (n_modes,)
        Conjugation-symmetric coefficients.
    times : array, optional
        Time nodes of the rows of ``coeffs`` (needed with more than one row).
    """
    c = _check_coeffs(law.grid, coeffs)
    if c.shape[0] > 1 and times is None:
        raise ValidationError("times are required for a multi-time functional")
    times = np.zeros(1) if times is None else np.asarray(times, dtype=float)
    if times.size != c.shape[0]:
        raise ValidationError("coeffs rows do not match times")
    mean_term = np.sum(c * law.mean[None, :]).real
    k = law.grid.kabs
    lag = np.abs(np.subtract.outer(times, times))
    var = 0.0
    # blockwise over modes keeps memory at n_t^2 * block
    for s in range(0, k.size, 256):
        ks = k[s : s + 256]
        C = np.exp(-lag[:, :, None] * ks) / (2 * ks)
        cs = c[:, s : s + 256]
        var += np.einsum("aj,abj,bj->", cs, C, np.conj(cs)).real
    return float(mean_term + 0.5 * var)


def gaussian_exp_functional(coeffs, law, times=None):
    return float(np.exp(log_gaussian_exp_functional(coeffs, law, times)))


def interaction_coefficients(path, grid, ff, ir):
    """Coefficients of the time-discretized interaction ``-sum_i tau_i xi_{t_i}(rho_q - rho*h)``."""
    kabs = grid.kabs
    tau = path.time_weights
    phases = np.exp(1j * (path.positions @ grid.k.T))
    amp = np.sqrt(grid.w) * ff.rho_hat(kabs)
    return -tau[:, None] * amp[None, :] * (phases - ir.h_hat(kabs)[None, :])


def log_partition_pair(path, grid, tg, ff, ir):
    """``(log Z, log Zcal)``: Gaussian expectation vs. pair-potential action."""
    if not np.allclose(path.times, tg.nodes, rtol=0, atol=1e-12 * tg.T):
        raise ValidationError("path is not sampled on the time grid")
    law = GaussianLaw.shifted(grid, ff, ir)
    coeffs = interaction_coefficients(path, grid, ff, ir)
    log_z = log_gaussian_exp_functional(coeffs, law, tg.nodes)
    tau = path.time_weights
    q = path.positions
    dq = (q[:, None, :] - q[None, :, :]).reshape(-1, 3)
    dt = np.subtract.outer(tg.nodes, tg.nodes).ravel()
    W = pair_potential_modes(grid, ff, dq, dt).reshape(tg.n, tg.n)
    action = tau @ W @ tau + boundary_energy(path, tg.T, ff, ir, grid=grid, tail="matched")
    return log_z, float(-action)


def finite_mode_partition(path, grid, tg, ff, ir):
    """``(Z, Zcal)`` whose ratio is independent of the path."""
    a, b = log_partition_pair(path, grid, tg, ff, ir)
    return float(np.exp(a)), float(np.exp(b))


__all__ = [
    "DressingFunction",
    "FieldTrajectory",
    "GaussianLaw",
    "conditional_mean",
    "finite_mode_partition",
    "gaussian_exp_functional",
    "interaction_coefficients",
    "log_gaussian_exp_functional",
    "log_partition_pair",
    "sample_field",
    "shift_map",
]
