"""
Model inputs and discretizations.

Fourier convention used throughout the package::

    f(x) = \\int e^{i k.x} \\hat f(k) dk,     \\hat f(k) = (2 pi)^{-3} \\int e^{-i k.x} f(x) dx

Units: hbar = c = particle mass = 1, dispersion omega(k) = |k|.

Everything here is spherically symmetric, so radial profiles are stored as
plain callables of |k| (or r) and vectorized over numpy arrays.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FOURIER_NORM = (2.0 * np.pi) ** -3


class ValidationError(ValueError):
    """Raised when a model object violates one of its constraints."""


@dataclass(frozen=True)
class _GaussianProfile:
    # a class rather than a closure so form factors pickle into worker processes
    uv_width: float

    def __call__(self, k):
        return np.exp(-np.square(k) / (4.0 * self.uv_width**2))


@dataclass(frozen=True)
class FormFactor:
    """Charge distribution of the particle, stored through its transform.

    Parameters
    ----------
    charge : float
        Total charge ``e = \\int rho(x) dx``.
    uv_width : float
        Inverse length ``Lambda`` of the default Gaussian profile.
    profile : callable, optional
        Radial shape ``s(|k|)`` with ``s(0) = 1``. Defaults to
        ``exp(-k^2 / (4 Lambda^2))``, i.e. ``rho(x) = e (Lambda^2/pi)^{3/2} exp(-Lambda^2 x^2)``.
    """

    charge: float
    uv_width: float = 1.0
    profile: Optional[Callable] = None
    is_gaussian: bool = field(init=False, default=False)

    def __post_init__(self):
        if not self.uv_width > 0:
            raise ValidationError(f"uv_width must be positive, got {self.uv_width}")
        if self.profile is None:
            object.__setattr__(self, "profile", _GaussianProfile(self.uv_width))
            object.__setattr__(self, "is_gaussian", True)
        s0 = float(self.profile(np.array(0.0)))
        if not np.isclose(s0, 1.0, rtol=1e-12, atol=0):
            raise ValidationError(f"profile must equal 1 at k=0, got {s0}")

    def rho_hat(self, k):
        """Transform of the charge density at ``|k|`` (real, even)."""
        return self.charge * FOURIER_NORM * self.profile(np.abs(np.asarray(k, dtype=float)))

    def rho_hat_sq(self, k):
        return np.square(self.rho_hat(k))

    def uv_cutoff(self, rel=1e-16):
        """Smallest k with ``|rho_hat(k)|^2 < rel * |rho_hat(0)|^2``."""
        if self.is_gaussian:
            return self.uv_width * np.sqrt(-2.0 * np.log(rel))
        ks = np.linspace(0.0, 200.0 * self.uv_width, 200001)
        sq = np.square(self.profile(ks))
        below = np.nonzero(sq < rel)[0]
        if below.size == 0:
            raise ValidationError("profile does not decay below the UV tolerance")
        return float(ks[below[0]])

    def check(self, grid=None):
        """Assert the decay/normalization invariants; returns self."""
        if not np.isclose(self.rho_hat(0.0), self.charge * FOURIER_NORM, rtol=1e-14, atol=0):
            raise ValidationError("rho_hat(0) != e (2 pi)^-3")
        ks = grid.kabs if grid is not None else np.linspace(0.0, 10 * self.uv_width, 201)
        scaled = np.abs(self.rho_hat(ks)) * np.exp(ks**2 / (8.0 * self.uv_width**2))
        if not np.all(np.isfinite(scaled)) or scaled.max() > abs(self.charge) * FOURIER_NORM * 10:
            raise ValidationError("rho_hat does not decay like a Gaussian of width uv_width")
        return self


def make_form_factor(e, uv_width=1.0):
    """Gaussian form factor of charge ``e`` and width ``uv_width``."""
    return FormFactor(float(e), float(uv_width)).check()


IR_VARIANTS = ("zero", "unit", "gaussian")


@dataclass(frozen=True)
class InfraredProfile:
    """The subtraction profile ``h_hat``.

    ``zero`` is the standard (infrared singular) model, ``unit`` is h_hat = 1,
    ``gaussian`` is ``exp(-k^2 / (2 kappa^2))``.
    """

    variant: str
    kappa: Optional[float] = None

    def __post_init__(self):
        v = self.variant.lower()
        if v in ("bump", "gaussianbump"):
            v = "gaussian"
        if v not in IR_VARIANTS:
            raise ValidationError(f"unknown infrared profile {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if v == "gaussian":
            if self.kappa is None or not self.kappa > 0:
                raise ValidationError("gaussian profile needs kappa > 0")
        elif self.kappa is not None:
            object.__setattr__(self, "kappa", None)

    def h_hat(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        if self.variant == "zero":
            return np.zeros_like(k)
        if self.variant == "unit":
            return np.ones_like(k)
        return np.exp(-np.square(k) / (2.0 * self.kappa**2))

    @property
    def h_max(self):
        return 0.0 if self.variant == "zero" else 1.0

    @property
    def label(self):
        return self.variant if self.kappa is None else f"{self.variant}({self.kappa:g})"


def make_ir_profile(variant, kappa=None):
    return InfraredProfile(variant, kappa)


@dataclass(frozen=True)
class ConfiningPotential:
    """Spherically symmetric confining potential.

    ``V(r) = core(r)`` for ``r < r_asym`` and ``C r^{2s}`` beyond. With
    ``core=None`` the power law holds everywhere. ``s > 1`` is required
    unless ``oracle=True`` (used only for the harmonic test case).
    """

    C: float = 1.0
    s: float = 2.0
    core: Optional[Callable] = None
    r_asym: float = 0.0
    oracle: bool = False

    def __post_init__(self):
        if not self.C > 0:
            raise ValidationError("C must be positive")
        if not self.oracle and not self.s > 1:
            raise ValidationError("the potential must grow faster than r^2 (s > 1)")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        tail = self.C * r ** (2 * self.s)
        if self.core is None:
            return tail
        return np.where(r < self.r_asym, self.core(r), tail)

    @property
    def label(self):
        return "harmonic" if self.oracle else f"{self.C:g}*r^{2 * self.s:g}"

    def check(self, r_edge=20.0):
        r = np.linspace(0.0, r_edge, 4001)
        v = self(r)
        if not np.all(np.isfinite(v)):
            raise ValidationError("potential is not finite on the probe grid")
        lead = self.C * r_edge ** (2 * self.s)
        if abs(self(r_edge) - lead) > 1e-6 * lead:
            raise ValidationError("potential does not approach C r^{2s} at the grid edge")
        return self


def quartic_potential(C=1.0):
    return ConfiningPotential(C=C, s=2.0)


def harmonic_potential(omega=1.0):
    """``omega^2 r^2 / 2``; outside the admissible class, kept as a solver oracle."""
    return ConfiningPotential(C=0.5 * omega**2, s=1.0, oracle=True)


# ---------------------------------------------------------------------------
# discretizations
# ---------------------------------------------------------------------------

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def half_directions(n_half):
    """Representatives of ``n_half`` antipodal pairs of unit vectors."""
    if n_half == 1:
        d = [[0.0, 0.0, 1.0]]
    elif n_half == 3:
        d = np.eye(3)
    elif n_half == 4:
        d = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    elif n_half == 6:
        d = [[0, 1, _PHI], [0, -1, _PHI], [1, _PHI, 0], [-1, _PHI, 0], [_PHI, 0, 1], [_PHI, 0, -1]]
    elif n_half == 10:
        a = 1.0 / _PHI
        d = [[1, 1, 1], [1, 1, -1], [1, -1, 1], [-1, 1, 1],
             [0, a, _PHI], [0, -a, _PHI], [a, _PHI, 0], [-a, _PHI, 0], [_PHI, 0, a], [_PHI, 0, -a]]
    else:
        # Fibonacci points on the upper hemisphere
        i = np.arange(n_half) + 0.5
        z = 1.0 - i / n_half
        phi = 2.0 * np.pi * i / _PHI
        rho = np.sqrt(1.0 - z**2)
        d = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    d = np.asarray(d, dtype=float)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _radial_nodes(k_min, k_max, n_shells, panel_nodes):
    """Gauss-Legendre nodes/weights in ln k for the measure 4 pi k^2 dk."""
    if panel_nodes is None:
        edges = np.array([k_min, k_max])
        per = n_shells
    else:
        p_lo = int(np.floor(np.log10(k_min) + 1e-12)) + 1
        p_hi = int(np.ceil(np.log10(k_max) - 1e-12)) - 1
        inner = [10.0**p for p in range(p_lo, p_hi + 1) if k_min < 10.0**p < k_max]
        edges = np.array([k_min, *inner, k_max])
        per = panel_nodes
    x, wx = np.polynomial.legendre.leggauss(per)
    ks, ws = [], []
    for lo, hi in zip(np.log(edges[:-1]), np.log(edges[1:])):
        u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        k = np.exp(u)
        ks.append(k)
        ws.append(0.5 * (hi - lo) * wx * 4.0 * np.pi * k**3)
    return np.concatenate(ks), np.concatenate(ws)


@dataclass(frozen=True)
class ModeGrid:
    """Finite set of wavevectors with quadrature weights.

    The first ``M/2`` modes are representatives; mode ``j + M/2`` is the
    antipode of mode ``j`` and carries the same weight.
    """

    k: np.ndarray
    w: np.ndarray
    k_min: float
    k_max: float
    n_shells: int = 0
    n_dirs: int = 0

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        w = np.asarray(self.w, dtype=float)
        k.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "w", w)
        self.check()

    @property
    def size(self):
        return self.k.shape[0]

    @property
    def half(self):
        return self.size // 2

    @property
    def kabs(self):
        return np.linalg.norm(self.k, axis=1)

    @property
    def partner(self):
        return (np.arange(self.size) + self.half) % self.size

    def check(self, atol=1e-14):
        if self.k.ndim != 2 or self.k.shape[1] != 3 or self.size % 2:
            raise ValidationError("mode grid needs an even number of 3-vectors")
        if np.any(self.w <= 0) or np.any(self.kabs <= 0):
            raise ValidationError("weights and |k| must be strictly positive")
        p = self.partner
        if not (np.allclose(self.k[p], -self.k, atol=atol, rtol=0) and np.array_equal(self.w[p], self.w)):
            raise ValidationError("mode grid is not closed under k -> -k")
        return self

    def integrate_radial(self, f):
        """``sum_j w_j f(|k_j|)`` approximating ``4 pi \\int k^2 f(k) dk``."""
        return float(np.sum(self.w * f(self.kabs)))

    def subset(self, half_indices):
        """Grid made of the given representatives and their antipodes."""
        idx = np.asarray(half_indices, dtype=int)
        k = np.concatenate([self.k[idx], self.k[idx + self.half]])
        w = np.concatenate([self.w[idx], self.w[idx + self.half]])
        return ModeGrid(k, w, self.k_min, self.k_max)


def build_mode_grid(k_min, k_max, n_shells, n_dirs, panel_nodes=None, directions=None):
    """Logarithmic radial shells times an antipodally closed direction set.

    Parameters
    ----------
    k_min, k_max : float
        Infrared and ultraviolet edges, ``0 < k_min < k_max``.
    n_shells : int
        Number of Gauss-Legendre nodes in ``ln k`` over the whole range.
        Ignored when ``panel_nodes`` is given.
    n_dirs : int
        Number of directions (even: each comes with its antipode).
    panel_nodes : int, optional
        Use composite Gauss-Legendre with this many nodes per decade panel.
        Panels are aligned to powers of ten, so lowering ``k_min`` by whole
        decades only appends shells and leaves the existing ones untouched.
    directions : array_like, optional
        Explicit ``(n_dirs/2, 3)`` representatives, overriding the default set.
    """
    if not k_min > 0:
        raise ValidationError("k_min must be > 0: the massless dispersion is singular at k=0")
    if not k_max > k_min:
        raise ValidationError("need k_min < k_max")
    if n_dirs < 2 or n_dirs % 2:
        raise ValidationError("n_dirs must be a positive even number")
    if panel_nodes is None and n_shells < 1:
        raise ValidationError("n_shells must be >= 1")
    kr, wr = _radial_nodes(float(k_min), float(k_max), n_shells, panel_nodes)
    if directions is None:
        dirs = half_directions(n_dirs // 2)
    else:
        dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        if dirs.shape[0] != n_dirs // 2:
            raise ValidationError("need n_dirs/2 direction representatives")
    half_k = (kr[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    half_w = np.repeat(wr / n_dirs, dirs.shape[0])
    return ModeGrid(
        np.concatenate([half_k, -half_k]),
        np.concatenate([half_w, half_w]),
        float(k_min),
        float(k_max),
        n_shells=kr.size,
        n_dirs=n_dirs,
    )


@dataclass(frozen=True)
class TimeGrid:
    """Symmetric uniform partition of ``[-T, T]``."""

    T: float
    dt: float
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.T > 0 and self.dt > 0):
            raise ValidationError("T and dt must be positive")
        n = 2.0 * self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValidationError("2T must be an integer multiple of dt")
        nodes = np.linspace(-self.T, self.T, int(round(n)) + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self):
        return self.nodes.size

    @property
    def weights(self):
        """Trapezoid weights."""
        w = np.full(self.n, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def index(self, t):
        i = int(round((t + self.T) / self.dt))
        if i < 0 or i >= self.n or abs(self.nodes[i] - t) > 1e-9 * max(1.0, self.T):
            raise ValidationError(f"t={t} is not a node of the time grid")
        return i
