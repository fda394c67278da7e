"""
Metropolis-Hastings sampling of the interacting path measure.

The target on a time grid is the Feynman-Kac discretization of the reference
process,

    psi_0(q_first) psi_0(q_last) prod exp(-|q_{i+1} - q_i|^2 / 2dt) exp(-sum_i tau_i V(q_i)),

reweighted by ``exp(-A(Q))`` where ``A`` is the pair-potential action plus the
boundary energy. All proposals redraw a block of consecutive nodes from a
density proportional to the Brownian kinetic factors touching the block, so
the kinetic part cancels in the acceptance ratio.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .kernels import PathKernelTables
from .model import TimeGrid, ValidationError, make_form_factor, make_ir_profile
from .particle import ParticlePath, sample_path

log = logging.getLogger(__name__)

MOVE_TYPES = ("bridge", "left", "right")


@dataclass(frozen=True)
class GibbsConfig:
    """Parameters of one Gibbs-measure run.

    ``st_pairs`` are (s, t) probe times for the two-time estimators and
    ``k_probes`` the |k| values at which m_T is tabulated.
    """

    e: float = 0.3
    T: float = 4.0
    dt: float = 0.25
    ir: str = "zero"
    kappa: float | None = None
    uv_width: float = 1.0
    n_sweeps: int = 2000
    n_burn: int = 200
    block_len: int = 4
    n_chains: int = 4
    seed: int = 20240917
    thin: int = 1
    k_probes: tuple = (0.05, 0.1, 0.2, 0.4)
    st_pairs: tuple = ((0.0, 1.0),)
    recompute_every: int = 1000
    drift_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "k_probes", tuple(float(k) for k in self.k_probes))
        object.__setattr__(self, "st_pairs", tuple((float(s), float(t)) for s, t in self.st_pairs))
        self.validate()

    def validate(self):
        if not self.n_burn < self.n_sweeps:
            raise ValidationError("n_burn must be smaller than n_sweeps")
        if self.block_len < 2:
            raise ValidationError("block_len must be >= 2")
        if self.n_chains < 1 or self.thin < 1:
            raise ValidationError("n_chains and thin must be positive")
        tg = self.time_grid()
        if tg.n < self.block_len + 1:
            raise ValidationError("time grid too short for the block length")
        for s, t in self.st_pairs:
            tg.index(s)
            tg.index(t)
        if any(k <= 0 for k in self.k_probes):
            raise ValidationError("k probes must be positive")
        return self

    def time_grid(self):
        return TimeGrid(self.T, self.dt)

    def form_factor(self):
        return make_form_factor(self.e, self.uv_width)

    def ir_profile(self):
        return make_ir_profile(self.ir, self.kappa)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return GibbsConfig(**d)


# ---------------------------------------------------------------------------
# target density
# ---------------------------------------------------------------------------


class PathTarget:
    """Log-density of the discretized Gibbs measure and its block increments."""

    def __init__(self, gs, tg, tables):
        self.gs, self.tg, self.tables = gs, tg, tables
        self.tau = tg.weights
        self.n = tg.n
        idx = np.arange(self.n)
        self._lag = np.abs(idx[:, None] - idx[None, :])

    def kinetic(self, Q, lo=0, hi=None):
        """Brownian kinetic energy of the edges touching nodes ``lo..hi-1``."""
        hi = self.n if hi is None else hi
        a, b = max(lo - 1, 0), min(hi + 1, self.n)
        d = np.diff(Q[a:b], axis=0)
        return float(np.sum(d * d) / (2 * self.tg.dt))

    def potential(self, Q):
        return float(self.tau @ self.gs.potential(np.linalg.norm(Q, axis=1)))

    def endpoints(self, Q):
        return float(self.gs.log_psi(np.linalg.norm(Q[0])) + self.gs.log_psi(np.linalg.norm(Q[-1])))

    def pair_matrix(self, Q):
        Q = np.asarray(Q)
        r = np.linalg.norm(Q[:, None, :] - Q[None, :, :], axis=-1)
        return self.tables.pair(r, self._lag)

    def action(self, Q):
        """Pair action ``sum_ij tau_i tau_j W`` plus boundary energy, recomputed in full."""
        W = self.pair_matrix(Q)
        bnd = self.tables.boundary(np.linalg.norm(Q, axis=1), np.arange(self.n))
        return float(self.tau @ W @ self.tau + self.tau @ bnd)

    def log_reference(self, Q):
        return self.endpoints(Q) - self.kinetic(Q) - self.potential(Q)

    def log_density(self, Q):
        return self.log_reference(Q) - self.action(Q)

    def _pair_rows(self, QB, Q, lo):
        L = QB.shape[0]
        r = np.linalg.norm(QB[:, None, :] - Q[None, :, :], axis=-1)
        lag = np.abs(np.arange(lo, lo + L)[:, None] - np.arange(self.n)[None, :])
        return self.tables.pair(r, lag)

    def delta(self, Q, lo, hi, new, W=None, rows=None):
        """``(d log pi, dA)`` for replacing ``Q[lo:hi]`` by ``new``.

        Only terms touching the block are evaluated. ``W`` may hold the current
        pair matrix; if ``rows`` is a dict the new block rows are stored in it
        under ``"W"`` so the caller can update its matrix on acceptance.
        """
        old = Q[lo:hi]
        tau_b = self.tau[lo:hi]
        rn, ro = np.linalg.norm(new, axis=1), np.linalg.norm(old, axis=1)
        dpot = float(tau_b @ (self.gs.potential(rn) - self.gs.potential(ro)))
        dend = 0.0
        if lo == 0:
            dend += float(self.gs.log_psi(rn[0]) - self.gs.log_psi(ro[0]))
        if hi == self.n:
            dend += float(self.gs.log_psi(rn[-1]) - self.gs.log_psi(ro[-1]))
        if not np.isfinite(dend):
            return -np.inf, 0.0
        Qn = Q.copy()
        Qn[lo:hi] = new
        dkin = self.kinetic(Qn, lo, hi) - self.kinetic(Q, lo, hi)
        # cross terms (block x outside) counted twice, block x block once each way
        Wn = self._pair_rows(new, Qn, lo)
        Wo = self._pair_rows(old, Q, lo) if W is None else W[lo:hi]
        if rows is not None:
            rows["W"] = Wn
        outside = np.ones(self.n, dtype=bool)
        outside[lo:hi] = False
        tw = self.tau * outside
        inner = slice(lo, hi)
        dA = 2.0 * tau_b @ (Wn - Wo) @ tw
        dA += tau_b @ (Wn[:, inner] - Wo[:, inner]) @ tau_b
        nodes = np.arange(lo, hi)
        dA += tau_b @ (self.tables.boundary(rn, nodes) - self.tables.boundary(ro, nodes))
        dA = float(dA)
        return dend - dkin - dpot - dA, dA


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------


class ContinuumProposal:
    """Brownian bridge redraw of interior blocks, free walks for end blocks."""

    def draw(self, rng, Q, lo, hi, target):
        n, L, dt = Q.shape[0], hi - lo, target.tg.dt
        if lo == 0 and hi == n:
            raise ValidationError("a block may not cover the whole path")
        steps = np.sqrt(dt) * rng.standard_normal((L + 1, 3))
        if lo == 0:  # walk backwards from the right anchor
            walk = Q[hi] + np.cumsum(steps[:L], axis=0)
            return walk[::-1]
        walk = Q[lo - 1] + np.cumsum(steps, axis=0)
        if hi == n:
            return walk[:L]
        m = np.arange(1, L + 1)[:, None] / (L + 1)
        return walk[:L] - m * (walk[L] - Q[hi])

    def log_density(self, target, Q, lo, hi):
        # density proportional to the kinetic factors; normalizer depends on anchors only
        return -target.kinetic(Q, lo, hi)


class LatticeProposal:
    """Redraw a block on a finite point set with weights from the kinetic factors."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)

    def configurations(self, L):
        return np.array(list(product(range(len(self.points)), repeat=L)), dtype=int)

    def weights(self, target, Q, lo, hi):
        confs = self.configurations(hi - lo)
        logw = np.empty(len(confs))
        for c, idx in enumerate(confs):
            Qc = Q.copy()
            Qc[lo:hi] = self.points[idx]
            logw[c] = -target.kinetic(Qc, lo, hi)
        p = np.exp(logw - logw.max())
        return confs, p / p.sum()

    def draw(self, rng, Q, lo, hi, target):
        confs, p = self.weights(target, Q, lo, hi)
        return self.points[confs[rng.choice(len(confs), p=p)]]

    def log_density(self, target, Q, lo, hi):
        return -target.kinetic(Q, lo, hi)


def log_acceptance(target, proposal, Q, lo, hi, new, W=None, rows=None):
    """``(log alpha, dA)`` of the MH move ``Q[lo:hi] -> new``."""
    dlogpi, dA = target.delta(Q, lo, hi, new, W, rows)
    if not np.isfinite(dlogpi):
        return -np.inf, dA
    Qn = Q.copy()
    Qn[lo:hi] = new
    log_q_ratio = proposal.log_density(target, Q, lo, hi) - proposal.log_density(target, Qn, lo, hi)
    return min(0.0, dlogpi + log_q_ratio), dA


def sweep_blocks(n, block_len, offset):
    """Blocks tiling ``0..n-1`` with the first boundary at ``offset``."""
    cuts = list(range(offset, n, block_len))
    if not cuts or cuts[0] != 0:
        cuts = [0] + cuts
    cuts.append(n)
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


def _move_type(lo, hi, n):
    return "left" if lo == 0 else ("right" if hi == n else "bridge")


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------


@dataclass
class ChainResult:
    positions: np.ndarray
    actions: np.ndarray
    accepted: dict
    proposed: dict
    max_drift: float


def run_chain(target, proposal, Q0, n_sweeps, n_burn, block_len, rng, thin=1, recompute_every=1000, drift_tol=1e-8):
    """One MH chain. Returns retained states after burn-in."""
    Q = np.array(Q0, dtype=float)
    n = Q.shape[0]
    if n < block_len + 1:
        raise ValidationError("path too short for the block length")
    A = target.action(Q)
    W = target.pair_matrix(Q)
    rows = {}
    if not np.isfinite(target.log_reference(Q)):
        raise ValidationError("initial path has zero reference density")
    acc = dict.fromkeys(MOVE_TYPES, 0)
    prop = dict.fromkeys(MOVE_TYPES, 0)
    kept, actions = [], []
    max_drift = 0.0
    for sweep in range(n_sweeps):
        offset = int(rng.integers(block_len))
        for lo, hi in sweep_blocks(n, block_len, offset):
            new = proposal.draw(rng, Q, lo, hi, target)
            la, dA = log_acceptance(target, proposal, Q, lo, hi, new, W, rows)
            mt = _move_type(lo, hi, n)
            prop[mt] += 1
            if np.log(rng.random()) < la:
                Q[lo:hi] = new
                W[lo:hi] = rows["W"]
                W[:, lo:hi] = rows["W"].T
                A += dA
                acc[mt] += 1
        if (sweep + 1) % recompute_every == 0 or sweep + 1 == n_sweeps:
            full = target.action(Q)
            drift = abs(full - A)
            max_drift = max(max_drift, drift)
            if drift > drift_tol * max(1.0, abs(full)):
                raise RuntimeError(f"incremental action drifted by {drift:.3e}")
            A = full
            W = target.pair_matrix(Q)
        if sweep + 1 == n_burn and sum(acc.values()) == 0:
            raise RuntimeError("no move accepted during burn-in; use a smaller block_len or dt")
        if sweep >= n_burn and (sweep - n_burn) % thin == 0:
            kept.append(Q.copy())
            actions.append(A)
    return ChainResult(np.array(kept), np.array(actions), acc, prop, max_drift)


@dataclass(eq=False)
class PathEnsemble:
    """Retained path states of all chains, shape ``(n_chains, n_kept, n_nodes, 3)``."""

    config: GibbsConfig
    tg: TimeGrid
    positions: np.ndarray
    actions: np.ndarray
    accepted: dict
    proposed: dict
    max_drift: float = 0.0
    seeds: list = field(default_factory=list)

    @property
    def n_chains(self):
        return self.positions.shape[0]

    @property
    def n_kept(self):
        return self.positions.shape[1]

    @property
    def acceptance(self):
        return {m: self.accepted[m] / self.proposed[m] for m in MOVE_TYPES if self.proposed[m]}

    def node(self, t):
        """Positions at time ``t``: shape ``(n_chains, n_kept, 3)``."""
        return self.positions[:, :, self.tg.index(t), :]

    def paths(self):
        for c in range(self.n_chains):
            for s in range(self.n_kept):
                yield ParticlePath(self.tg.nodes, self.positions[c, s])

    @classmethod
    def merge(cls, config, tg, results, seeds=()):
        acc = {m: sum(r.accepted[m] for r in results) for m in MOVE_TYPES}
        prop = {m: sum(r.proposed[m] for r in results) for m in MOVE_TYPES}
        return cls(
            config,
            tg,
            np.stack([r.positions for r in results]),
            np.stack([r.actions for r in results]),
            acc,
            prop,
            max(r.max_drift for r in results),
            list(seeds),
        )

    def summary_rows(self):
        rows = []
        for m in MOVE_TYPES:
            if self.proposed[m]:
                rows.append((m, self.proposed[m], self.accepted[m], self.accepted[m] / self.proposed[m]))
        return rows


def _chain_job(args):
    cfg, gs, tables, c, seq = args
    tg = cfg.time_grid()
    target = PathTarget(gs, tg, tables)
    init_seq, run_seq = seq.spawn(2)
    Q0 = sample_path(gs, tg, np.random.default_rng(init_seq)).positions
    rng = np.random.default_rng(run_seq)
    return run_chain(
        target,
        ContinuumProposal(),
        Q0,
        cfg.n_sweeps,
        cfg.n_burn,
        cfg.block_len,
        rng,
        cfg.thin,
        cfg.recompute_every,
        cfg.drift_tol,
    )


def make_tables(cfg, r_max=12.0, h=0.02):
    return PathKernelTables(cfg.form_factor(), cfg.ir_profile(), cfg.time_grid(), r_max=r_max, h=h)


def mh_sample(cfg, gs, tables=None, workers=1):
    """Run ``cfg.n_chains`` independent chains and merge them in chain order.

    Each chain gets its own child of ``SeedSequence(cfg.seed)``, so the result
    depends only on ``(seed, n_chains)`` and not on ``workers``.
    """
    cfg.validate()
    tg = cfg.time_grid()
    if tables is None:
        tables = make_tables(cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    jobs = [(cfg, gs, tables, c, s) for c, s in enumerate(seqs)]
    if workers > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    ens = PathEnsemble.merge(cfg, tg, results, seeds=[s.entropy for s in seqs])
    if tables.n_fallback:
        log.info("%d kernel evaluations fell back to quadrature", tables.n_fallback)
    return ens


def path_action(path, tables):
    """Action ``A_T(Q)`` of a path on the tables' time grid (e=0 gives 0)."""
    tg = tables.tg
    if not np.allclose(path.times, tg.nodes, rtol=0, atol=1e-12 * tg.T):
        raise ValidationError("path is not on the tables' time grid")
    idx = np.arange(tg.n)
    Q = path.positions
    r = np.linalg.norm(Q[:, None, :] - Q[None, :, :], axis=-1)
    W = tables.pair(r, np.abs(idx[:, None] - idx[None, :]))
    bnd = tables.boundary(np.linalg.norm(Q, axis=1), idx)
    tau = tg.weights
    return float(tau @ W @ tau + tau @ bnd)


# ---------------------------------------------------------------------------
# enumerable toy
# ---------------------------------------------------------------------------


def lattice_states(points, n_nodes):
    """All paths with every node on one of the lattice ``points``."""
    pts = np.asarray(points, dtype=float)
    idx = np.array(list(product(range(len(pts)), repeat=n_nodes)), dtype=int)
    return idx, pts[idx]


def lattice_target_probabilities(target, points):
    """Exact normalized target probabilities of every lattice path."""
    idx, paths = lattice_states(points, target.n)
    logp = np.array([target.log_density(Q) for Q in paths])
    p = np.exp(logp - logp.max())
    return idx, p / p.sum()


def lattice_transition_matrix(target, proposal, points, lo, hi):
    """Exact transition matrix of the single block move ``[lo, hi)`` on lattice paths."""
    idx, paths = lattice_states(points, target.n)
    lookup = {tuple(i): s for s, i in enumerate(idx)}
    P = np.zeros((len(paths), len(paths)))
    for s, Q in enumerate(paths):
        confs, q = proposal.weights(target, Q, lo, hi)
        for c, qc in zip(confs, q):
            key = list(idx[s])
            key[lo:hi] = c
            d = lookup[tuple(key)]
            if d == s:
                continue
            la, _ = log_acceptance(target, proposal, Q, lo, hi, proposal.points[c])
            P[s, d] += qc * np.exp(la)
        P[s, s] = 1.0 - P[s].sum()
    return P


def lattice_sweep_matrix(target, proposal, points, block_len):
    """Transition matrix of a random-scan step: offset drawn uniformly, then one random block."""
    n = target.n
    mats = []
    for offset in range(block_len):
        for lo, hi in sweep_blocks(n, block_len, offset):
            mats.append(lattice_transition_matrix(target, proposal, points, lo, hi))
    return sum(mats) / len(mats)


__all__ = [
    "ContinuumProposal",
    "GibbsConfig",
    "LatticeProposal",
    "PathEnsemble",
    "PathTarget",
    "lattice_sweep_matrix",
    "lattice_target_probabilities",
    "lattice_transition_matrix",
    "log_acceptance",
    "make_tables",
    "mh_sample",
    "path_action",
    "run_chain",
    "sweep_blocks",
]
