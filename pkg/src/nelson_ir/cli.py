"""
Batch driver: ``nelson-ir <subcommand> --config cfg.ini --out dir``.

Seeding: the master seed feeds ``SeedSequence([seed, k])`` with a fixed
counter ``k`` per subcommand (see ``STREAMS``). Inside a subcommand the
stream is spawned further, one child per (variant, T) job and then one per
chain, so results do not depend on ``--threads``.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .io import RunManifest, write_csv
from .model import ValidationError, build_mode_grid, TimeGrid

log = logging.getLogger("nelson_ir")

STREAMS = {"kernels": 0, "minimizer": 1, "particle": 2, "field": 3, "gibbs": 4, "overlap": 5, "fock": 6, "scan": 7}


def stream(seed, subcommand):
    return np.random.SeedSequence([int(seed), STREAMS[subcommand]])


def _int_seed(seq):
    return int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63))


class Runner:
    """Holds the config, output directory and manifest for one invocation."""

    def __init__(self, cfg, out_dir, seed=None, threads=None, tol=None):
        self.cfg = cfg
        if seed is not None:
            cfg.sampler.seed = int(seed)
        if tol is not None:
            cfg.fock.tol = float(tol)
        self.seed = cfg.sampler.seed
        self.threads = threads or os.cpu_count() or 1
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.manifest = RunManifest(cfg.to_dict(), cfg.to_ini(), cfg.hash(), self.seed, __version__)
        prev = os.path.join(out_dir, "manifest.json")
        if os.path.exists(prev):
            old = RunManifest.read(prev)
            # same config and seed: keep the other subcommands' entries
            if old.config_hash == self.manifest.config_hash and old.seed == self.seed:
                self.manifest.outputs.update(old.outputs)
                self.manifest.timings.update(old.timings)

    def header(self, **extra):
        h = {"config_hash": self.manifest.config_hash, "seed": self.seed, "version": __version__}
        h.update(extra)
        return h

    def csv(self, sub, name, columns, rows, **extra):
        path = write_csv(os.path.join(self.out, name), columns, rows, self.header(subcommand=sub, **extra))
        self.manifest.add(sub, path)
        return path

    def ground_state(self):
        from .particle import solve_ground_state

        m = self.cfg.model
        return solve_ground_state(self.cfg.potential(), R_max=m.R_max, n_grid=m.n_grid)

    def run(self, sub):
        self.manifest.outputs.pop(sub, None)
        t0 = time.perf_counter()
        getattr(self, f"do_{sub}")()
        self.manifest.timings[sub] = round(time.perf_counter() - t0, 3)
        self.manifest.check(self.out)
        return self.manifest.write(self.out)

    # subcommands -----------------------------------------------------------

    def do_kernels(self):
        from .kernels import KernelCache

        cache = KernelCache(self.cfg.form_factor(), self.cfg.ir_profile())
        self.csv("kernels", "kernels_W.csv", ["r", "tau", "W"], cache.rows())
        self.csv("kernels", "kernels_gamma.csv", ["r", "gamma"],
                 np.column_stack([cache.gamma_r, cache.gamma_grid]), ir=self.cfg.model.ir)

    def do_minimizer(self):
        from .kernels import classical_minimizer

        ff = self.cfg.form_factor()
        g = self.cfg.grid
        xs = np.linspace(g.x_max / g.n_x, g.x_max, g.n_x)
        rows = []
        for x in xs:
            xi = classical_minimizer(ff, x)
            coul = -ff.charge / (4 * np.pi * x)
            rows.append((x, xi, coul, xi / coul if coul else np.nan))
        self.csv("minimizer", "minimizer.csv", ["x", "xi_min", "coulomb", "tail_ratio"], rows)

    def do_particle(self):
        from .particle import sample_path, sample_stationary, stationary_moment

        gs = self.ground_state()
        r = np.linspace(0.0, gs.R_max * 0.9, 200)
        self.csv("particle", "psi0.csv", ["r", "psi0", "drift_radial"],
                 np.column_stack([r, gs.psi(r), gs.drift_radial(r)]), E_p=repr(gs.E_p))
        seqs = stream(self.seed, "particle").spawn(2)
        x = sample_stationary(gs, np.random.default_rng(seqs[0]), self.cfg.sampler.n_samples)
        rr = np.linalg.norm(x, axis=1)
        rows = [("E_p", gs.E_p, 0.0), ("residual", gs.residual, 0.0)]
        for b in (0.0, 1.0, 2.0):
            rows.append((f"mean_exp_{b:g}r", stationary_moment(gs, b), float(np.mean(np.exp(b * rr)))))
        rows.append(("mean_r", gs.expect(lambda s: s), float(rr.mean())))
        self.csv("particle", "particle_summary.csv", ["quantity", "exact", "sampled"], rows)
        tg = TimeGrid(self.cfg.grid.T, self.cfg.grid.dt)
        path = sample_path(gs, tg, np.random.default_rng(seqs[1]))
        self.csv("particle", "particle_path.csv", ["t", "x", "y", "z"],
                 np.column_stack([path.times, path.positions]))

    def _mode_grid(self):
        g = self.cfg.grid
        return build_mode_grid(g.k_min, g.k_max, g.n_shells, g.n_dirs)

    def do_field(self):
        from .field import conditional_mean, log_partition_pair
        from .particle import sample_path

        ff, ir = self.cfg.form_factor(), self.cfg.ir_profile()
        gs = self.ground_state()
        tg = TimeGrid(self.cfg.grid.T, self.cfg.grid.dt)
        grid = self._mode_grid()
        seqs = stream(self.seed, "field").spawn(10)
        paths = [sample_path(gs, tg, np.random.default_rng(s)) for s in seqs]
        A = conditional_mean(paths[0], grid, ir, ff, 0.0, tg.T, form="A").rows()
        B = conditional_mean(paths[0], grid, ir, ff, 0.0, tg.T, form="B").rows()
        self.csv("field", "dressing.csv", ["k", "re_A", "im_A", "re_B", "im_B"],
                 np.column_stack([A, B[:, 1:]]), t=0.0, ir=ir.variant)
        rows = []
        for i, p in enumerate(paths):
            lz, lzc = log_partition_pair(p, grid, tg, ff, ir)
            rows.append((i, lz, lzc, lz - lzc))
        self.csv("field", "factorization.csv", ["path", "log_Z", "log_Zcal", "log_ratio"], rows, ir=ir.variant)

    def _ensemble(self, ir, T, seed):
        from .gibbs import mh_sample

        gcfg = self.cfg.gibbs_config(ir=ir, T=T).replace(seed=seed)
        return mh_sample(gcfg, self._gs, workers=self.threads)

    def do_gibbs(self):
        from .estimators import overlap_exponent

        self._gs = self.ground_state()
        m = self.cfg.model
        seed = _int_seed(stream(self.seed, "gibbs"))
        ens = self._ensemble(m.ir, self.cfg.grid.T, seed)
        ff, ir = self.cfg.form_factor(), self.cfg.ir_profile()
        rep = overlap_exponent(ens, ff, ir, self._mode_grid(), self._gs)
        self.csv("gibbs", "gibbs_acceptance.csv", ["move", "proposed", "accepted", "rate"], ens.summary_rows())
        self.csv("gibbs", "gibbs_mT.csv", ["k", "s", "t", "re", "im", "stderr"], rep.m_table, ir=m.ir)
        rows = [("D_T", rep.D_T, rep.D_T_stderr), ("c_hat", rep.c_hat, 0.0), ("c1_hat", rep.c1_hat, 0.0),
                ("c2_hat", rep.c2_hat, 0.0), ("A1_hat", rep.A1_hat, 0.0), ("A2_hat", rep.A2_hat, 0.0),
                ("lower_bound", rep.lower_bound, 0.0), ("max_drift", ens.max_drift, 0.0)]
        rows += [(f"c3_b{b:g}", v, 0.0) for b, v in rep.c3.items()]
        self.csv("gibbs", "gibbs_diagnostics.csv", ["quantity", "value", "stderr"], rows, ir=m.ir, T=self.cfg.grid.T)

    def do_overlap(self):
        from .estimators import deterministic_exponent, fit_log_growth, overlap_exponent

        self._gs = self.ground_state()
        ff = self.cfg.form_factor()
        grid = self._mode_grid()
        T_list = self.cfg.grid.T_list
        # one seed per T, shared by the ir variants (common random numbers)
        seeds = [_int_seed(s) for s in stream(self.seed, "overlap").spawn(len(T_list))]
        rows, fits = [], []
        for variant in self.cfg.sampler.ir_variants:
            ir = self.cfg.ir_profile(variant)
            D, se = [], []
            for T, seed in zip(T_list, seeds):
                ens = self._ensemble(variant, T, seed)
                rep = overlap_exponent(ens, ff, ir, grid, self._gs)
                det = deterministic_exponent(ff, ir, grid, ens.tg)
                rows.append((variant, T, rep.D_T, rep.D_T_stderr, rep.lower_bound, rep.c_hat, det))
                D.append(rep.D_T)
                se.append(rep.D_T_stderr)
                log.info("overlap %s T=%g D=%.4g +- %.2g", variant, T, rep.D_T, rep.D_T_stderr)
            if len(T_list) >= 3:
                a, b, b_se, r2 = fit_log_growth(T_list, D, se)
                fits.append((variant, a, b, b_se, r2, ff.charge**2 / (4 * np.pi**5)))
        self.csv("overlap", "overlap.csv", ["ir", "T", "D_T", "stderr", "lower_bound", "c_hat", "D_constant_path"], rows)
        if fits:
            self.csv("overlap", "overlap_fit.csv", ["ir", "a", "b", "b_stderr", "R2", "b_asymptotic"], fits)

    def _particle(self):
        from .fock import Grid1D, RadialGrid, Static

        f = self.cfg.fock
        if f.particle == "static":
            return Static(tuple(f.q))
        if f.particle == "grid1d":
            return Grid1D(f.n_sites, f.spacing)
        return RadialGrid(f.n_r, f.R_max)

    def do_fock(self):
        from .fock import FockBasis, Static, build_hamiltonian, ground_state, van_hove_oracle

        f = self.cfg.fock
        ff, ir = self.cfg.form_factor(), self.cfg.ir_profile()
        particle = self._particle()
        grid = build_mode_grid(f.k_min, f.k_max, 0, f.n_dirs, panel_nodes=f.panel_nodes)
        mode_set = "all" if isinstance(particle, Static) else "cos"
        basis = FockBasis(grid, f.n_max, particle, mode_set)
        V = None if isinstance(particle, Static) else self.cfg.potential()
        H = build_hamiltonian(basis, ff, ir, V)
        res = ground_state(H, tol=f.tol, method=f.method)
        rows = [("M", basis.n_modes), ("dim", basis.dim), ("E0", res.E0), ("gap", res.gap),
                ("N_mean", res.mean_boson_number), ("vacuum_overlap", res.vacuum_overlap),
                ("residual", res.residual)]
        if isinstance(particle, Static):
            E_ex, N_ex = van_hove_oracle(grid, ff, ir, particle.q)
            rows += [("E0_exact", E_ex), ("N_exact", N_ex)]
        self.csv("fock", "fock.csv", ["quantity", "value"], rows, ir=ir.variant, particle=f.particle, method=res.method)

    def do_scan(self):
        from .fock import Static, ir_scan

        f = self.cfg.fock
        ff = self.cfg.form_factor()
        particle = self._particle()
        V = None if isinstance(particle, Static) else self.cfg.potential()
        cols = ["ir", "k_min", "M", "n_max", "dim", "E0", "gap", "N_mean", "vacuum_overlap", "residual"]
        rows = []
        for variant in self.cfg.sampler.ir_variants:
            for r in ir_scan(f.k_mins, ff, self.cfg.ir_profile(variant), V=V, particle=particle, k_max=f.k_max,
                             panel_nodes=f.panel_nodes, n_dirs=f.n_dirs, n_max=f.n_max, tol=f.tol, method=f.method):
                if r["error"]:
                    raise ValidationError(f"scan point failed: {r['error']}")
                rows.append([variant] + [r[c] for c in cols[1:]])
        self.csv("scan", "scan.csv", cols, rows, particle=f.particle)


def build_parser():
    p = argparse.ArgumentParser(prog="nelson-ir", description="Infrared-regular Nelson model experiments.")
    p.add_argument("subcommand", choices=sorted(STREAMS, key=STREAMS.get))
    p.add_argument("--config", help="INI file; defaults are used when omitted")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides [sampler] seed)")
    p.add_argument("--threads", type=int, help="parallel chains (default: all cores)")
    p.add_argument("--tol", type=float, help="eigensolver tolerance (overrides [fock] tol)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        runner = Runner(cfg, args.out, seed=args.seed, threads=args.threads, tol=args.tol)
        path = runner.run(args.subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, RuntimeError, ArithmeticError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
