"""
The same dichotomy in the Hamiltonian picture.

Diagonalize the renormalized Hamiltonian on a truncated Fock space while the
infrared cutoff k_min is lowered decade by decade. For h_hat = 0 each decade
adds e^2 ln(10) / (32 pi^5) bosons to the ground state and the overlap with
the bare vacuum keeps falling; for h_hat = 1 the boson number converges.
First the static particle, where the coherent-state solution gives exact
numbers, then a particle moving in the quartic well (s-wave radial grid).
"""

import numpy as np

from nelson_ir.fock import RadialGrid, Static, ir_scan
from nelson_ir.model import make_form_factor, make_ir_profile, quartic_potential

e = 5.0
ff = make_form_factor(e)
k_mins = [1e-1, 1e-2, 1e-3, 1e-4]
print(f"expected dN per decade without subtraction: {e**2 * np.log(10) / (32 * np.pi**5):.6f}\n")
for title, kw in [
    ("static particle at (0, 0, 0.5)", dict(particle=Static((0.0, 0.0, 0.5)))),
    ("particle in V = r^4 (16 radial sites)", dict(particle=RadialGrid(16, 4.0), V=quartic_potential())),
]:
    print(title)
    for variant in ("zero", "unit"):
        rows = ir_scan(k_mins, ff, make_ir_profile(variant), n_max=3, **kw)
        for r in rows:
            extra = f"  exact N={r['N_exact']:.8f}" if "N_exact" in r else ""
            print(f"  h={variant:4s} k_min={r['k_min']:.0e}  dim={r['dim']:5d}  N={r['N_mean']:.10f}"
                  f"  vacuum overlap={r['vacuum_overlap']:.6f}{extra}")
    print()
