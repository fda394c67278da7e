"""
Integrating out the field, one path at a time.

For a fixed particle path Q the interaction is linear in the field, so the
field expectation of exp(-interaction) is a Gaussian integral. It equals a
path-independent constant times exp(-action), where the action collects the
pair potential W between times and two boundary energies. The demo checks
that the ratio is the same for a dozen random paths, then looks at the
conditional mean of the field (the "dressing" of the particle) and shows that
the only trace of the subtraction profile h_hat is a tail term that dies off
like exp(-|k| T).
"""

import numpy as np

from nelson_ir.field import conditional_mean, log_partition_pair
from nelson_ir.model import TimeGrid, build_mode_grid, make_form_factor, make_ir_profile, quartic_potential
from nelson_ir.particle import sample_path, solve_ground_state

gs = solve_ground_state(quartic_potential())
tg = TimeGrid(4.0, 0.25)
grid = build_mode_grid(1e-2, 8.6, 8, 6)
ff = make_form_factor(20.0)

print("log Z - log Zcal over twelve independent particle paths (e = 20):")
for variant in ("zero", "unit"):
    ir = make_ir_profile(variant)
    logs = [np.subtract(*log_partition_pair(sample_path(gs, tg, s), grid, tg, ff, ir)) for s in range(12)]
    print(f"  h_hat = {variant:5s}: mean {np.mean(logs):+.12f}, spread {np.ptp(logs):.1e}")

print("\nDressing at t = 0 for one path, e = 1:")
ff = make_form_factor(1.0)
path = sample_path(gs, tg, 0)
g0 = conditional_mean(path, grid, make_ir_profile("zero"), ff, 0.0, tg.T).g_hat
g1 = conditional_mean(path, grid, make_ir_profile("unit"), ff, 0.0, tg.T).g_hat
k = grid.kabs
for j in np.argsort(k)[::12][:6]:
    tail = -ff.rho_hat(k[j]) / k[j] ** 2 * np.exp(-k[j] * tg.T)
    print(f"  |k|={k[j]:.3f}  g(h=0)={g0[j].real:+.3e}  g(h=1)-g(h=0)={(g1[j] - g0[j]).real:+.3e}  tail={tail:+.3e}")
print("The h-dependent part is exactly the boundary tail; it vanishes as T grows at any fixed |k|.")
