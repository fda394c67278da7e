import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from nelson_ir.kernels import (
    KernelCache,
    PathKernelTables,
    boundary_density_values,
    boundary_energy,
    classical_minimizer,
    exp_kernel_integral,
    exp_kernel_weights,
    exp_tail_integral,
    field_covariance,
    gamma_position,
    mean_shift_gamma,
    pair_potential,
    pair_potential_modes,
)
from nelson_ir.model import TimeGrid, ValidationError, build_mode_grid, make_form_factor, make_ir_profile
from nelson_ir.particle import ParticlePath

FF = make_form_factor(1.0)
UNIT = make_ir_profile("unit")
ZERO = make_ir_profile("zero")


@given(st.floats(0.0, 12.0), st.floats(0.0, 30.0))
def test_pair_potential_matches_faddeeva(r, tau):
    ref = oracles.pair_potential(1.0, 1.0, r, tau)
    val = pair_potential(FF, [0.0, r, 0.0], tau)
    assert val == pytest.approx(ref, rel=1e-8, abs=1e-18)


def test_pair_potential_symmetric_in_time():
    q = [0.3, -0.2, 0.4]
    assert pair_potential(FF, q, 0.7) == pair_potential(FF, q, -0.7)


@given(st.floats(0.05, 20.0))
def test_minimizer_matches_erf(x):
    assert classical_minimizer(FF, [x, 0, 0]) == pytest.approx(oracles.coulomb_minimizer(1, 1, x), rel=1e-9)


def test_gamma_position():
    # with h = 1 the shift profile coincides with the classical minimizer
    for x in (0.2, 1.0, 5.0):
        assert gamma_position(FF, UNIT, [x, 0, 0]) == pytest.approx(classical_minimizer(FF, [x, 0, 0]), rel=1e-12)
    assert gamma_position(FF, ZERO, [1.0, 0, 0]) == 0.0
    for k in (0.1, 1.0):
        assert mean_shift_gamma(FF, UNIT, [0, k, 0]) == pytest.approx(-FF.rho_hat(k) / k**2, rel=1e-15)
    with pytest.raises(ValidationError):
        mean_shift_gamma(FF, UNIT, [0, 0, 0])


def test_field_covariance():
    assert field_covariance(2.0, 0.5) == pytest.approx(np.exp(-1.0) / 4)
    with pytest.raises(ValidationError):
        field_covariance(0.0, 1.0)


@given(
    st.floats(1e-3, 20.0),
    st.floats(-1.0, 1.0),
    st.floats(-2.0, 2.0),
    st.floats(-2.0, 2.0),
)
def test_exp_kernel_weights_exact_for_linear(k, t, alpha, beta):
    nodes = np.linspace(-1.0, 1.0, 9)
    a = exp_kernel_weights(k, t, nodes)[0]
    approx = a @ (alpha + beta * nodes)

    def f(s):
        return np.exp(-k * abs(t - s)) * (alpha + beta * s)

    from scipy.integrate import quad

    ref = quad(f, -1, t, epsabs=1e-14, epsrel=1e-13)[0] + quad(f, t, 1, epsabs=1e-14, epsrel=1e-13)[0]
    assert approx == pytest.approx(ref, rel=1e-10, abs=1e-12)
    assert a.sum() == pytest.approx(float(exp_kernel_integral(k, t, 1.0)), rel=1e-12)


def test_exp_integral_plus_tail():
    k, t, T = 0.7, 0.3, 2.0
    assert exp_kernel_integral(k, t, T) + exp_tail_integral(k, t, T) == pytest.approx(2 / k)


def test_boundary_density_matches_quadrature():
    for r in (0.0, 0.5, 2.5):
        for s in (0.0, 0.4, 3.0):
            g, _ = boundary_density_values(FF, UNIT, [r], [s])
            assert g[0, 0] == pytest.approx(oracles.boundary_density(1, 1, r, s), rel=1e-10)


def test_boundary_energy_matches_nested_quadrature():
    tg = TimeGrid(1.0, 0.25)
    Q = np.random.default_rng(3).normal(size=(tg.n, 3))
    path = ParticlePath(tg.nodes, Q)
    assert boundary_energy(path, 1.0, FF, UNIT) == pytest.approx(
        oracles.boundary_energy_unit(1, 1, tg.nodes, Q, 1.0), rel=1e-10
    )
    assert boundary_energy(path, 1.0, FF, ZERO) == 0.0


def test_matched_tail_approaches_exact():
    grid = build_mode_grid(0.05, 8.0, 24, 6)
    q = np.random.default_rng(0).normal(scale=0.5, size=3)
    errs = []
    for dt in (0.25, 0.125, 0.0625):
        tg = TimeGrid(1.0, dt)
        path = ParticlePath(tg.nodes, np.tile(q, (tg.n, 1)))
        ex = boundary_energy(path, 1.0, FF, UNIT, grid=grid, tail="exact")
        ma = boundary_energy(path, 1.0, FF, UNIT, grid=grid, tail="matched")
        errs.append(abs(ma - ex) / abs(ex))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_mode_sum_pair_potential_converges():
    grid = build_mode_grid(1e-3, 8.6, 0, 20, panel_nodes=12)
    for q, t in [((0, 0, 0), 0.0), ((0.3, 0.1, 0.2), 0.5)]:
        ref = pair_potential(FF, q, t)
        assert pair_potential_modes(grid, FF, q, t)[0] == pytest.approx(ref, rel=1e-3)


def test_kernel_cache_against_oracle():
    cache = KernelCache(FF, UNIT, n_r=41, n_tau=41, tau_max=20.0)
    rng = np.random.default_rng(1)
    r = rng.uniform(0, 10, 20)
    tau = rng.uniform(0, 20, 20)
    ref = np.array([oracles.pair_potential(1, 1, a, b) for a, b in zip(r, tau)])
    assert np.allclose(cache.W(r, tau), ref, rtol=1e-3, atol=1e-3 * abs(ref).max())
    # outside the table: direct quadrature
    assert cache.W(np.array([13.0]), np.array([1.0]))[0] == pytest.approx(oracles.pair_potential(1, 1, 13.0, 1.0), rel=1e-8)
    assert cache.n_fallback == 1
    assert cache.rows().shape == (41 * 41, 3)


def test_path_tables_match_direct():
    tg = TimeGrid(1.0, 0.25)
    tab = PathKernelTables(FF, UNIT, tg)
    r = np.array([[0.0, 0.7], [1.9, 3.3]])
    lag = np.array([[0, 1], [3, 8]])
    ref = [[oracles.pair_potential(1, 1, r[i, j], lag[i, j] * 0.25) for j in range(2)] for i in range(2)]
    assert np.allclose(tab.pair(r, lag), ref, rtol=1e-6)
    b = tab.boundary(np.array([0.4, 1.2]), np.array([0, 4]))
    for val, rr, node in zip(b, (0.4, 1.2), (0, 4)):
        t = tg.nodes[node]
        ref = oracles.boundary_density(1, 1, rr, 1 - t) + oracles.boundary_density(1, 1, rr, 1 + t)
        assert val == pytest.approx(ref, rel=1e-6)
