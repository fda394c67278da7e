import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson_ir.field import (
    FieldTrajectory,
    GaussianLaw,
    conditional_mean,
    finite_mode_partition,
    interaction_coefficients,
    log_gaussian_exp_functional,
    log_partition_pair,
    sample_field,
    shift_map,
)
from nelson_ir.model import TimeGrid, ValidationError, build_mode_grid, make_form_factor, make_ir_profile
from nelson_ir.particle import ParticlePath, sample_path, solve_ground_state
from nelson_ir.model import quartic_potential

GRID = build_mode_grid(0.05, 6.0, 8, 6)
ZERO, UNIT = make_ir_profile("zero"), make_ir_profile("unit")


@pytest.fixture(scope="module")
def gs():
    return solve_ground_state(quartic_potential(), n_grid=2000)


def test_sample_field_real_and_stationary():
    grid = build_mode_grid(0.5, 2.0, 2, 2)
    tg = TimeGrid(400.0, 0.5)
    traj = sample_field(GaussianLaw.centred(grid), tg, 7)
    v = traj.values
    assert np.array_equal(v[:, grid.partner], np.conj(v))
    re, im = traj.real_modes()
    k = grid.kabs[: grid.half]
    assert np.allclose(re.var(axis=0) * 2 * k, 1.0, atol=0.12)
    assert np.allclose(im.var(axis=0) * 2 * k, 1.0, atol=0.12)
    lag1 = np.mean(re[1:] * re[:-1], axis=0) / re.var(axis=0)
    assert np.allclose(lag1, np.exp(-k * 0.5), atol=0.06)


def test_trajectory_rejects_broken_reality():
    tg = TimeGrid(1.0, 0.5)
    v = np.ones((tg.n, GRID.size), dtype=complex)
    v[:, 0] = 1j
    with pytest.raises(ValidationError):
        FieldTrajectory(GRID, tg.nodes, v)


def test_shift_map_is_the_shifted_law():
    ff = make_form_factor(1.0)
    tg = TimeGrid(1.0, 0.25)
    law = GaussianLaw.shifted(GRID, ff, UNIT)
    a = shift_map(sample_field(GaussianLaw.centred(GRID), tg, 3), law)
    b = sample_field(law, tg, 3)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-15)


def test_gaussian_functional_against_monte_carlo():
    grid = build_mode_grid(0.8, 1.2, 1, 2)
    tg = TimeGrid(0.5, 0.5)
    law = GaussianLaw(grid, np.array([0.2 + 0.1j, 0.2 - 0.1j]))
    c = np.array([[0.3 + 0.2j, 0.3 - 0.2j], [0.1, 0.1], [-0.2j, 0.2j]])
    exact = log_gaussian_exp_functional(c, law, tg.nodes)
    vals = []
    for s in range(4000):
        phi = sample_field(law, tg, s).values
        vals.append(np.sum(c * phi).real)
    vals = np.array(vals)
    mc = np.log(np.mean(np.exp(vals)))
    se = np.std(np.exp(vals)) / np.sqrt(vals.size) / np.mean(np.exp(vals))
    assert abs(mc - exact) < 4 * se


def test_gaussian_functional_checks_inputs():
    law = GaussianLaw.centred(GRID)
    bad = np.zeros(GRID.size, dtype=complex)
    bad[0] = 1.0
    with pytest.raises(ValidationError):
        log_gaussian_exp_functional(bad, law)
    with pytest.raises(ValidationError):
        log_gaussian_exp_functional(np.zeros((2, GRID.size)), law)


@given(st.floats(0.1, 20.0), st.integers(0, 16), st.integers(0, 10_000))
def test_dressing_forms_agree(e, node, seed):
    ff = make_form_factor(e)
    tg = TimeGrid(2.0, 0.25)
    path = ParticlePath(tg.nodes, np.random.default_rng(seed).normal(size=(tg.n, 3)))
    t = tg.nodes[node]
    for ir in (ZERO, UNIT, make_ir_profile("gaussian", 0.7)):
        a = conditional_mean(path, GRID, ir, ff, t, tg.T, form="A").g_hat
        b = conditional_mean(path, GRID, ir, ff, t, tg.T, form="B").g_hat
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_dressing_constant_path_closed_form():
    ff = make_form_factor(1.0)
    tg = TimeGrid(3.0, 0.5)
    g = conditional_mean(ParticlePath.constant(tg), GRID, ZERO, ff, 0.5, 3.0).g_hat
    k = GRID.kabs
    ref = -ff.rho_hat(k) / (2 * k**2) * (2 - np.exp(-k * 2.5) - np.exp(-k * 3.5))
    assert np.allclose(g, ref, rtol=1e-12)


def test_dressing_is_real_field(gs):
    tg = TimeGrid(2.0, 0.25)
    path = sample_path(gs, tg, 1)
    d = conditional_mean(path, GRID, UNIT, make_form_factor(1.0), 0.0, 2.0)
    assert d.is_real_field()
    assert d.rows().shape == (GRID.size, 3)


def test_dressing_rejects_time_outside_window(gs):
    tg = TimeGrid(2.0, 0.25)
    path = sample_path(gs, tg, 1)
    with pytest.raises(ValidationError):
        conditional_mean(path, GRID, UNIT, make_form_factor(1.0), 2.5, 2.0)


def test_interaction_coefficients_are_conjugation_symmetric():
    tg = TimeGrid(1.0, 0.25)
    path = ParticlePath(tg.nodes, np.random.default_rng(0).normal(size=(tg.n, 3)))
    c = interaction_coefficients(path, GRID, make_form_factor(2.0), UNIT)
    assert np.allclose(c[:, GRID.partner], np.conj(c))


def test_zero_charge_partition_is_one():
    tg = TimeGrid(1.0, 0.25)
    path = ParticlePath(tg.nodes, np.random.default_rng(0).normal(size=(tg.n, 3)))
    assert finite_mode_partition(path, GRID, tg, make_form_factor(0.0), UNIT) == (1.0, 1.0)


@given(st.floats(0.1, 30.0), st.sampled_from(["zero", "unit", "gaussian"]))
def test_factorization_ratio_is_path_independent(e, variant):
    ff = make_form_factor(e)
    ir = make_ir_profile(variant, 1.5 if variant == "gaussian" else None)
    tg = TimeGrid(1.0, 0.25)
    rng = np.random.default_rng(int(e * 1000))
    logs = []
    for _ in range(4):
        path = ParticlePath(tg.nodes, rng.normal(size=(tg.n, 3)))
        a, b = log_partition_pair(path, GRID, tg, ff, ir)
        logs.append(a - b)
    assert np.ptp(logs) < 1e-9 * max(1.0, abs(a))
