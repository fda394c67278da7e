import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

import oracles
from nelson_ir.model import TimeGrid, ValidationError, harmonic_potential, quartic_potential
from nelson_ir.particle import (
    ParticlePath,
    SolverError,
    sample_path,
    sample_stationary,
    solve_ground_state,
    stationary_moment,
)


@pytest.fixture(scope="module")
def harmonic():
    return solve_ground_state(harmonic_potential(1.0), R_max=10.0, n_grid=20000)


@pytest.fixture(scope="module")
def quartic():
    return solve_ground_state(quartic_potential(1.0))


def test_harmonic_oracle(harmonic):
    E, drift, mean_r = oracles.harmonic_ground_state(1.0)
    assert harmonic.E_p == pytest.approx(E, abs=1e-6)
    assert harmonic.expect(lambda r: r) == pytest.approx(mean_r, abs=1e-6)
    r = np.linspace(0.0, 3.0, 31)
    assert np.allclose(harmonic.drift_radial(r), drift(r), atol=1e-5)


def test_drift_error_is_second_order():
    r = np.linspace(0.2, 2.5, 24)
    errs, hs = [], []
    for n in (500, 1000, 2000):
        gs = solve_ground_state(harmonic_potential(1.0), R_max=8.0, n_grid=n)
        errs.append(np.max(np.abs(gs.drift_radial(r) + r)))
        hs.append(gs.h)
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(np.abs(orders - 2) < 0.1)


def test_drift_is_gradient_of_log_psi(quartic):
    x = np.random.default_rng(0).normal(scale=0.6, size=(20, 3))
    d = 1e-5
    fd = np.empty_like(x)
    for i in range(3):
        e = np.zeros(3)
        e[i] = d
        fd[:, i] = (quartic.log_psi(np.linalg.norm(x + e, axis=1)) - quartic.log_psi(np.linalg.norm(x - e, axis=1))) / (2 * d)
    assert np.allclose(quartic.drift(x), fd, atol=1e-7)


def test_quartic_energy_converges():
    E = [solve_ground_state(quartic_potential(), n_grid=n).E_p for n in (1000, 2000, 4000)]
    ratio = (E[0] - E[1]) / (E[1] - E[2])
    assert ratio == pytest.approx(4.0, rel=0.05)
    assert E[2] == pytest.approx(2.39364, abs=1e-4)


def test_solver_rejects_small_box():
    with pytest.raises(SolverError):
        solve_ground_state(harmonic_potential(1.0), R_max=2.0, n_grid=2000)
    with pytest.raises(SolverError):
        solve_ground_state(quartic_potential(), R_max=6.0, n_grid=40)


def test_log_psi_outside_support(quartic):
    assert quartic.log_psi(quartic.R_max) == -np.inf
    assert np.isfinite(quartic.log_psi(0.0))


def test_stationary_samples_ks(quartic):
    x = sample_stationary(quartic, 11, 4000)
    r = np.linalg.norm(x, axis=1)
    assert stats.kstest(r, quartic.radial_cdf).pvalue > 0.01
    # directions are isotropic
    assert np.allclose((x / r[:, None]).mean(axis=0), 0, atol=0.06)


@given(st.floats(0.0, 5.0))
def test_stationary_moment_positive(b):
    gs = solve_ground_state(quartic_potential(), n_grid=1000)
    assert stationary_moment(gs, b) >= b


def test_stationary_moment_rejects_negative(quartic):
    with pytest.raises(ValidationError):
        stationary_moment(quartic, -1.0)


def test_free_path_keeps_stationary_law(quartic):
    tg = TimeGrid(2.0, 0.25)
    ends = np.array([sample_path(quartic, tg, s).positions[[0, 8, -1]] for s in range(600)])
    for j in range(3):
        r = np.linalg.norm(ends[:, j], axis=1)
        assert stats.kstest(r, quartic.radial_cdf).pvalue > 0.01


def test_path_increments_are_brownian_at_short_times(quartic):
    tg = TimeGrid(0.5, 0.01)
    inc = np.concatenate([np.diff(sample_path(quartic, tg, s).positions, axis=0) for s in range(40)])
    # drift contributes O(dt^2) to the variance
    assert inc.var() == pytest.approx(0.01, rel=0.05)


def test_sample_path_deterministic(quartic):
    tg = TimeGrid(1.0, 0.25)
    a, b = sample_path(quartic, tg, 5), sample_path(quartic, tg, 5)
    assert np.array_equal(a.positions, b.positions)


def test_particle_path_validation():
    with pytest.raises(ValidationError):
        ParticlePath(np.array([0.0, 1.0]), np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        ParticlePath(np.array([1.0, 0.0]), np.zeros((2, 3)))
