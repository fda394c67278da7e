import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson_ir.model import (
    FOURIER_NORM,
    ConfiningPotential,
    FormFactor,
    TimeGrid,
    ValidationError,
    build_mode_grid,
    half_directions,
    harmonic_potential,
    make_form_factor,
    make_ir_profile,
    quartic_potential,
)


def test_form_factor_normalization():
    ff = make_form_factor(2.5, 1.3)
    assert ff.rho_hat(0.0) == pytest.approx(2.5 * FOURIER_NORM, rel=1e-15)
    k = np.array([0.5, 2.0])
    assert np.allclose(ff.rho_hat(k), 2.5 * FOURIER_NORM * np.exp(-k**2 / (4 * 1.3**2)), rtol=1e-14)
    assert np.allclose(ff.rho_hat(-k), ff.rho_hat(k))


def test_form_factor_rejects_bad_input():
    with pytest.raises(ValidationError):
        FormFactor(1.0, 0.0)
    with pytest.raises(ValidationError):
        FormFactor(1.0, 1.0, profile=lambda k: 2 + 0 * k)


def test_uv_cutoff_gaussian():
    ff = make_form_factor(1.0)
    K = ff.uv_cutoff(1e-16)
    assert ff.rho_hat_sq(K) / ff.rho_hat_sq(0.0) == pytest.approx(1e-16, rel=1e-9)


def test_ir_profiles():
    k = np.array([0.0, 0.3, 4.0])
    assert np.all(make_ir_profile("zero").h_hat(k) == 0)
    assert np.all(make_ir_profile("unit").h_hat(k) == 1)
    g = make_ir_profile("gaussian", 2.0).h_hat(k)
    assert g[0] == 1 and np.allclose(g, np.exp(-k**2 / 8))
    assert make_ir_profile("unit").h_max == 1 and make_ir_profile("zero").h_max == 0
    with pytest.raises(ValidationError):
        make_ir_profile("gaussian")
    with pytest.raises(ValidationError):
        make_ir_profile("cubic")


def test_potentials():
    V = quartic_potential(2.0).check()
    assert V(np.array([1.5]))[0] == pytest.approx(2.0 * 1.5**4)
    assert harmonic_potential(2.0)(np.array([1.0]))[0] == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        ConfiningPotential(C=1.0, s=1.0)
    with pytest.raises(ValidationError):
        ConfiningPotential(C=-1.0)


@given(st.integers(1, 40))
def test_half_directions_unit_and_distinct(n):
    d = half_directions(n)
    assert d.shape == (n, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    # no direction is the antipode of another representative
    dots = d @ d.T
    np.fill_diagonal(dots, 0)
    assert np.all(dots > -1 + 1e-9)


@given(
    st.floats(1e-4, 0.5),
    st.floats(2.0, 12.0),
    st.sampled_from([2, 6, 8, 12, 20]),
)
def test_mode_grid_closed_and_exact_volume(k_min, k_max, n_dirs):
    g = build_mode_grid(k_min, k_max, 40, n_dirs)
    assert np.allclose(g.k[g.partner], -g.k)
    assert np.array_equal(g.w[g.partner], g.w)
    vol = g.integrate_radial(lambda k: np.ones_like(k))
    assert vol == pytest.approx(4 * np.pi / 3 * (k_max**3 - k_min**3), rel=1e-9)


def test_mode_grid_gaussian_integral():
    g = build_mode_grid(1e-6, 12.0, 0, 2, panel_nodes=32)
    assert g.integrate_radial(lambda k: np.exp(-k**2)) == pytest.approx(np.pi**1.5, rel=1e-10)


def test_decade_panels_only_append_shells():
    a = build_mode_grid(1e-2, 8.6, 0, 4, panel_nodes=3)
    b = build_mode_grid(1e-3, 8.6, 0, 4, panel_nodes=3)
    ka = np.sort(a.kabs[: a.half])
    kb = np.sort(b.kabs[: b.half])
    assert np.allclose(kb[-ka.size :], ka, rtol=1e-14)
    assert kb.size - ka.size == 3 * 2


def test_mode_grid_rejects_zero_k_min():
    with pytest.raises(ValidationError):
        build_mode_grid(0.0, 1.0, 4, 2)
    with pytest.raises(ValidationError):
        build_mode_grid(0.1, 1.0, 4, 3)


def test_time_grid():
    tg = TimeGrid(2.0, 0.25)
    assert tg.n == 17
    assert tg.weights.sum() == pytest.approx(4.0)
    assert tg.index(0.5) == 10
    with pytest.raises(ValidationError):
        tg.index(0.3)
    with pytest.raises(ValidationError):
        TimeGrid(1.0, 0.3)
