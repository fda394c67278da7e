from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from nelson_ir.fock import (
    FockBasis,
    Grid1D,
    RadialGrid,
    Static,
    build_hamiltonian,
    counterterm,
    expectation,
    ground_state,
    ir_scan,
    n_exact_quadrature,
    transform_observable,
    van_hove_oracle,
)
from nelson_ir.model import ValidationError, build_mode_grid, make_form_factor, make_ir_profile, quartic_potential
from nelson_ir.particle import solve_ground_state

SMALL = build_mode_grid(0.1, 3.0, 2, 2)


@given(st.integers(1, 6), st.integers(0, 4))
def test_basis_size_and_index(M, n_max):
    grid = build_mode_grid(0.1, 3.0, M, 2)
    b = FockBasis(grid, n_max)
    assert b.n_modes == 2 * M
    assert b.boson_dim == comb(2 * M + n_max, n_max)
    assert np.array_equal(b.index(b.occupations), np.arange(b.boson_dim))
    assert np.all(b.occupations.sum(axis=1) <= n_max)


def test_ladder_matrix_elements():
    b = FockBasis(build_mode_grid(0.5, 1.0, 1, 2), 4)
    X = b.ladder(0).toarray()
    for n in range(1, 5):
        i = b.index([n, 0])
        j = b.index([n - 1, 0])
        assert X[j, i] == pytest.approx(np.sqrt(n)) and X[i, j] == pytest.approx(np.sqrt(n))
    assert np.allclose(X, X.T)


def test_dimension_budget():
    with pytest.raises(ValidationError):
        FockBasis(build_mode_grid(0.1, 3.0, 8, 6), 6, max_dim=1000)


@pytest.mark.parametrize("variant", ["zero", "unit", "gaussian"])
def test_van_hove_against_independent_oracle(variant):
    ff = make_form_factor(1.0)
    ir = make_ir_profile(variant, 1.0 if variant == "gaussian" else None)
    q = (0.3, 0.2, 0.5)
    E_ref, N_ref = oracles.van_hove(1.0, 1.0, SMALL.k, SMALL.w, q, ir.h_hat(SMALL.kabs))
    E_pkg, N_pkg = van_hove_oracle(SMALL, ff, ir, q)
    assert E_pkg == pytest.approx(E_ref, rel=1e-12, abs=1e-18)
    assert N_pkg == pytest.approx(N_ref, rel=1e-12)
    H = build_hamiltonian(FockBasis(SMALL, 8, Static(q)), ff, ir)
    res = ground_state(H)
    assert res.E0 == pytest.approx(E_ref, abs=1e-10)
    assert res.mean_boson_number == pytest.approx(N_ref, abs=1e-10)


def test_solvers_agree():
    ff = make_form_factor(3.0)
    grid = build_mode_grid(0.05, 3.0, 0, 2, panel_nodes=2)
    H = build_hamiltonian(FockBasis(grid, 3, Static((0, 0, 0.4))), ff, make_ir_profile("zero"))
    results = [ground_state(H, method=m) for m in ("dense", "sparse", "matrix-free")]
    for r in results[1:]:
        assert r.E0 == pytest.approx(results[0].E0, abs=1e-10)
        assert r.mean_boson_number == pytest.approx(results[0].mean_boson_number, abs=1e-8)
        assert r.gap == pytest.approx(results[0].gap, abs=1e-8)
    assert H.lower_bound() <= results[0].E0 + 1e-12


def test_operator_matches_matrix():
    ff = make_form_factor(2.0)
    grid = build_mode_grid(0.1, 3.0, 2, 2)
    basis = FockBasis(grid, 2, Grid1D(5, 0.3))
    H = build_hamiltonian(basis, ff, make_ir_profile("unit"), quartic_potential())
    v = np.random.default_rng(0).normal(size=basis.dim)
    assert np.allclose(H.operator() @ v, H.assemble() @ v, atol=1e-13)
    assert H.entries().shape[1] == 3


def test_counterterm_methods_agree_on_fine_grid():
    ff = make_form_factor(1.0)
    grid = build_mode_grid(1e-3, 8.6, 0, 20, panel_nodes=10)
    p = Static((0.0, 0.0, 0.7))
    for variant in ("unit", "gaussian"):
        ir = make_ir_profile(variant, 1.0 if variant == "gaussian" else None)
        a = counterterm(grid, ff, ir, p, "modes")[0]
        b = counterterm(grid, ff, ir, p, "quadrature")[0]
        assert a == pytest.approx(b, rel=1e-3)
    assert counterterm(grid, ff, make_ir_profile("zero"), p)[0] == 0.0


def test_cos_mode_set_requires_vanishing_sine_couplings():
    ff = make_form_factor(1.0)
    with pytest.raises(ValidationError):
        build_hamiltonian(FockBasis(SMALL, 2, Static((0.1, 0.2, 0.3)), "cos"), ff, make_ir_profile("unit"))
    build_hamiltonian(FockBasis(SMALL, 2, RadialGrid(4, 3.0), "cos"), ff, make_ir_profile("unit"), quartic_potential())


def test_field_observable_is_representation_independent():
    ff = make_form_factor(2.0)
    vals = []
    for variant in ("zero", "unit"):
        ir = make_ir_profile(variant)
        basis = FockBasis(SMALL, 8)
        res = ground_state(build_hamiltonian(basis, ff, ir))
        vals.append([expectation(res, transform_observable(basis, "field", m, ff, ir)) for m in (0, 2)])
    assert np.allclose(vals[0], vals[1], rtol=1e-9)
    with pytest.raises(ValidationError):
        transform_observable(FockBasis(SMALL, 1), "field", 1, ff, make_ir_profile("unit"))


def test_q2_observable_without_coupling():
    V = quartic_potential()
    particle = RadialGrid(200, 6.0)
    basis = FockBasis(build_mode_grid(0.5, 2.0, 1, 2), 1, particle, "cos")
    res = ground_state(build_hamiltonian(basis, make_form_factor(0.0), make_ir_profile("zero"), V))
    gs = solve_ground_state(V, R_max=6.0, n_grid=200, residual_tol=1.0)
    assert expectation(res, transform_observable(basis, "q2")) == pytest.approx(gs.expect(lambda r: r**2), rel=1e-8)
    assert res.E0 == pytest.approx(gs.E_p, rel=1e-10)
    assert expectation(res, transform_observable(basis, "identity")) == pytest.approx(1.0)


def test_n_exact_quadrature_matches_rate():
    ff = make_form_factor(2.0)
    d = n_exact_quadrature(ff, 1e-4, 1.0) - n_exact_quadrature(ff, 1e-3, 1.0)
    assert d == pytest.approx(oracles.boson_number_rate(2.0) * np.log(10), rel=1e-6)


def test_scan_rows():
    rows = ir_scan([0.1, 0.01], make_form_factor(1.0), make_ir_profile("zero"), n_max=2)
    assert [r["error"] for r in rows] == ["", ""]
    assert rows[1]["M"] > rows[0]["M"]
    for r in rows:
        assert r["E0"] == pytest.approx(r["E0_exact"], abs=1e-8)
