import numpy as np
import pytest

from conftest import flagship, solved
from nhcyl.cylinder import (ContractionError, GraphConfig, c0_bound, containment_test, escape_time_test,
                            estimate_norms, export_graph, graph_certificate, graph_solve, hyperbolicity_rates,
                            import_graph, invariance_residual)
from nhcyl.flow import propagate


def test_unperturbed_graph_is_exactly_flat():
    sol = solved(0.05, mu=0.0, nu=0.0)
    assert sol.xy.c0_norm() <= 1e-8
    assert invariance_residual(sol, inner_only=False) <= 1e-12
    rep = estimate_norms(sol)
    assert rep.measured["Q2_c1"] == 0 and rep.measured["P2_dev_c1"] == 0


def test_symmetric_scenario_graph_is_flat():
    sol = solved(0.05, mu=0.3, nu=0.0)
    assert sol.xy.c0_norm() <= 1e-8


def test_scaled_field_on_unperturbed_cylinder():
    _, _, H1, red = flagship(0.05, 0.0, 0.0)
    sol = solved(0.05, mu=0.0, nu=0.0)
    sysm = sol.system
    p1 = np.linspace(0.45, 0.75, 7)
    state = np.stack([np.full(7, 0.01), np.full(7, 0.3), p1, np.zeros(7), np.zeros(7)], axis=1)
    F = sysm.scaled_field(state)
    Om = red.avg.Omega0(p1[:, None])[:, 0]
    assert np.allclose(F[:, 1], red.alpha * Om, atol=1e-14)
    assert np.all(F[:, 2:] == 0)


def test_xy_field_matches_flow_by_chain_rule(rng):
    sol = solved(0.05)
    sysm = sol.system
    n = 6
    t, q1 = rng.uniform(size=n), rng.uniform(size=n)
    p1 = sol.p_center + 0.1 * rng.uniform(-1, 1, n)
    x, y = 1e-3 * rng.normal(size=(n, 1)), 1e-3 * rng.normal(size=(n, 1))
    Z = sysm.to_qp(q1, p1, x, y)
    h = 1e-3
    fwd = sysm.from_qp(propagate(sysm.H1, Z, t, t + h, 1e-4)[0])
    bwd = sysm.from_qp(propagate(sysm.H1, Z, t, t - h, 1e-4)[0])
    fd = [(np.asarray(a) - np.asarray(b)) / (2 * h) for a, b in zip(fwd, bwd)]
    an = sysm.xy_field(t, q1, p1, x, y)
    for u, v in zip(fd, an):
        assert np.max(np.abs(np.asarray(u).reshape(n, -1) - np.asarray(v).reshape(n, -1))) <= 1e-6


def test_flagship_residual_and_tolerance_response():
    coarse = solved(0.05, tol=1e-8)
    fine = solved(0.05, tol=1e-9)
    r0, r1 = invariance_residual(coarse), invariance_residual(fine)
    assert r0 <= 1e-6
    assert r0 / r1 >= 10


def test_c0_bound_at_flagship():
    rep = c0_bound(solved(0.05))
    assert rep.passed
    assert rep.measured["xy_c0"] <= rep.measured["rhs"]


def test_graph_certificate_records_history():
    rep = graph_certificate(solved(0.05))
    assert rep.passed and rep.measured["sweeps"] >= 2


def test_unperturbed_exponents_are_exact():
    sol = solved(0.05, mu=0.0, nu=0.0)
    rep = hyperbolicity_rates(sol, n_orbits=3, horizon=20.0)
    expect = 0.05 * 2 * np.pi
    assert np.allclose(rep.measured["normal_plus"], expect, rtol=1e-6)
    assert np.allclose(rep.measured["normal_minus"], -expect, rtol=1e-6)


def test_flagship_hyperbolicity():
    rep = hyperbolicity_rates(solved(0.05), n_orbits=4)
    assert rep.passed, rep.failures
    assert rep.measured["rel_err_plus"] <= 0.2


def test_unperturbed_containment_is_exact():
    sol = solved(0.05, mu=0.0, nu=0.0)
    rep = containment_test(sol, n_orbits=10, T_half=20.0, n_near=5)
    assert rep.passed
    assert rep.measured["n_survivors"] >= 5
    assert rep.measured["max_survivor_distance"] <= 1e-8  # near-graph seeds carry 1e-9 jitter
    spec = sol.system.spec.with_epsilon(0.05)
    Z0 = np.array([[0.3, 0.0, sol.p_center, 0.0], [0.7, 0.0, sol.p_center + 0.1, 0.0]])
    Z1 = propagate(spec, Z0, 0.0, 20.0, 1e-3)[0]
    assert np.all(Z1[:, [1, 3]] == 0)


def test_flagship_escape_time():
    rep = escape_time_test(solved(0.05), n=4)
    assert rep.passed, rep.failures
    assert np.allclose(rep.measured["expected"], np.log(2) / (0.05 * 2 * np.pi), rtol=1e-9)


def test_export_import_round_trip(tmp_path):
    sol = solved(0.05)
    export_graph(sol, tmp_path)
    _, _, H1, red = flagship(0.05)
    back = import_graph(tmp_path, H1, red)
    assert np.max(np.abs(back.xy.values - sol.xy.values)) <= 1e-15
    assert np.array_equal(back.qp_H.values, sol.qp_H.values)
    assert invariance_residual(back) == pytest.approx(invariance_residual(sol), rel=1e-3)


def test_contraction_failure_is_reported():
    _, _, H1, red = flagship(0.05)
    with pytest.raises(ContractionError):
        graph_solve(H1, red, GraphConfig(Nt=8, Nq=8, Np=17, tol_graph=1e-15, max_sweeps=2))
