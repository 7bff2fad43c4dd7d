import numpy as np
import pytest

from nhcyl.fourier import FourierSeries, PolyFourier, Polynomial
from nhcyl.model import (GOLDEN, ConvergenceError, HamiltonianSpec, averaged_data, check_hypotheses,
                         diophantine_check, pendulum_family, quadratic_h, sheared_h, solve_P2)

DIMS = ("t", "q1", "q2")


def spec_with(h=None, G=None, omega=GOLDEN, p0=None):
    p0 = np.array([omega, 0.0]) if p0 is None else p0
    G = G if G is not None else FourierSeries.constant(DIMS, 1.0) - FourierSeries.cos(DIMS, (0, 0, 1))
    return HamiltonianSpec(n=2, m=1, r=1, h=h or quadratic_h(2), G=PolyFourier.from_series(G, p0), p0=p0,
                           omega=np.array([omega]), epsilon=0.05)


def test_V_of_flagship_matches_tensor_quadrature():
    spec = pendulum_family(mu=0.3, nu=0.05)
    V = averaged_data(spec).V
    n = 64
    t, q1 = np.meshgrid(np.arange(n) / n, np.arange(n) / n, indexing="ij")
    for q2 in np.linspace(0, 1, 7):
        q = np.stack([q1.ravel(), np.full(q1.size, q2)], axis=1)
        quad = np.mean(spec.G(t.ravel(), q, np.broadcast_to(spec.p0, (q1.size, 2))))
        assert abs(quad - V(np.array([q2]))) <= 1e-12
        assert abs(V(np.array([q2])) - (1 - np.cos(2 * np.pi * q2))) <= 1e-12


def test_V_of_t_q1_independent_G_is_G():
    G = FourierSeries.cos(DIMS, (0, 0, 2), 0.4) + FourierSeries.constant(DIMS, 1.0)
    V = averaged_data(spec_with(G=G)).V
    q2 = np.linspace(0, 1, 5)[:, None]
    assert np.allclose(V(q2), 1 + 0.4 * np.cos(4 * np.pi * q2[:, 0]), atol=1e-15)


def test_V_of_zero_mean_in_t_vanishes():
    G = FourierSeries.cos(DIMS, (1, 0, 0)) * FourierSeries.cos(DIMS, (0, 0, 1))
    assert averaged_data(spec_with(G=G)).V.is_zero()


def test_P2_zero_for_round_h():
    spec = spec_with()
    assert np.all(solve_P2(spec, np.linspace(0.4, 0.8, 5)[:, None]) == 0)


def test_P2_closed_form_for_sheared_h():
    c = 0.7
    spec = spec_with(h=sheared_h(c), p0=np.array([GOLDEN, c * GOLDEN]), omega=GOLDEN)
    p1 = np.linspace(0.4, 0.8, 9)[:, None]
    assert np.max(np.abs(solve_P2(spec, p1)[:, 0] - c * p1[:, 0])) <= 1e-12


def test_P2_residual_for_cubic_h():
    h = Polynomial(2, {(2, 0): 0.5, (0, 2): 0.5, (0, 3): 0.1})
    spec = spec_with(h=h)
    p1 = np.linspace(0.5, 0.7, 5)[:, None]
    p2 = solve_P2(spec, p1)
    grad = h.gradient(np.concatenate([p1, p2], axis=1))[:, 1]
    assert np.max(np.abs(grad)) <= 1e-12


def test_P2_newton_failure_is_reported():
    h = Polynomial(2, {(2, 0): 0.5, (0, 1): 1.0, (0, 3): 1.0 / 3.0})  # d_p2 h = 1 + p2^2 has no root
    spec = spec_with(h=h)
    with pytest.raises(ConvergenceError):
        solve_P2(spec, np.array([[0.6]]))


def test_flagship_hypotheses_and_A():
    rep = check_hypotheses(pendulum_family())
    assert rep.passed, rep.failures
    A = averaged_data(pendulum_family()).A
    assert abs(A[0, 0] - 4 * np.pi**2) <= 1e-10


def test_negative_curvature_V_rejected():
    rep = check_hypotheses(spec_with(G=FourierSeries.cos(DIMS, (0, 0, 1))))
    assert not rep.passed
    assert any("A not positive definite" in f for f in rep.failures)


def test_nonconvex_h_rejected():
    h = Polynomial(2, {(2, 0): 0.5, (0, 2): -0.5})
    rep = check_hypotheses(spec_with(h=h))
    assert any("Hessian not positive definite" in f for f in rep.failures)


def test_resonance_mismatch_rejected():
    spec = spec_with(p0=np.array([GOLDEN, 0.1]))
    rep = check_hypotheses(spec)
    assert any("resonance" in f for f in rep.failures)


def test_golden_frequency_is_diophantine():
    rep = diophantine_check(GOLDEN, gamma=0.2, tau=2, Kmax=50)
    assert rep.passed
    assert tuple(rep.measured["argmin_normalized"]) == (-1, 1)


def test_golden_smallest_divisor_at_fibonacci_mode():
    rep = diophantine_check(GOLDEN, gamma=0.2, tau=2, Kmax=50)
    k0, k = rep.measured["argmin_divisor"]
    fib = [1, 1]
    while fib[-1] < 100:
        fib.append(fib[-1] + fib[-2])
    assert abs(k) in fib and abs(k0) in fib


def test_half_is_resonant():
    rep = diophantine_check(0.5, gamma=0.1, tau=1, Kmax=2)
    assert not rep.passed
    assert tuple(rep.measured["argmin_normalized"]) == (-1, 2)


def test_omega0_and_torsion_of_sheared_h():
    c = 0.7
    spec = spec_with(h=sheared_h(c), p0=np.array([GOLDEN, c * GOLDEN]), omega=GOLDEN)
    avg = averaged_data(spec)
    p1 = np.linspace(0.4, 0.8, 5)[:, None]
    assert np.allclose(avg.Omega0(p1)[:, 0], p1[:, 0], atol=1e-12)
    assert np.allclose(avg.torsion(p1)[:, 0, 0], 1.0, atol=1e-12)
    assert np.allclose(avg.dP2(p1)[:, 0, 0], c, atol=1e-12)
