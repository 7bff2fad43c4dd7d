import numpy as np
import pytest

from nhcyl.averaging import (NormalFormH1, ResonanceError, apply_psi, invert_psi, remainder_order_sweep,
                             solve_homological)
from nhcyl.fourier import FourierSeries
from nhcyl.model import GOLDEN, pendulum_family

DIMS = ("t", "q1", "q2")
V_DIMS = ("q2",)


def grid_points(n=9):
    g = np.arange(n) / n
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)


def test_traveling_wave_mode():
    rhs = FourierSeries.cos(DIMS, (1, -1, 0))
    hom = solve_homological(rhs, FourierSeries(V_DIMS), GOLDEN)
    x = grid_points()
    expect = np.sin(2 * np.pi * (x[:, 0] - x[:, 1])) / (2 * np.pi * (1 - GOLDEN))
    assert np.max(np.abs(hom.f(x) - expect)) <= 1e-12
    assert np.max(np.abs(hom.residual(GOLDEN, x))) <= 1e-12


def test_zero_rhs_gives_zero():
    hom = solve_homological(FourierSeries(DIMS), FourierSeries(V_DIMS), GOLDEN)
    assert hom.f.is_zero()


def test_single_time_mode():
    hom = solve_homological(FourierSeries.cos(DIMS, (1, 0, 0)), FourierSeries(V_DIMS), GOLDEN)
    x = grid_points()
    assert np.max(np.abs(hom.f(x) - np.sin(2 * np.pi * x[:, 0]) / (2 * np.pi))) <= 1e-15


def test_flagship_residual_and_mode_table():
    spec = pendulum_family()
    H1 = NormalFormH1(spec)
    x = np.random.default_rng(0).uniform(size=(500, 3))
    assert np.max(np.abs(H1.hom.residual(spec.omega, x))) <= 1e-12
    table = H1.hom.mode_table()
    for k, a, b, d, fa, fb in table:
        assert d == pytest.approx(2 * np.pi * (k[0] + k[1] * GOLDEN), abs=1e-15)
        assert (fa, fb) == pytest.approx((-b / d, a / d), abs=1e-15)


def test_exact_resonance_with_data_raises():
    with pytest.raises(ResonanceError):
        solve_homological(FourierSeries.cos(DIMS, (1, -2, 0)), FourierSeries(V_DIMS), 0.5)


def test_psi_energy_shift_vanishes_at_quarter_period():
    f = FourierSeries.sin(DIMS, (1, 0, 0), 1 / (2 * np.pi))
    t, e, q, p = apply_psi(f, 0.1, (0.25, 0.0, np.zeros(2), np.array([0.6, 0.0])))
    assert abs(e) <= 1e-15


def test_psi_identity_at_zero_epsilon(rng):
    f = NormalFormH1(pendulum_family()).f
    pt = (rng.uniform(size=6), rng.normal(size=6), rng.uniform(size=(6, 2)), rng.normal(size=(6, 2)))
    out = apply_psi(f, 0.0, pt)
    for a, b in zip(pt, out):
        assert np.array_equal(a, b)


def test_psi_round_trip(rng):
    f = NormalFormH1(pendulum_family()).f
    pt = (rng.uniform(size=6), rng.normal(size=6), rng.uniform(size=(6, 2)), rng.normal(size=(6, 2)))
    back = invert_psi(f, 0.1, apply_psi(f, 0.1, pt))
    for a, b in zip(pt, back):
        assert np.max(np.abs(a - b)) <= 1e-15


def test_remainder_order_four_on_flagship():
    rep = remainder_order_sweep(pendulum_family())
    assert rep.passed
    assert rep.measured["fitted_slope"] == pytest.approx(4.0, abs=0.05)
    assert all(12 <= r <= 20 for r in rep.measured["doubling_ratios"])


def test_remainder_identically_zero_without_angle_or_momentum_dependence():
    rep = remainder_order_sweep(pendulum_family(mu=0.0, nu=0.0))
    assert rep.measured["exact_zero"]
    assert rep.passed


def test_literal_remainder_only_second_order():
    rep = remainder_order_sweep(pendulum_family(), literal=True)
    assert rep.measured["fitted_slope"] == pytest.approx(2.0, abs=0.2)
    assert not rep.passed


def test_H1_field_is_hamiltonian(rng):
    H1 = NormalFormH1(pendulum_family(epsilon=0.1))
    t = rng.uniform(size=5)
    y = np.concatenate([rng.uniform(size=(5, 2)), H1.spec.p0 + 0.1 * rng.normal(size=(5, 2))], axis=1)
    F = H1.vector_field(t, y)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        d = (H1.value(t, (y + e)[:, :2], (y + e)[:, 2:]) - H1.value(t, (y - e)[:, :2], (y - e)[:, 2:])) / (2 * h)
        expect = -d if i < 2 else d  # q' = dH/dp, p' = -dH/dq
        col = i + 2 if i < 2 else i - 2
        assert np.allclose(F[:, col], expect, atol=1e-7)


def test_H_and_H1_coordinates_round_trip(rng):
    H1 = NormalFormH1(pendulum_family(epsilon=0.1))
    y = rng.normal(size=(7, 4))
    assert np.max(np.abs(H1.from_H(0.3, H1.to_H(0.3, y)) - y)) <= 1e-15
