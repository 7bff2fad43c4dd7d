import numpy as np
import pytest

from nhcyl.averaging import NormalFormH1
from nhcyl.flow import DomainEscape, FlowConfig, energy_drift_certificate, integrate, propagate, time_one_map
from nhcyl.model import pendulum_family

OMEGA = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


def states(rng, n, spec):
    return np.concatenate([rng.uniform(size=(n, 2)), spec.p0 + 0.1 * rng.uniform(-1, 1, size=(n, 2))], axis=1)


def test_free_motion_is_exact(rng):
    spec = pendulum_family(epsilon=0.0)
    y0 = states(rng, 5, spec)
    s = integrate(spec, y0, 0.0, 2.0, FlowConfig(step=1e-2), record_every=100)
    assert np.allclose(s.final[:, :2], y0[:, :2] + 2.0 * y0[:, 2:], atol=1e-13)
    assert np.array_equal(s.final[:, 2:], y0[:, 2:])


def test_time_one_map_at_zero_epsilon(rng):
    spec = pendulum_family(epsilon=0.0)
    y0 = states(rng, 5, spec)
    y1 = time_one_map(spec, y0)
    assert np.allclose(y1, np.concatenate([y0[:, :2] + y0[:, 2:], y0[:, 2:]], axis=1), atol=1e-13)


def test_horizon_must_be_multiple_of_step():
    with pytest.raises(ValueError):
        FlowConfig(step=1e-3).nsteps(0.0105)


def test_energy_drift_certificate_on_flagship(rng):
    spec = pendulum_family(epsilon=0.05)
    rep = energy_drift_certificate(spec, states(rng, 8, spec), horizon=1.0, step=1e-3, tol=1e-10)
    assert rep.passed and rep.measured["drift_per_unit_time"] <= 1e-10


def test_energy_drift_is_fourth_order(rng):
    spec = pendulum_family(epsilon=1.0)
    y0 = states(rng, 8, spec)
    steps = (0.01, 0.005, 0.0025, 0.00125)
    drifts = []
    for step in steps:
        s = integrate(spec, y0, 0.0, 4.0, FlowConfig(step), record_every=int(round(4.0 / step)))
        drifts.append(np.max(s.energy_drift))
    assert 3.5 <= np.polyfit(np.log(steps), np.log(drifts), 1)[0] <= 4.5
    assert 12 <= drifts[-2] / drifts[-1] <= 20  # asymptotic halving ratio


def test_jacobian_matches_finite_differences(rng):
    spec = pendulum_family(epsilon=0.1)
    y0 = states(rng, 1, spec)
    _, J, _ = propagate(spec, y0, 0.0, 1.0, 1e-3, tangent=True)
    h = 1e-6
    pts = np.vstack([y0 + h * np.eye(4), y0 - h * np.eye(4)])
    y = propagate(spec, pts, 0.0, 1.0, 1e-5)[0]
    FD = ((y[:4] - y[4:]) / (2 * h)).T
    assert np.max(np.abs(J[0] - FD)) <= 1e-6


def test_flow_is_symplectic(rng):
    spec = pendulum_family(epsilon=0.1)
    _, J, _ = propagate(spec, states(rng, 4, spec), 0.0, 1.0, 1e-3, tangent=True)
    assert np.max(np.abs(np.linalg.det(J) - 1)) <= 1e-8
    assert np.max(np.abs(np.swapaxes(J, 1, 2) @ OMEGA @ J - OMEGA)) <= 1e-8


def test_backward_flow_inverts_forward(rng):
    spec = pendulum_family(epsilon=0.1)
    y0 = states(rng, 4, spec)
    y1 = propagate(spec, y0, 0.3, 1.3)[0]
    assert np.max(np.abs(propagate(spec, y1, 1.3, 0.3)[0] - y0)) <= 1e-12


def test_H1_flow_is_conjugate_and_jacobian_matches_fd(rng):
    spec = pendulum_family(epsilon=0.1)
    H1 = NormalFormH1(spec)
    z0 = states(rng, 1, spec)
    z1, J, _ = propagate(H1, z0, 0.2, 1.2, 1e-3, tangent=True)
    direct = H1.from_H(1.2, propagate(spec, H1.to_H(0.2, z0), 0.2, 1.2)[0])
    assert np.max(np.abs(z1 - direct)) <= 1e-15
    h = 1e-6
    y = propagate(H1, np.vstack([z0 + h * np.eye(4), z0 - h * np.eye(4)]), 0.2, 1.2)[0]
    assert np.max(np.abs(J[0] - ((y[:4] - y[4:]) / (2 * h)).T)) <= 1e-7


def test_domain_escape_reports_time(rng):
    spec = pendulum_family(epsilon=0.0)
    y0 = np.array([[0.0, 0.0, 0.5, 0.0]])
    box = (np.array([-np.inf, -np.inf, -1, -1]), np.array([0.25, np.inf, 1, 1]))
    s = integrate(spec, y0, 0.0, 1.0, FlowConfig(1e-3), box=box, record_every=1000)
    assert s.escape_time[0] == pytest.approx(0.5, abs=2e-3)
    with pytest.raises(DomainEscape) as exc:
        integrate(spec, y0, 0.0, 1.0, FlowConfig(1e-3), box=box, record_every=1000, strict=True)
    assert exc.value.escape_time[0] == pytest.approx(0.5, abs=2e-3)
