import numpy as np
import pytest

from conftest import solved
from nhcyl.model import GOLDEN, averaged_data
from nhcyl.restricted import (J2, RestrictedMap, dphi0, form_deviation_scaling, map_distance, p1dot_scaling,
                              phi0, restricted_form_check, section_invariance, section_samples, torsion_check,
                              wrap)
from nhcyl.report import CertificateReport
from test_model import spec_with
from nhcyl.model import sheared_h


def test_phi0_round_h(rng):
    avg = averaged_data(spec_with())
    q1, p1 = rng.uniform(size=5), rng.uniform(0.4, 0.8, 5)
    q, p = phi0(avg, q1, p1)
    assert np.allclose(q, np.mod(q1 + p1, 1), atol=1e-15) and np.array_equal(p, p1)
    assert np.allclose(dphi0(avg, p1), [[[1, 1], [0, 1]]] * 5)


def test_phi0_sheared_h(rng):
    avg = averaged_data(spec_with(h=sheared_h(0.7), p0=np.array([GOLDEN, 0.7 * GOLDEN])))
    p1 = rng.uniform(0.4, 0.8, 5)
    q, p = phi0(avg, np.zeros(5), p1)
    assert np.allclose(q, p1, atol=1e-12) and np.array_equal(p, p1)


def test_wrap():
    assert np.allclose(wrap([0.9, -0.9, 0.4]), [-0.1, 0.1, 0.4])


def test_unperturbed_map_is_phi0_and_form_is_standard():
    rm = RestrictedMap(solved(0.05, mu=0.0, nu=0.0))
    q1, p1 = section_samples(rm.sol.p_center, 0.1, 8, 9)
    d0, d1 = map_distance(rm, q1, p1)
    assert d0 <= 1e-12 and d1 <= 1e-12
    assert np.array_equal(rm.omega_A(q1, p1), np.broadcast_to(J2, (len(q1), 2, 2)))
    rep = torsion_check(rm, n_random=20)
    assert rep.measured["min_eigenvalue"] == pytest.approx(1.0, abs=1e-10)


def test_jacobian_matches_finite_differences(rng):
    rm = RestrictedMap(solved(0.05))
    q1, p1 = rng.uniform(size=3), rm.sol.p_center + 0.05 * rng.uniform(-1, 1, 3)
    _, dP = rm(q1, p1, jacobian=True)
    h = 1e-5
    for j, (dq, dp) in enumerate(((h, 0), (0, h))):
        (qa, pa), (qb, pb) = rm(q1 + dq, p1 + dp), rm(q1 - dq, p1 - dp)
        col = np.stack([wrap(qa - qb), pa - pb], axis=1) / (2 * h)
        assert np.max(np.abs(col - dP[:, :, j])) <= 1e-6


def test_flagship_restricted_certificates():
    rm = RestrictedMap(solved(0.05))
    tors = torsion_check(rm)
    assert tors.passed and tors.measured["all_positive"]
    assert abs(tors.measured["min_eigenvalue"] - 1) <= 0.1
    form = restricted_form_check(rm)
    assert form.passed and form.measured["pullback_residual"] <= 1e-6
    sec = section_invariance(rm)
    assert sec.passed and sec.measured["max_distance"] <= 1e-3


def test_ladder_scalings_accept_measured_values_and_reject_growth():
    reps = [CertificateReport("s", True, measured=dict(max_p1dot_over_eps2=v)) for v in (0.31, 0.32, 0.3)]
    assert p1dot_scaling(reps).passed
    reps[-1].measured["max_p1dot_over_eps2"] = 1.0
    assert not p1dot_scaling(reps).passed
    forms = [CertificateReport("f", True, measured=dict(deviation_from_standard=v)) for v in (4e-3, 2e-3, 1e-3)]
    assert form_deviation_scaling(forms, [0.1, 0.05, 0.025]).passed
    forms = [CertificateReport("f", True, measured=dict(deviation_from_standard=v)) for v in (4e-3, 3e-3, 2.5e-3)]
    assert not form_deviation_scaling(forms, [0.1, 0.05, 0.025]).passed
