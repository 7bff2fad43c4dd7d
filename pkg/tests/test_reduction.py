import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flagship, random_spd
from nhcyl.reduction import (SpdMatrix, compute_D, compute_L, linear_block_check, spd_sqrt, xy_change,
                             xy_inverse)


def test_sqrt_identity_and_diagonal():
    assert np.allclose(spd_sqrt(np.eye(3)).entries, np.eye(3), atol=1e-15)
    assert np.allclose(spd_sqrt(np.diag([4.0, 9.0])).entries, np.diag([2.0, 3.0]), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_sqrt_squares_back_and_matches_independent_sqrtm(n, seed):
    M = random_spd(np.random.default_rng(seed), n)
    S = spd_sqrt(M).entries
    assert np.max(np.abs(S @ S - M)) <= 1e-10
    assert np.max(np.abs(S - np.real(scipy.linalg.sqrtm(M)))) <= 1e-9


def test_non_spd_rejected():
    with pytest.raises(ValueError):
        SpdMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        SpdMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_L_trivial_and_scalar_cases():
    assert np.allclose(compute_L(np.eye(2), np.eye(2)).entries, np.eye(2), atol=1e-15)
    L = compute_L(np.array([[4 * np.pi**2]]), np.array([[1.0]])).entries[0, 0]
    assert L == pytest.approx((2 * np.pi) ** -0.5, abs=1e-15)
    assert L**2 * 4 * np.pi**2 * L**2 == pytest.approx(1.0, abs=1e-14)
    D = compute_D(np.array([[4 * np.pi**2]]), np.array([[L]]))
    assert D[0, 0] == pytest.approx(2 * np.pi, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_L_defining_equation_and_D_consistency(n, seed):
    rng = np.random.default_rng(seed)
    A, B = random_spd(rng, n), random_spd(rng, n)
    L = compute_L(A, B).entries
    L2 = L @ L
    Li = np.linalg.inv(L)
    assert np.max(np.abs(L2 @ A @ L2 - B)) <= 1e-10
    assert np.max(np.abs(L @ A @ L - Li @ B @ Li)) <= 1e-10
    assert np.allclose(L, L.T, atol=1e-14) and np.min(np.linalg.eigvalsh(L)) > 0


def test_L_batched_over_B(rng):
    A = random_spd(rng, 3)
    Bs = np.stack([random_spd(rng, 3) for _ in range(5)])
    Ls = compute_L(A, Bs).entries
    for B, L in zip(Bs, Ls):
        assert np.allclose(L, compute_L(A, B).entries, atol=1e-13)


def test_xy_change_scalar_example():
    L = np.array([[(2 * np.pi) ** -0.5]])
    x, y = xy_change(np.array([0.01]), np.array([0.02]), np.array([0.0]), L, 0.1)
    assert x[0] == pytest.approx(0.3989 * 0.02 + 0.1 * 0.01 / 0.3989, abs=1e-5)
    assert x[0] == pytest.approx(0.010485, abs=1e-6)
    q2, p2 = xy_inverse(x, y, np.array([0.0]), L, 0.1)
    assert q2[0] == pytest.approx(0.01, abs=1e-15) and p2[0] == pytest.approx(0.02, abs=1e-15)


def test_cylinder_core_maps_to_origin(rng):
    L = compute_L(random_spd(rng, 2), random_spd(rng, 2)).entries
    P2 = rng.normal(size=2)
    x, y = xy_change(np.zeros(2), P2, P2, L, 0.05)
    assert np.all(x == 0) and np.all(y == 0)


def test_xy_round_trip(rng):
    L = compute_L(random_spd(rng, 3), random_spd(rng, 3)).entries
    q2, p2, P2 = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    x, y = xy_change(q2, p2, P2, L, 0.07)
    q2b, p2b = xy_inverse(x, y, P2, L, 0.07)
    assert np.max(np.abs(q2b - q2)) <= 1e-13 and np.max(np.abs(p2b - p2)) <= 1e-13


def test_identity_block_and_stable_space():
    rep = linear_block_check(np.eye(2), np.eye(2))
    assert rep.passed
    assert np.allclose(rep.measured["D"], np.eye(2))
    assert np.allclose(rep.measured["stable_slope"], -np.eye(2), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_block_diagonalization_random_pairs(n, seed):
    rng = np.random.default_rng(seed)
    rep = linear_block_check(random_spd(rng, n), random_spd(rng, n))
    assert rep.passed, rep.failures
    assert rep.measured["stable_space_matches"] == "-L^-2"


def test_flagship_reduction_constants():
    _, _, _, red = flagship(0.05)
    assert red.a == pytest.approx(2 * np.pi, rel=1e-12)
    assert red.alpha == 0.5
    assert red.b == pytest.approx(0.5, rel=1e-12)
    assert red.a > red.b
