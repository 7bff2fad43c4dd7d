import numpy as np
import pytest

from nhcyl import _pykernels
from nhcyl.kernels import BACKEND, backend, compiled_available
from nhcyl.model import pendulum_family

pytestmark = pytest.mark.skipif(not compiled_available(), reason="compiled kernels not built")


def setup(rng, n=16):
    spec = pendulum_family(epsilon=0.1)
    y0 = np.concatenate([rng.uniform(size=(n, 2)), spec.p0 + 0.1 * rng.uniform(-1, 1, size=(n, 2))], axis=1)
    return spec, y0, rng.uniform(size=n)


def test_compiled_is_default():
    assert BACKEND == "compiled"
    assert backend() is backend("compiled")


def test_field_parity(rng):
    spec, y, t = setup(rng)
    a = _pykernels.field(spec.kernel_model, t, y, 0.01, True)
    b = backend("compiled").field(spec.kernel_model, t, y, 0.01, True)
    for u, v in zip(a, b):
        if u is not None:
            assert np.max(np.abs(np.asarray(u) - np.asarray(v))) <= 1e-14


@pytest.mark.parametrize("tangent", [False, True])
def test_rk4_parity(rng, tangent):
    spec, y, t = setup(rng)
    lo = np.array([-np.inf, -0.2, -np.inf, -0.05])
    hi = np.array([np.inf, 0.9, np.inf, 0.05])
    args = (spec.kernel_model, y, t, 1e-3, 500, 0.01, tangent, lo, hi, 50)
    a = _pykernels.rk4(*args)
    b = backend("compiled").rk4(*args)
    for u, v in zip(a, b):
        if u is None:
            assert v is None
        else:
            assert np.max(np.abs(np.asarray(u) - np.asarray(v)), initial=0.0) <= 1e-13
