"""Backend selection for the integration kernels.

The compiled extension is used when it imports; setting ``NHCYL_PURE_PYTHON=1`` forces
the numpy fallback.  Both expose ``field`` and ``rk4`` with identical semantics.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

_compiled = None
if not os.environ.get("NHCYL_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def backend(name: str | None = None):
    """Return the kernel module: ``"compiled"``, ``"python"`` or the default."""
    if name is None:
        return _compiled if _compiled is not None else _pykernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(name)


def compiled_available() -> bool:
    return _compiled is not None


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Flat arrays describing H = h(p) - eps2*G(t,q,p) for the kernels."""

    n: int
    hc: np.ndarray
    he: np.ndarray
    gk: np.ndarray
    ga: np.ndarray
    gb: np.ndarray
    ge: np.ndarray
    p0: np.ndarray
