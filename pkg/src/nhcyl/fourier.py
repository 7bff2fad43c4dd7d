"""Real trigonometric polynomials on the torus and polynomial-in-p coefficient series."""
from __future__ import annotations

from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * np.pi

Mode = Tuple[int, ...]


def _canonical(k: Mode) -> Tuple[Mode, int]:
    """Return (canonical mode, sign) with the first nonzero entry positive."""
    for v in k:
        if v > 0:
            return k, 1
        if v < 0:
            return tuple(-x for x in k), -1
    return k, 1


class FourierSeries:
    """Finite sum  sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)  over integer modes k.

    Modes are stored once per +/- pair (first nonzero component positive), which makes
    the series real-valued by construction.
    """

    def __init__(self, dims: Sequence[str], coeffs: Mapping[Sequence[int], Tuple[float, float]] | None = None):
        self.dims = tuple(dims)
        d = len(self.dims)
        acc: Dict[Mode, list] = {}
        for k, (a, b) in (coeffs or {}).items():
            k_arr = np.asarray(k)
            if k_arr.shape != (d,):
                raise ValueError(f"mode {k} does not match dims {self.dims}")
            if not np.all(np.equal(np.mod(k_arr, 1), 0)):
                raise ValueError(f"mode {k} is not integer: series would not be 1-periodic")
            kc, sgn = _canonical(tuple(int(v) for v in k_arr))
            slot = acc.setdefault(kc, [0.0, 0.0])
            slot[0] += float(a)
            slot[1] += sgn * float(b)
        zero = (0,) * d
        if zero in acc:
            acc[zero][1] = 0.0
        self._coeffs = {k: (v[0], v[1]) for k, v in sorted(acc.items()) if v[0] != 0.0 or v[1] != 0.0}
        self._arrays = None

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, dims, value: float) -> "FourierSeries":
        return cls(dims, {(0,) * len(dims): (value, 0.0)})

    @classmethod
    def cos(cls, dims, k, amp: float = 1.0) -> "FourierSeries":
        return cls(dims, {tuple(k): (amp, 0.0)})

    @classmethod
    def sin(cls, dims, k, amp: float = 1.0) -> "FourierSeries":
        return cls(dims, {tuple(k): (0.0, amp)})

    @classmethod
    def from_complex(cls, dims, c: Mapping[Mode, complex]) -> "FourierSeries":
        out = {}
        for k, ck in c.items():
            kc, sgn = _canonical(k)
            if sgn < 0:
                continue
            if not any(kc):
                out[kc] = (ck.real, 0.0)
            else:
                out[kc] = (2.0 * ck.real, -2.0 * ck.imag)
        return cls(dims, out)

    def to_complex(self) -> Dict[Mode, complex]:
        c: Dict[Mode, complex] = {}
        for k, (a, b) in self._coeffs.items():
            if not any(k):
                c[k] = complex(a)
            else:
                c[k] = complex(a, -b) / 2.0
                c[tuple(-v for v in k)] = complex(a, b) / 2.0
        return c

    # introspection --------------------------------------------------------
    @property
    def coeffs(self) -> Dict[Mode, Tuple[float, float]]:
        return dict(self._coeffs)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def max_degree(self) -> Tuple[int, ...]:
        if not self._coeffs:
            return (0,) * self.ndim
        return tuple(int(v) for v in np.max(np.abs(np.array(list(self._coeffs))), axis=0))

    def arrays(self):
        """(modes (M,d) int, cos amps (M,), sin amps (M,))."""
        if self._arrays is None:
            if self._coeffs:
                K = np.array(list(self._coeffs), dtype=np.int64).reshape(-1, self.ndim)
                ab = np.array(list(self._coeffs.values()), dtype=float).reshape(-1, 2)
            else:
                K = np.zeros((0, self.ndim), dtype=np.int64)
                ab = np.zeros((0, 2))
            self._arrays = (K, ab[:, 0].copy(), ab[:, 1].copy())
        return self._arrays

    def is_zero(self) -> bool:
        return not self._coeffs

    def __repr__(self):
        return f"FourierSeries(dims={self.dims}, modes={len(self._coeffs)})"

    # evaluation -----------------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ndim:
            raise ValueError(f"expected trailing dimension {self.ndim}, got {x.shape}")
        K, a, b = self.arrays()
        if len(a) == 0:
            return np.zeros(x.shape[:-1])
        phase = TWO_PI * (x @ K.T.astype(float))
        return np.cos(phase) @ a + np.sin(phase) @ b

    # calculus ---------------------------------------------------------------
    def derivative(self, axis: int | str, order: int = 1) -> "FourierSeries":
        ax = self.dims.index(axis) if isinstance(axis, str) else int(axis)
        out = self
        for _ in range(order):
            new = {}
            for k, (a, b) in out._coeffs.items():
                w = TWO_PI * k[ax]
                if w != 0.0:
                    new[k] = (w * b, -w * a)
            out = FourierSeries(self.dims, new)
        return out

    def gradient(self) -> list:
        return [self.derivative(i) for i in range(self.ndim)]

    def average(self, axes: Iterable[int | str]) -> "FourierSeries":
        """Mean over the listed axes; the result lives on the remaining dims."""
        idx = sorted(self.dims.index(a) if isinstance(a, str) else int(a) for a in axes)
        keep = [i for i in range(self.ndim) if i not in idx]
        out = {}
        for k, ab in self._coeffs.items():
            if all(k[i] == 0 for i in idx):
                out[tuple(k[i] for i in keep)] = ab
        return FourierSeries([self.dims[i] for i in keep], out)

    def embed(self, dims: Sequence[str]) -> "FourierSeries":
        """Re-express on a larger set of dims (missing dims get wavenumber 0)."""
        pos = [list(dims).index(d) for d in self.dims]
        out = {}
        for k, ab in self._coeffs.items():
            kk = [0] * len(dims)
            for i, p in enumerate(pos):
                kk[p] = k[i]
            out[tuple(kk)] = ab
        return FourierSeries(dims, out)

    def map_coeffs(self, fn) -> "FourierSeries":
        """Apply fn(k, a, b) -> (a', b') mode by mode."""
        return FourierSeries(self.dims, {k: fn(k, a, b) for k, (a, b) in self._coeffs.items()})

    # algebra ------------------------------------------------------------------
    def _check(self, other: "FourierSeries"):
        if other.dims != self.dims:
            raise ValueError(f"dims mismatch {self.dims} vs {other.dims}")

    def __add__(self, other):
        if np.isscalar(other):
            other = FourierSeries.constant(self.dims, float(other))
        self._check(other)
        merged: Dict[Mode, Tuple[float, float]] = dict(self._coeffs)
        for k, (a, b) in other._coeffs.items():
            a0, b0 = merged.get(k, (0.0, 0.0))
            merged[k] = (a0 + a, b0 + b)
        return FourierSeries(self.dims, merged)

    __radd__ = __add__

    def __neg__(self):
        return self.map_coeffs(lambda k, a, b: (-a, -b))

    def __sub__(self, other):
        return self + (-other if isinstance(other, FourierSeries) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            s = float(other)
            return self.map_coeffs(lambda k, a, b: (s * a, s * b))
        self._check(other)
        c1, c2 = self.to_complex(), other.to_complex()
        out: Dict[Mode, complex] = {}
        for k1, v1 in c1.items():
            for k2, v2 in c2.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0j) + v1 * v2
        return FourierSeries.from_complex(self.dims, out)

    __rmul__ = __mul__

    def allclose(self, other: "FourierSeries", atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._coeffs) | set(other._coeffs)
        return all(
            np.allclose(self._coeffs.get(k, (0.0, 0.0)), other._coeffs.get(k, (0.0, 0.0)), atol=atol, rtol=0)
            for k in keys
        )


class Polynomial:
    """Multivariate polynomial  sum c_e prod_i x_i^{e_i}, evaluated with derivatives."""

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], float]):
        self.nvars = int(nvars)
        acc: Dict[Mode, float] = {}
        for e, c in terms.items():
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars or min(e, default=0) < 0:
                raise ValueError(f"bad exponent {e} for {self.nvars} variables")
            acc[e] = acc.get(e, 0.0) + float(c)
        self.terms = {e: c for e, c in sorted(acc.items()) if c != 0.0}
        if self.terms:
            self.exps = np.array(list(self.terms), dtype=np.int64).reshape(-1, self.nvars)
            self.coefs = np.array(list(self.terms.values()))
        else:
            self.exps = np.zeros((0, self.nvars), dtype=np.int64)
            self.coefs = np.zeros(0)

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if len(self.coefs) else 0

    @staticmethod
    def _powers(x, e):
        # x (..., n), e (T, n) -> (..., T, n) with 0**0 = 1 and negative exponents -> 0
        xe = x[..., None, :] ** np.maximum(e, 0)
        return np.where(e < 0, 0.0, xe)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.prod(self._powers(x, self.exps), axis=-1) @ self.coefs

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for i in range(self.nvars):
            e = self.exps.copy()
            e[:, i] -= 1
            out[..., i] = np.prod(self._powers(x, e), axis=-1) @ (self.coefs * self.exps[:, i])
        return out

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.nvars,))
        for i in range(self.nvars):
            for j in range(i, self.nvars):
                e = self.exps.copy()
                e[:, i] -= 1
                fac = self.coefs * self.exps[:, i]
                fac = fac * e[:, j]
                e[:, j] -= 1
                v = np.prod(self._powers(x, e), axis=-1) @ fac
                out[..., i, j] = v
                out[..., j, i] = v
        return out

    def shift(self, x0) -> "Polynomial":
        """Polynomial in (x - x0) representing the same function."""
        from math import comb

        x0 = np.asarray(x0, dtype=float)
        out: Dict[Mode, float] = {}
        for e, c in self.terms.items():
            # prod (y + x0)^e  with y = x - x0
            parts = [[(j, comb(ei, j) * x0[i] ** (ei - j)) for j in range(ei + 1)] for i, ei in enumerate(e)]
            for combo in _product(parts):
                exps = tuple(j for j, _ in combo)
                out[exps] = out.get(exps, 0.0) + c * float(np.prod([w for _, w in combo]))
        return Polynomial(self.nvars, out)


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


class PolyFourier:
    """G(t, q, p) = sum_e (p - p0)^e * F_e(t, q): Fourier series whose coefficients are
    polynomials in the momentum offset from the resonant point p0."""

    def __init__(self, dims: Sequence[str], p0, parts: Mapping[Sequence[int], FourierSeries]):
        self.dims = tuple(dims)
        self.p0 = np.asarray(p0, dtype=float)
        self.n = len(self.p0)
        if len(self.dims) != self.n + 1:
            raise ValueError("PolyFourier dims must be (t, q_1..q_n)")
        self.parts: Dict[Mode, FourierSeries] = {}
        for e, F in parts.items():
            e = tuple(int(v) for v in e)
            if len(e) != self.n:
                raise ValueError(f"bad monomial {e}")
            F = F.embed(self.dims) if F.dims != self.dims else F
            self.parts[e] = self.parts[e] + F if e in self.parts else F
        self.parts = {e: F for e, F in sorted(self.parts.items()) if not F.is_zero()}

    @classmethod
    def from_series(cls, F: FourierSeries, p0) -> "PolyFourier":
        return cls(F.dims, p0, {(0,) * len(np.atleast_1d(p0)): F})

    def at_p0(self) -> FourierSeries:
        return self.parts.get((0,) * self.n, FourierSeries(self.dims))

    def is_p_independent(self) -> bool:
        return all(not any(e) for e in self.parts)

    def flat_terms(self):
        """Arrays (K (J,1+n) int32, a (J,), b (J,), E (J,n) int32) listing every trig term."""
        K, A, B, E = [], [], [], []
        for e, F in self.parts.items():
            k, a, b = F.arrays()
            K.append(k)
            A.append(a)
            B.append(b)
            E.append(np.tile(np.array(e, dtype=np.int64), (len(a), 1)))
        if not K:
            return (np.zeros((0, self.n + 1), np.int32), np.zeros(0), np.zeros(0), np.zeros((0, self.n), np.int32))
        return (
            np.ascontiguousarray(np.vstack(K), dtype=np.int32),
            np.concatenate(A),
            np.concatenate(B),
            np.ascontiguousarray(np.vstack(E), dtype=np.int32),
        )

    def __call__(self, t, q, p) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        dp = np.asarray(p, dtype=float) - self.p0
        x = np.concatenate([t[..., None], q], axis=-1)
        out = 0.0
        for e, F in self.parts.items():
            out = out + np.prod(dp ** np.array(e), axis=-1) * F(x)
        return out * np.ones(x.shape[:-1])
