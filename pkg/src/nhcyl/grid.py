"""Tensor grids over (t, q1, p1): periodic in (t, q1), an interval in p1.

Interpolation is trigonometric in t and q1 and local Lagrange on ``p_width`` nodes in p1;
p1-derivatives use centered finite differences on ``p_width + 1`` nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


def fd_weights(x0: float, xs, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at x0 on nodes xs (Fornberg's recursion)."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5 = 1.0, c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def fd_matrix(nodes, order: int = 1, width: int = 5) -> np.ndarray:
    """Dense differentiation matrix on a 1-D grid: centered stencils inside, one-sided at the ends."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    M = np.zeros((n, n))
    half = width // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        M[i, lo:lo + width] = fd_weights(nodes[i], nodes[lo:lo + width], order)
    return M


def lagrange_stencil(nodes, x, width: int = 4):
    """Stencil start indices (M,) and weights (M, width) for Lagrange interpolation on a uniform grid."""
    nodes = np.asarray(nodes, dtype=float)
    h = nodes[1] - nodes[0]
    s = (np.asarray(x, dtype=float) - nodes[0]) / h
    i0 = np.clip(np.floor(s).astype(np.int64) - (width // 2 - 1), 0, len(nodes) - width)
    u = (s - i0)[:, None]
    j = np.arange(width)
    diff = u - j[None, :]
    w = np.empty((len(s), width))
    for a in range(width):
        others = np.delete(j, a)
        w[:, a] = np.prod(diff[:, others], axis=1) / np.prod(a - others)
    return i0, w


def lagrange4(nodes, x):
    """Cubic (4-point) case of :func:`lagrange_stencil`."""
    return lagrange_stencil(nodes, x, 4)


def _freqs(N):
    return np.fft.fftfreq(N, 1.0 / N)


def _basis(N, x):
    """Trigonometric interpolation basis exp(2 pi i k x) with the Nyquist column as a cosine."""
    k = _freqs(N)
    E = np.exp(1j * TWO_PI * np.outer(x, k))
    if N % 2 == 0:
        E[:, N // 2] = np.cos(TWO_PI * (N // 2) * x)
    return E


@dataclass(eq=False)
class GraphFunction:
    """Node values (N_t, N_q, N_p, d) of a function on T x T x [p_lo, p_hi]."""

    values: np.ndarray
    p_lo: float
    p_hi: float
    meta: dict = field(default_factory=dict)
    p_width: int = 8

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4:
            raise ValueError("values must have shape (N_t, N_q, N_p, d)")

    @classmethod
    def zeros(cls, Nt, Nq, Np, d, p_lo, p_hi, p_width=8, **meta):
        return cls(np.zeros((Nt, Nq, Np, d)), p_lo, p_hi, dict(meta), p_width)

    @property
    def shape(self):
        return self.values.shape[:3]

    @property
    def dim(self):
        return self.values.shape[3]

    @cached_property
    def t_nodes(self):
        return np.arange(self.shape[0]) / self.shape[0]

    @cached_property
    def q_nodes(self):
        return np.arange(self.shape[1]) / self.shape[1]

    @cached_property
    def p_nodes(self):
        return np.linspace(self.p_lo, self.p_hi, self.shape[2])

    def mesh(self):
        """Node coordinates T, Q, P each of shape (N_t, N_q, N_p)."""
        return np.meshgrid(self.t_nodes, self.q_nodes, self.p_nodes, indexing="ij")

    def with_values(self, values, **meta) -> "GraphFunction":
        return GraphFunction(np.asarray(values, float).reshape(self.shape + (-1,)), self.p_lo, self.p_hi,
                             {**self.meta, **meta}, self.p_width)

    # calculus -------------------------------------------------------------------
    @cached_property
    def _coeffs(self):
        Nt, Nq = self.shape[:2]
        return np.fft.fft2(self.values, axes=(0, 1)) / (Nt * Nq)

    def _spectral_derivative(self, axis):
        N = self.shape[axis]
        k = _freqs(N)
        if N % 2 == 0:
            k[N // 2] = 0.0
        mult = (1j * TWO_PI * k).reshape((-1, 1, 1, 1) if axis == 0 else (1, -1, 1, 1))
        return np.real(np.fft.ifft2(np.fft.fft2(self.values, axes=(0, 1)) * mult, axes=(0, 1)))

    def derivative(self, axis: int) -> "GraphFunction":
        """Partial derivative along t (0), q1 (1) spectrally, or p1 (2) by finite differences."""
        if axis in (0, 1):
            v = self._spectral_derivative(axis)
        else:
            v = np.einsum("ij,abjd->abid", fd_matrix(self.p_nodes, 1, self.p_width + 1), self.values)
        return replace(self, values=v, meta=dict(self.meta))

    def __call__(self, t, q1, p1) -> np.ndarray:
        """Interpolate at points; t and q1 wrap periodically. Returns (M, d)."""
        t, q1, p1 = (np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in np.broadcast_arrays(t, q1, p1))
        Nt, Nq, Np = self.shape
        d = self.dim
        C = self._coeffs
        i0, w = lagrange_stencil(self.p_nodes, p1, self.p_width)
        Et = _basis(Nt, t)
        Eq = _basis(Nq, q1)
        out = np.zeros((len(t), d))
        # one matrix product per p-node, over the points whose stencil uses it
        for j in range(self.p_width):
            node = i0 + j
            for k in np.unique(node):
                sel = np.nonzero(node == k)[0]
                A = (Et[sel] @ C[:, :, k, :].reshape(Nt, Nq * d)).reshape(len(sel), Nq, d)
                out[sel] += w[sel, j, None] * np.real(np.einsum("mbd,mb->md", A, Eq[sel]))
        return out

    def c0_norm(self, mask=None) -> float:
        nrm = np.linalg.norm(self.values, axis=-1)
        if mask is not None:
            nrm = nrm[mask]
        return float(np.max(nrm)) if nrm.size else 0.0

    def c1_norm(self, mask=None) -> float:
        """max of the C0 norms of the function and its three first partials."""
        return max(self.c0_norm(mask), *(self.derivative(a).c0_norm(mask) for a in range(3)))

    def inner_mask(self, center: float, radius: float):
        P = self.mesh()[2]
        return np.abs(P - center) <= radius + 1e-12
