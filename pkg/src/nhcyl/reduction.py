"""Linear hyperbolic normal form: SPD square roots, L and D, and the (x, y) / scaled coordinates.

For A, B symmetric positive definite, L is the SPD solution of L^2 A L^2 = B and

    D = L A L = L^-1 B L^-1,

which conjugates the field of 1/2 <Bp, p> - 1/2 <Aq, q> to x' = D x, y' = -D y.
All matrix functions accept stacked batches (..., r, r).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import AveragedData
from .report import CertificateReport, timed

SYM_TOL = 1e-14


class SpdMatrix:
    """Symmetric positive definite matrix (or stack of them) with a cached eigendecomposition."""

    def __init__(self, entries, tol: float = SYM_TOL):
        M = np.array(entries, dtype=float)
        if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
            raise ValueError("expected square matrices")
        MT = np.swapaxes(M, -1, -2)
        scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
        if np.max(np.abs(M - MT), initial=0.0) > tol * scale:
            raise ValueError("matrix is not symmetric")
        self.entries = 0.5 * (M + MT)
        w, U = np.linalg.eigh(self.entries)
        if np.min(w, initial=np.inf) <= 0:
            raise ValueError(f"matrix is not positive definite (min eigenvalue {np.min(w):.3g})")
        self.eigenvalues, self.eigenvectors = w, U

    @property
    def dim(self) -> int:
        return self.entries.shape[-1]

    def power(self, s: float) -> np.ndarray:
        U, w = self.eigenvectors, self.eigenvalues
        return (U * w[..., None, :] ** s) @ np.swapaxes(U, -1, -2)

    def sqrt(self) -> "SpdMatrix":
        return SpdMatrix(self.power(0.5), tol=1e-10)

    def inv(self) -> np.ndarray:
        return self.power(-1.0)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _as_spd(M) -> SpdMatrix:
    return M if isinstance(M, SpdMatrix) else SpdMatrix(M)


def spd_sqrt(M) -> SpdMatrix:
    """The SPD square root, from the eigendecomposition."""
    return _as_spd(M).sqrt()


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def compute_L(A, B) -> SpdMatrix:
    """L = (A^-1/2 (A^1/2 B A^1/2)^1/2 A^-1/2)^1/2, batched over B."""
    A, B = _as_spd(A), _as_spd(B)
    Ah = A.power(0.5)
    Aih = A.power(-0.5)
    inner = SpdMatrix(_sym(Ah @ B.entries @ Ah), tol=1e-10).power(0.5)
    return SpdMatrix(_sym(Aih @ inner @ Aih), tol=1e-10).sqrt()


def compute_D(A, L) -> np.ndarray:
    L = np.asarray(L)
    return _sym(L @ np.asarray(A) @ L)


def xy_change(q2, p2, P2, L, epsilon):
    """x = L (p2 - P2) + eps L^-1 q2,  y = L (p2 - P2) - eps L^-1 q2 (batched, L (..., r, r))."""
    L = np.asarray(L)
    Linv = np.linalg.inv(L)
    u = np.einsum("...ij,...j->...i", L, np.asarray(p2) - np.asarray(P2))
    v = epsilon * np.einsum("...ij,...j->...i", Linv, np.asarray(q2))
    return u + v, u - v


def xy_inverse(x, y, P2, L, epsilon):
    """q2 = L (x - y) / (2 eps),  p2 = P2 + L^-1 (x + y) / 2."""
    L = np.asarray(L)
    Linv = np.linalg.inv(L)
    q2 = np.einsum("...ij,...j->...i", L, np.asarray(x) - np.asarray(y)) / (2.0 * epsilon)
    p2 = np.asarray(P2) + 0.5 * np.einsum("...ij,...j->...i", Linv, np.asarray(x) + np.asarray(y))
    return q2, p2


def linear_block_check(A, B, tol: float = 1e-10) -> CertificateReport:
    """Conjugate the field of 1/2<Bp,p> - 1/2<Aq,q> by x = (Lp + L^-1 q)/sqrt2, y = (Lp - L^-1 q)/sqrt2."""
    A, B = _as_spd(A), _as_spd(B)
    r = A.dim
    rep = CertificateReport("linear_block", True, thresholds=dict(tol=tol))
    with timed(rep):
        L = compute_L(A, B).entries
        Li = np.linalg.inv(L)
        D = compute_D(A.entries, L)
        Z = np.zeros((r, r))
        M = np.block([[Z, B.entries], [A.entries, Z]])  # (q, p)' = M (q, p)
        T = np.block([[Li, L], [-Li, L]]) / np.sqrt(2.0)
        C = T @ M @ np.linalg.inv(T)
        target = np.block([[D, Z], [Z, -D]])
        block_res = float(np.max(np.abs(C - target)))
        rep.measured.update(L=L, D=D, block_residual=block_res,
                            D_consistency=float(np.max(np.abs(D - Li @ B.entries @ Li))))
        rep.check(block_res <= tol * max(1.0, np.max(np.abs(D))), "conjugated field is not diag(D, -D)")

        w, V = np.linalg.eig(M)
        stable = V[:, np.real(w) < 0].real
        S = np.linalg.solve(stable[:r].T, stable[r:].T).T  # stable space p = S q
        cand = {"-L^-2": -Li @ Li, "-L^2": -L @ L}
        dist = {k: float(np.max(np.abs(S - v))) for k, v in cand.items()}
        rep.measured.update(stable_slope=S, stable_match_residuals=dist,
                            stable_space_matches=min(dist, key=dist.get),
                            eigenvalues=np.sort(np.real(w)))
    return rep


def _matrix_derivative(fn, p1, h=1e-5):
    """Central differences of a matrix-valued fn along each p1 component: (..., m, r, r)."""
    p1 = np.asarray(p1, dtype=float)
    m = p1.shape[-1]
    out = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        out.append((fn(p1 + e) - fn(p1 - e)) / (2 * h))
    return np.stack(out, axis=-3)


@dataclass(frozen=True, eq=False)
class ReductionData:
    """L, D along the cylinder, rates a (normal) and b (slow), and the angle scaling alpha.

    a and b are in slow-time (tau = eps t) units.
    """

    avg: AveragedData
    delta: float
    alpha: float
    a: float
    b: float
    torsion_sup: float
    samples: np.ndarray = field(repr=False)

    @property
    def A(self):
        return self.avg.A

    def L(self, p1):
        return compute_L(self.avg.A, self.avg.B(p1)).entries

    def Linv(self, p1):
        return np.linalg.inv(self.L(p1))

    def D(self, p1):
        return compute_D(self.avg.A, self.L(p1))

    def dL(self, p1):
        """dL/dp1, shape (..., m, r, r)."""
        return _matrix_derivative(self.L, p1)

    def to_xy(self, p1, q2, p2, epsilon):
        return xy_change(q2, p2, self.avg.P2(p1), self.L(p1), epsilon)

    def from_xy(self, p1, x, y, epsilon):
        return xy_inverse(x, y, self.avg.P2(p1), self.L(p1), epsilon)


def reduction_data(avg: AveragedData, delta: float = 0.2, alpha: float | None = None,
                   n_samples: int = 65, seed: int = 0) -> ReductionData:
    """Sample B (radius delta about p1^0) for a = min eig D, the torsion bound and alpha.

    alpha = min(1/2, a / (2 sup |d Omega0|)) keeps the principal slow rate alpha |d Omega0|
    at most a/2; b is that principal rate.
    """
    spec = avg.spec
    m = spec.m
    center = spec.p0[:m]
    if m == 1:
        samples = center + np.linspace(-delta, delta, n_samples)[:, None]
    else:
        from .model import ball_samples
        samples = ball_samples(center, delta, n_samples, seed)
    L = compute_L(avg.A, avg.B(samples)).entries
    D = compute_D(avg.A, L)
    a = float(np.min(np.linalg.eigvalsh(D)))
    tors = float(np.max(np.linalg.norm(avg.torsion(samples), ord=2, axis=(-2, -1))))
    if alpha is None:
        alpha = min(0.5, 0.5 * a / tors) if tors > 0 else 0.5
    return ReductionData(avg=avg, delta=delta, alpha=float(alpha), a=a, b=float(alpha * tors),
                         torsion_sup=tors, samples=samples)
