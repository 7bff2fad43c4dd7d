"""Homological equation, the averaging corrector psi^eps and the normal form H1.

The corrector is the time-one map of eps^2 f in the extended phase space,

    psi^eps : (t, e, q, p) -> (t, e + eps^2 f_t(t, q), q, p + eps^2 grad_q f(t, q)),

with  f_t + omega . grad_{q1} f = G(., ., p0) - V.  H1 = H o psi^eps is evaluated by
composition; nothing beyond order eps^2 is ever expanded.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Sequence, Tuple

import numpy as np

from . import _pykernels as pk
from .fourier import TWO_PI, FourierSeries
from .model import HamiltonianSpec, average_potential
from .report import CertificateReport, inputs_hash, timed

DIVISOR_ZERO = 1e-13
RHS_ZERO = 1e-14


class ResonanceError(ValueError):
    """A zero divisor met a nonzero right-hand side coefficient."""


@dataclass(frozen=True, eq=False)
class HomologicalSolution:
    f: FourierSeries
    rhs: FourierSeries
    divisors: Dict[Tuple[int, ...], float]
    smallest_divisor: float

    def residual(self, omega, x) -> np.ndarray:
        """(d_t + omega . d_q1) f - rhs at points x (..., 1 + n)."""
        omega = np.atleast_1d(omega)
        Lf = self.f.derivative(0)(x)
        for i, w in enumerate(omega):
            Lf = Lf + w * self.f.derivative(1 + i)(x)
        return Lf - self.rhs(x)

    def mode_table(self):
        """Rows (mode, rhs cos, rhs sin, divisor, f cos, f sin) sorted by mode."""
        rc, fc = self.rhs.coeffs, self.f.coeffs
        return [(k, *rc[k], self.divisors[k], *fc.get(k, (0.0, 0.0))) for k in sorted(rc)]


def solve_homological(G_at_p0: FourierSeries, V: FourierSeries, omega) -> HomologicalSolution:
    """Solve (d_t + omega . d_q1) f = G(., ., p0) - V mode by mode.

    A mode a cos + b sin with divisor d = 2 pi (k_t + k_q1 . omega) gives
    f = (-b/d) cos + (a/d) sin. Modes with a zero divisor must carry zero data; they get f = 0.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    m = len(omega)
    rhs = G_at_p0 - V.embed(G_at_p0.dims)
    divisors, fc = {}, {}
    smallest = np.inf
    for k, (a, b) in rhs.coeffs.items():
        d = TWO_PI * (k[0] + float(np.dot(k[1:1 + m], omega)))
        divisors[k] = d
        if abs(d) <= DIVISOR_ZERO:
            if max(abs(a), abs(b)) > RHS_ZERO:
                raise ResonanceError(f"mode {k} has zero divisor but nonzero coefficient ({a:.3g}, {b:.3g})")
            continue
        smallest = min(smallest, abs(d))
        fc[k] = (-b / d, a / d)
    return HomologicalSolution(FourierSeries(G_at_p0.dims, fc), rhs, divisors, float(smallest))


# corrector ---------------------------------------------------------------------

def _split(f: FourierSeries, t, q):
    q = np.asarray(q, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
    return np.concatenate([t[..., None], q], axis=-1)


def apply_psi(f: FourierSeries, epsilon: float, point, inverse: bool = False):
    """psi^eps (or its inverse) on a point or batch (t, e, q, p)."""
    t, e, q, p = (np.asarray(v, dtype=float) for v in point)
    x = _split(f, t, q)
    s = -1.0 if inverse else 1.0
    eps2 = s * epsilon**2
    e_new = e + eps2 * f.derivative(0)(x)
    dp = np.stack([f.derivative(1 + i)(x) for i in range(q.shape[-1])], axis=-1)
    return t, e_new, q, p + eps2 * dp


def invert_psi(f: FourierSeries, epsilon: float, point):
    return apply_psi(f, epsilon, point, inverse=True)


class NormalFormH1:
    """H1 = H o psi^eps, with the averaged part h - eps^2 V and remainder R.

    The remainder used throughout is

        R(t,q,p) = G(t,q,p) - G(t,q,p0) - (grad h(p) - grad h(p0)) . grad_q f(t,q),

    which makes H1 - (h - eps^2 V - eps^2 R) = O(eps^4) uniformly; ``R_literal``
    drops the last term and leaves an O(eps^2 |p - p0|) discrepancy.
    """

    def __init__(self, spec: HamiltonianSpec, hom: HomologicalSolution | None = None):
        self.spec = spec
        self.V = average_potential(spec)
        self.hom = hom or solve_homological(spec.G.at_p0(), self.V, spec.omega)
        self.f = self.hom.f

    @property
    def epsilon(self):
        return self.spec.epsilon

    def with_epsilon(self, epsilon) -> "NormalFormH1":
        return NormalFormH1(self.spec.with_epsilon(epsilon), self.hom)

    @cached_property
    def _df(self):
        n = self.spec.n
        f = self.f
        ft = f.derivative(0)
        fq = [f.derivative(1 + i) for i in range(n)]
        fqq = [[fq[i].derivative(1 + j) for j in range(n)] for i in range(n)]
        ftq = [ft.derivative(1 + i) for i in range(n)]
        return ft, fq, fqq, ftq

    def f_derivs(self, t, q):
        """f_t (N,), grad_q f (N,n), Hessian_qq f (N,n,n), grad_q f_t (N,n)."""
        x = _split(self.f, t, q)
        ft, fq, fqq, ftq = self._df
        n = self.spec.n
        gq = np.stack([fq[i](x) for i in range(n)], axis=-1)
        Hq = np.stack([np.stack([fqq[i][j](x) for j in range(n)], axis=-1) for i in range(n)], axis=-2)
        gtq = np.stack([ftq[i](x) for i in range(n)], axis=-1)
        return ft(x), gq, Hq, gtq

    def shifted_p(self, t, q, p):
        _, gq, _, _ = self.f_derivs(t, q)
        return np.asarray(p, float) + self.epsilon**2 * gq

    def minus_h(self, t, q, p):
        """H1(t,q,p) - h(p), formed so that every eps^2-level term is kept separate."""
        eps2 = self.epsilon**2
        ft, gq, _, _ = self.f_derivs(t, q)
        p = np.asarray(p, dtype=float)
        pt = p + eps2 * gq
        h = self.spec.h.value
        return (h(pt) - h(p)) - eps2 * self.spec.G(t, q, pt) + eps2 * ft

    def value(self, t, q, p):
        return self.spec.h.value(np.asarray(p, float)) + self.minus_h(t, q, p)

    def V_at(self, q):
        q2 = np.asarray(q, float)[..., self.spec.m:]
        return self.V(q2)

    def R(self, t, q, p):
        p = np.asarray(p, dtype=float)
        _, gq, _, _ = self.f_derivs(t, q)
        dh = self.spec.h.gradient(p) - self.spec.h.gradient(self.spec.p0)
        return self.R_literal(t, q, p) - np.sum(dh * gq, axis=-1)

    def R_literal(self, t, q, p):
        p = np.asarray(p, dtype=float)
        p0 = np.broadcast_to(self.spec.p0, p.shape)
        return self.spec.G(t, q, p) - self.spec.G(t, q, p0)

    def vector_field(self, t, y):
        """Hamiltonian field of H1 at states y (N, 2n)."""
        n = self.spec.n
        eps2 = self.epsilon**2
        y = np.atleast_2d(np.asarray(y, dtype=float))
        t = np.broadcast_to(np.asarray(t, float), (len(y),))
        q, p = y[:, :n], y[:, n:]
        _, gq, Hq, gtq = self.f_derivs(t, q)
        pt = p + eps2 * gq
        dy, _, _ = pk.field(self.spec.kernel_model, t, np.concatenate([q, pt], axis=1), eps2)
        qdot = dy[:, :n]
        pdot = dy[:, n:] - eps2 * np.einsum("nij,nj->ni", Hq, qdot) - eps2 * gtq
        return np.concatenate([qdot, pdot], axis=1)

    def to_H(self, t, y):
        """Map H1-states to H-states (q, p + eps^2 grad_q f)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = self.spec.n
        return np.concatenate([y[:, :n], self.shifted_p(np.broadcast_to(t, (len(y),)), y[:, :n], y[:, n:])], axis=1)

    def from_H(self, t, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = self.spec.n
        _, gq, _, _ = self.f_derivs(np.broadcast_to(t, (len(y),)), y[:, :n])
        return np.concatenate([y[:, :n], y[:, n:] - self.epsilon**2 * gq], axis=1)

    def dpsi(self, t, y):
        """Jacobian of the (q, p) part of psi at fixed t: [[I, 0], [eps^2 f_qq, I]]."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = self.spec.n
        _, _, Hq, _ = self.f_derivs(np.broadcast_to(t, (len(y),)), y[:, :n])
        J = np.broadcast_to(np.eye(2 * n), (len(y), 2 * n, 2 * n)).copy()
        J[:, n:, :n] = self.epsilon**2 * Hq
        return J


def remainder_samples(spec: HamiltonianSpec, n_samples: int = 64, delta: float = 0.2, seed: int = 0):
    """Fixed (t, q, p) sample with p in the delta-ball around p0."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(size=n_samples)
    q = rng.uniform(size=(n_samples, spec.n))
    u = rng.normal(size=(n_samples, spec.n))
    u *= delta * rng.uniform(size=(n_samples, 1)) / np.linalg.norm(u, axis=1, keepdims=True)
    return t, q, spec.p0 + u


def remainder_sup(H1: NormalFormH1, t, q, p, literal: bool = False) -> float:
    eps2 = H1.epsilon**2
    R = H1.R_literal(t, q, p) if literal else H1.R(t, q, p)
    res = H1.minus_h(t, q, p) + eps2 * H1.V_at(q) + eps2 * R
    return float(np.max(np.abs(res)))


def fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.all(y == 0):
        return np.inf
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def remainder_order_sweep(spec: HamiltonianSpec, epsilons: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
                          n_samples: int = 64, delta: float = 0.2, seed: int = 0, min_slope: float = 3.5,
                          literal: bool = False) -> CertificateReport:
    """Fit log sup|H1 - (h - eps^2 V - eps^2 R)| against log eps over the ladder."""
    eps = np.sort(np.asarray(epsilons, dtype=float))[::-1]
    rep = CertificateReport("remainder_order", True, thresholds=dict(min_slope=min_slope),
                            inputs_hash=inputs_hash(dict(name=spec.name, eps=eps, n=n_samples, seed=seed,
                                                         delta=delta, literal=literal)))
    with timed(rep):
        H1 = NormalFormH1(spec)
        t, q, p = remainder_samples(spec, n_samples, delta, seed)
        s = np.array([remainder_sup(H1.with_epsilon(e), t, q, p, literal) for e in eps])
        slope = fit_slope(eps, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = s[:-1] / s[1:]
        rep.measured.update(epsilons=eps, sup_residual=s, fitted_slope=slope, doubling_ratios=ratios,
                            smallest_divisor=H1.hom.smallest_divisor, exact_zero=bool(np.all(s == 0)))
        rep.check(slope >= min_slope, f"remainder slope {slope:.3f} below {min_slope}")
    return rep
