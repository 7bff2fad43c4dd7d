"""The time-one map restricted to the cylinder section t = 0, in the chart (q1, p1).

Phi(q1, p1) follows the H-orbit of the graph point (q1, Q2(0,q1,p1), p1, P2(0,q1,p1)) for
one unit of time and reads off (q1, p1); Phi0(q1, p1) = (q1 + Omega0(p1), p1) is its
eps -> 0 model. One fast angle (m = 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _pykernels as pk
from .cylinder import CylinderSolution
from .flow import propagate
from .grid import GraphFunction
from .model import AveragedData
from .report import CertificateReport, timed

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def wrap(dq):
    """Representative of an angle difference in [-1/2, 1/2)."""
    return np.mod(np.asarray(dq) + 0.5, 1.0) - 0.5


def phi0(avg: AveragedData, q1, p1):
    q1 = np.asarray(q1, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    Om = avg.Omega0(p1[..., None])[..., 0]
    return np.mod(q1 + Om, 1.0), p1


def dphi0(avg: AveragedData, p1):
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    out = np.zeros((len(p1), 2, 2))
    out[:, 0, 0] = out[:, 1, 1] = 1.0
    out[:, 0, 1] = avg.torsion(p1[:, None])[:, 0, 0]
    return out


def section_samples(center: float, radius: float, nq: int = 32, np_: int = 33, n_random: int = 0, seed: int = 0):
    """Tensor grid over T x [center - radius, center + radius] plus seeded random points."""
    q, p = np.meshgrid(np.arange(nq) / nq, np.linspace(center - radius, center + radius, np_), indexing="ij")
    q, p = q.ravel(), p.ravel()
    if n_random:
        rng = np.random.default_rng(seed)
        q = np.concatenate([q, rng.uniform(size=n_random)])
        p = np.concatenate([p, center + radius * rng.uniform(-1, 1, size=n_random)])
    return q, p


@dataclass(eq=False)
class RestrictedMap:
    sol: CylinderSolution

    @property
    def spec(self):
        return self.sol.system.spec

    @property
    def avg(self):
        return self.sol.system.avg

    @property
    def r(self):
        return self.sol.system.r

    @cached_property
    def _graph(self):
        G = self.sol.qp_H
        return G, G.derivative(1), G.derivative(2)

    def embed(self, q1, p1):
        G = self._graph[0]
        v = G(np.zeros_like(q1), q1, p1)
        r = self.r
        return np.concatenate([np.asarray(q1)[:, None], v[:, :r], np.asarray(p1)[:, None], v[:, r:]], axis=1)

    def embed_jacobian(self, q1, p1, t=None):
        """d(q, p)/d(q1, p1) of the graph embedding at time t (default 0), shape (M, 2n, 2)."""
        _, Gq, Gp = self._graph
        t = np.zeros_like(q1) if t is None else t
        dq, dp = Gq(t, q1, p1), Gp(t, q1, p1)
        r = self.r
        E = np.zeros((len(q1), 2 + 2 * r, 2))
        E[:, 0, 0] = 1.0
        E[:, 1 + r, 1] = 1.0
        E[:, 1:1 + r, 0], E[:, 1:1 + r, 1] = dq[:, :r], dp[:, :r]
        E[:, 2 + r:, 0], E[:, 2 + r:, 1] = dq[:, r:], dp[:, r:]
        return E

    def omega_A(self, q1, p1):
        """Matrix of the pullback of sum dq ^ dp to the graph, in the chart (q1, p1)."""
        E = self.embed_jacobian(q1, p1)
        n = self.spec.n
        Om = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
        return np.swapaxes(E, 1, 2) @ Om @ E

    def flow(self, q1, p1, tangent=False):
        Z0 = self.embed(q1, p1)
        return Z0, *propagate(self.spec, Z0, 0.0, 1.0, self.sol.config.step, tangent)[:2]

    def __call__(self, q1, p1, jacobian: bool = False):
        q1 = np.atleast_1d(np.asarray(q1, dtype=float))
        p1 = np.atleast_1d(np.asarray(p1, dtype=float))
        _, Z1, J = self.flow(q1, p1, tangent=jacobian)
        r = self.r
        out = (np.mod(Z1[:, 0], 1.0), Z1[:, 1 + r])
        if not jacobian:
            return out
        rows = [0, 1 + r]
        dPhi = J[:, rows, :] @ self.embed_jacobian(q1, p1)
        return out, dPhi


def restricted_map(sol: CylinderSolution) -> RestrictedMap:
    return RestrictedMap(sol)


def map_distance(rm: RestrictedMap, q1, p1):
    """sup |Phi - Phi0| and sup ||dPhi - dPhi0||_2 over the samples."""
    (qa, pa), dP = rm(q1, p1, jacobian=True)
    qb, pb = phi0(rm.avg, q1, p1)
    d0 = float(np.max(np.hypot(wrap(qa - qb), pa - pb)))
    d1 = float(np.max(np.linalg.norm(dP - dphi0(rm.avg, p1), ord=2, axis=(1, 2))))
    return d0, d1


def convergence_sweep(maps: Sequence[RestrictedMap], B0: float | None = None, eta: float = 0.1,
                      finest_max: float = 0.05, nq: int = 32, np_: int = 33, n_random: int = 0,
                      seed: int = 0) -> CertificateReport:
    """|Phi - Phi0| strictly decreasing along the eps ladder, small at the finest eps; |dPhi - dPhi0| <= eta there."""
    maps = sorted(maps, key=lambda m: -m.sol.epsilon)
    rep = CertificateReport("convergence", True, thresholds=dict(eta=eta, finest_max=finest_max))
    with timed(rep):
        sol = maps[-1].sol
        B0 = 0.5 * sol.delta if B0 is None else B0
        q1, p1 = section_samples(sol.p_center, B0, nq, np_, n_random, seed)
        eps = [m.sol.epsilon for m in maps]
        d0, d1 = zip(*(map_distance(m, q1, p1) for m in maps))
        rep.measured.update(epsilons=eps, sup_phi_dist=d0, sup_dphi_dist=d1, B0=B0, n_samples=len(q1), seed=seed)
        if len(d0) > 1:
            rep.check(all(b < a for a, b in zip(d0, d0[1:])), "|Phi - Phi0| not strictly decreasing along the ladder")
        rep.check(d0[-1] <= finest_max, f"|Phi - Phi0| = {d0[-1]:.3g} at the finest eps")
        rep.check(d1[-1] <= eta, f"|dPhi - dPhi0| = {d1[-1]:.3g} > eta")
    return rep


def section_invariance(rm: RestrictedMap, B0: float | None = None, tol_contain: float = 1e-3, nq: int = 32,
                       np_: int = 33, record_every: int = 10) -> CertificateReport:
    """Images of graph points over T x B0 stay over B and on the graph; records max |p1'| / eps^2."""
    sol = rm.sol
    spec = rm.spec
    eps, r, delta = sol.epsilon, rm.r, sol.delta
    rep = CertificateReport("section_invariance", True, thresholds=dict(tol_contain=tol_contain))
    with timed(rep):
        B0 = 0.5 * delta if B0 is None else B0
        q1, p1 = section_samples(sol.p_center, B0, nq, np_)
        Z0 = rm.embed(q1, p1)
        step = sol.config.step
        nsteps = int(round(1.0 / step))
        from .kernels import backend
        Z1, _, _, _, rec = backend().rk4(spec.kernel_model, Z0, 0.0, step, nsteps, eps**2, False, None, None,
                                         record_every)
        times = np.arange(rec.shape[1]) * step * record_every
        pdot = np.stack([pk.field(spec.kernel_model, tk, rec[:, k], eps**2)[0][:, 1 + r]
                         for k, tk in enumerate(times)], axis=1)
        ratio = float(np.max(np.abs(pdot))) / eps**2
        q1n, p1n = Z1[:, 0], Z1[:, 1 + r]
        g = sol.qp_H(np.ones_like(q1n), np.mod(q1n, 1.0), p1n)
        dist = np.max(np.abs(np.concatenate([Z1[:, 1:1 + r], Z1[:, 2 + r:]], axis=1) - g), axis=1)
        inside = np.abs(p1n - sol.p_center) <= delta
        rep.measured.update(max_distance=float(np.max(dist)), all_in_B=bool(inside.all()),
                            max_p1dot_over_eps2=ratio, B0=B0, max_p1_excursion=float(np.max(np.abs(p1n - p1))))
        rep.check(inside.all(), "an image left B")
        rep.check(np.max(dist) <= tol_contain, f"an image is {np.max(dist):.3g} off the graph")
    return rep


def p1dot_scaling(reports: Sequence[CertificateReport], factor: float = 2.0) -> CertificateReport:
    """max |p1'| / eps^2 must not grow by more than ``factor`` along the eps ladder (eps decreasing)."""
    vals = [r.measured["max_p1dot_over_eps2"] for r in reports]
    rep = CertificateReport("p1dot_scaling", True, measured=dict(values=vals), thresholds=dict(factor=factor))
    rep.check(all(b <= factor * max(a, 1e-300) or b == 0 for a, b in zip(vals, vals[1:])),
              "max |p1'|/eps^2 grows along the ladder")
    return rep


def torsion_check(rm: RestrictedMap, B0: float | None = None, min_eig: float = 0.5, n_random: int = 200,
                  seed: int = 0) -> CertificateReport:
    """Symmetric part of d_{p1}(q1 o Phi) positive definite on T x B0; compared with the Hessian of h0."""
    sol = rm.sol
    rep = CertificateReport("torsion", True, thresholds=dict(min_eig=min_eig))
    with timed(rep):
        B0 = 0.5 * sol.delta if B0 is None else B0
        q1, p1 = section_samples(sol.p_center, B0, 8, 9, n_random, seed)
        _, dP = rm(q1, p1, jacobian=True)
        block = dP[:, :1, 1:]
        sym = 0.5 * (block + np.swapaxes(block, 1, 2))
        eigs = np.linalg.eigvalsh(sym)
        model = rm.avg.torsion(p1[:, None])
        lo = float(np.min(eigs))
        rep.measured.update(min_eigenvalue=lo, n_samples=len(q1), seed=seed,
                            max_dev_from_h0_hessian=float(np.max(np.abs(block - model))),
                            all_positive=bool(np.all(eigs > 0)))
        rep.check(np.all(eigs > 0), "torsion block not positive definite")
        rep.check(lo >= min_eig, f"min torsion eigenvalue {lo:.3g} below {min_eig}")
    return rep


def restricted_form_check(rm: RestrictedMap, B0: float | None = None, tol_pullback: float = 1e-6,
                          min_det: float = 0.5, nq: int = 16, np_: int = 17) -> CertificateReport:
    """omega_A non-degenerate and preserved by Phi: dPhi^T omega_A(Phi x) dPhi = omega_A(x)."""
    sol = rm.sol
    rep = CertificateReport("restricted_form", True, thresholds=dict(tol_pullback=tol_pullback, min_det=min_det))
    with timed(rep):
        B0 = 0.5 * sol.delta if B0 is None else B0
        q1, p1 = section_samples(sol.p_center, B0, nq, np_)
        (qn, pn), dP = rm(q1, p1, jacobian=True)
        w0 = rm.omega_A(q1, p1)
        w1 = rm.omega_A(qn, pn)
        pull = np.swapaxes(dP, 1, 2) @ w1 @ dP
        res = float(np.max(np.abs(pull - w0)))
        dets = np.abs(np.linalg.det(w0))
        dev = float(np.max(np.abs(w0 - J2)))
        rep.measured.update(pullback_residual=res, min_abs_det=float(np.min(dets)), deviation_from_standard=dev)
        rep.check(res <= tol_pullback, f"pullback residual {res:.3g}")
        rep.check(np.min(dets) >= min_det, f"|det omega_A| = {np.min(dets):.3g} < {min_det}")
    return rep


def form_deviation_scaling(reports: Sequence[CertificateReport], epsilons: Sequence[float]) -> CertificateReport:
    """|omega_A - standard| = O(eps): halving eps must at least halve the deviation (up to 10%)."""
    devs = [r.measured["deviation_from_standard"] for r in reports]
    order = np.argsort(epsilons)[::-1]
    e = np.asarray(epsilons, float)[order]
    d = np.asarray(devs, float)[order]
    rep = CertificateReport("form_deviation_scaling", True, measured=dict(epsilons=e, deviations=d))
    if np.all(d == 0):
        rep.measured["slope"] = np.inf
        return rep
    slope = float(np.polyfit(np.log(e), np.log(d), 1)[0]) if len(e) > 1 else np.nan
    rep.measured["slope"] = slope
    rep.check(len(e) < 2 or slope >= 0.9, f"deviation decays like eps^{slope:.2f}, slower than O(eps)")
    return rep
