"""The normally hyperbolic cylinder as an invariant graph x = X(t,q1,p1), y = Y(t,q1,p1).

Coordinates (one fast angle, m = 1):

    x = L(p1)(p2 - P2(p1)) + eps L^-1(p1) q2,   y = L(p1)(p2 - P2(p1)) - eps L^-1(p1) q2,

in which the H1 field reads x' = eps D x + ..., y' = -eps D y + ... (t-units). Invariance of
the graph is the pair of transport equations

    (d_t + Omega0 d_q1 - eps D) X = F_x,   (d_t + Omega0 d_q1 + eps D) Y = F_y,

with F collecting everything beyond the frozen linear part. Inverting the left-hand sides
mode by mode is the variation-of-constants (Perron) integral along the frozen slow flow,
over an infinite horizon: X integrates backward in time, Y forward. The right-hand sides
are refreshed from the current graph (Jacobi sweeps) until the update is below tolerance.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .averaging import NormalFormH1
from .flow import propagate
from .grid import GraphFunction, TWO_PI, fd_matrix
from .reduction import ReductionData
from .report import CertificateReport, inputs_hash, timed


class ContractionError(RuntimeError):
    pass


class DomainError(RuntimeError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    Nt: int = 32
    Nq: int = 32
    Np: int = 33
    tol_graph: float = 1e-8
    max_sweeps: int = 200
    stall_sweeps: int = 5
    margin: float = 0.9
    inner: float = 0.8
    step: float = 1e-3
    p_width: int = 8


class ScaledSystem:
    """H1 in the coordinates (t, q1, p1, x, y), and the scaled ones (tau, theta, r, x, y)."""

    def __init__(self, H1: NormalFormH1, red: ReductionData):
        if H1.spec.m != 1:
            raise NotImplementedError("the cylinder solver handles one fast angle (m = 1)")
        self.H1 = H1
        self.red = red
        self.avg = red.avg
        self.spec = H1.spec
        self.eps = H1.epsilon
        self.r = self.spec.r
        self.alpha = red.alpha

    def frame(self, p1):
        """L, L^-1, dL/dp1, D, P2, dP2/dp1, Omega0 at p1 (M,)."""
        P1 = np.asarray(p1, dtype=float).reshape(-1, 1)
        L = self.red.L(P1)
        Li = np.linalg.inv(L)
        return dict(L=L, Li=Li, dL=self.red.dL(P1)[:, 0], D=L @ self.avg.A @ L,
                    P2=self.avg.P2(P1), dP2=self.avg.dP2(P1)[..., 0], Om=self.avg.Omega0(P1)[:, 0])

    @staticmethod
    def take(fr, idx):
        return {k: v[idx] for k, v in fr.items()}

    def to_qp(self, q1, p1, x, y, fr=None):
        fr = fr or self.frame(p1)
        q2 = np.einsum("mij,mj->mi", fr["L"], x - y) / (2 * self.eps)
        p2 = fr["P2"] + 0.5 * np.einsum("mij,mj->mi", fr["Li"], x + y)
        return np.concatenate([np.asarray(q1).reshape(-1, 1), q2, np.asarray(p1).reshape(-1, 1), p2], axis=1)

    def from_qp(self, Y, fr=None):
        r = self.r
        q1, q2, p1, p2 = Y[:, 0], Y[:, 1:1 + r], Y[:, 1 + r], Y[:, 2 + r:]
        fr = fr or self.frame(p1)
        u = np.einsum("mij,mj->mi", fr["L"], p2 - fr["P2"])
        v = self.eps * np.einsum("mij,mj->mi", fr["Li"], q2)
        return q1, p1, u + v, u - v

    def xy_field(self, t, q1, p1, x, y, fr=None):
        """(q1', p1', x', y') in t-units, by the chain rule through the coordinate change."""
        fr = fr or self.frame(p1)
        r, eps = self.r, self.eps
        Y = self.to_qp(q1, p1, x, y, fr)
        F = self.H1.vector_field(np.broadcast_to(t, (len(Y),)), Y)
        q1d, q2d, p1d, p2d = F[:, 0], F[:, 1:1 + r], F[:, 1 + r], F[:, 2 + r:]
        L, Li = fr["L"], fr["Li"]
        dLp = fr["dL"] * p1d[:, None, None]
        dLip = -Li @ dLp @ Li
        w = Y[:, 2 + r:] - fr["P2"]
        q2 = Y[:, 1:1 + r]
        ud = np.einsum("mij,mj->mi", L, p2d - fr["dP2"] * p1d[:, None]) + np.einsum("mij,mj->mi", dLp, w)
        vd = eps * (np.einsum("mij,mj->mi", Li, q2d) + np.einsum("mij,mj->mi", dLip, q2))
        return q1d, p1d, ud + vd, ud - vd

    def scaled_field(self, state):
        """d/dtau of (tau, theta, r, x, y), state shape (M, 2 + 2r)."""
        state = np.atleast_2d(np.asarray(state, dtype=float))
        r, eps, a = self.r, self.eps, self.alpha
        tau, theta, rr = state[:, 0], state[:, 1], state[:, 2]
        x, y = state[:, 3:3 + r], state[:, 3 + r:]
        q1d, p1d, xd, yd = self.xy_field(tau / eps, theta / (eps * a), rr, x, y)
        return np.concatenate([np.ones((len(state), 1)), (a * q1d)[:, None], (p1d / eps)[:, None],
                               xd / eps, yd / eps], axis=1)

    def normal_remainder(self, t, q1, p1, x, y, fr=None):
        """(R_x, R_y) = (x' - D x, y' + D y) in tau-units."""
        fr = fr or self.frame(p1)
        _, _, xd, yd = self.xy_field(t, q1, p1, x, y, fr)
        Dx = np.einsum("mij,mj->mi", fr["D"], x)
        Dy = np.einsum("mij,mj->mi", fr["D"], y)
        return xd / self.eps - Dx, yd / self.eps + Dy

    def slow_jacobian(self, t, q1, p1, x, y, h=1e-6):
        """d(theta', r')/d(tau, theta, r) by central differences (M, 2, 3), tau-units."""
        eps, a = self.eps, self.alpha
        base = np.stack([eps * np.asarray(t, float), eps * a * np.asarray(q1, float), np.asarray(p1, float)], 1)
        xy = np.concatenate([x, y], axis=1)
        cols = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fp = self.scaled_field(np.concatenate([base + e, xy], axis=1))[:, 1:3]
            fm = self.scaled_field(np.concatenate([base - e, xy], axis=1))[:, 1:3]
            cols.append((fp - fm) / (2 * h))
        return np.stack(cols, axis=-1)

    def chart_jacobian(self, Y, fr=None):
        """Jacobian of (q, p) -> (x, theta, r, y), shape (M, 2n, 2n); columns (q1, q2, p1, p2)."""
        r, eps = self.r, self.eps
        p1 = Y[:, 1 + r]
        fr = fr or self.frame(p1)
        L, Li, dL = fr["L"], fr["Li"], fr["dL"]
        dLi = -Li @ dL @ Li
        q2 = Y[:, 1:1 + r]
        w = Y[:, 2 + r:] - fr["P2"]
        M, n2 = len(Y), 2 + 2 * r
        J = np.zeros((M, n2, n2))
        common = -np.einsum("mij,mj->mi", L, fr["dP2"]) + np.einsum("mij,mj->mi", dL, w)
        extra = eps * np.einsum("mij,mj->mi", dLi, q2)
        # x rows
        J[:, :r, 1:1 + r] = eps * Li
        J[:, :r, 1 + r] = common + extra
        J[:, :r, 2 + r:] = L
        # theta, r rows
        J[:, r, 0] = eps * self.alpha
        J[:, r + 1, 1 + r] = 1.0
        # y rows
        J[:, r + 2:, 1:1 + r] = -eps * Li
        J[:, r + 2:, 1 + r] = common - extra
        J[:, r + 2:, 2 + r:] = L
        return J


@dataclass(eq=False)
class CylinderSolution:
    system: ScaledSystem
    xy: GraphFunction
    config: GraphConfig
    history: list = field(default_factory=list)
    delta: float = 0.2

    @property
    def epsilon(self):
        return self.system.eps

    @property
    def p_center(self):
        return float(self.system.spec.p0[0])

    def inner_mask(self, radius=None):
        return self.xy.inner_mask(self.p_center, self.config.inner * self.delta if radius is None else radius)

    def split(self, values):
        r = self.system.r
        return values[..., :r], values[..., r:]

    @cached_property
    def qp_H1(self) -> GraphFunction:
        """(q2, p2) of the graph in H1 coordinates at the grid nodes."""
        T, Q, P = self.xy.mesh()
        X, Y = self.split(self.xy.values.reshape(-1, 2 * self.system.r))
        Z = self.system.to_qp(Q.ravel(), P.ravel(), X, Y)
        r = self.system.r
        return self.xy.with_values(np.concatenate([Z[:, 1:1 + r], Z[:, 2 + r:]], axis=1), kind="qp_H1")

    @cached_property
    def qp_H(self) -> GraphFunction:
        return transfer_to_H(self)

    def xy_at(self, t, q1, p1):
        return self.split(self.xy(np.mod(t, 1.0), np.mod(q1, 1.0), p1))

    def on_graph_H1(self, t, q1, p1):
        X, Y = self.xy_at(t, q1, p1)
        return self.system.to_qp(q1, p1, X, Y)


def _nyquist_mask(N):
    k = np.fft.fftfreq(N, 1.0 / N)
    return (np.abs(k) != N / 2) if N % 2 == 0 else np.ones(N, bool)


def graph_solve(H1: NormalFormH1, red: ReductionData, config: GraphConfig = GraphConfig(),
                delta: float | None = None, warm: GraphFunction | None = None) -> CylinderSolution:
    """Jacobi iteration of the mode-wise Perron inversion; see the module docstring."""
    system = ScaledSystem(H1, red)
    delta = red.delta if delta is None else delta
    eps, r = system.eps, system.r
    c = float(system.spec.p0[0])
    xy = warm if warm is not None else GraphFunction.zeros(config.Nt, config.Nq, config.Np, 2 * r, c - delta, c + delta,
                                                      config.p_width)
    T, Q, P = xy.mesh()
    shape = T.shape
    M = T.size
    fr_nodes = system.frame(xy.p_nodes)
    pidx = np.broadcast_to(np.arange(config.Np), shape).ravel()
    fr = system.take(fr_nodes, pidx)
    Om = fr_nodes["Om"]
    lam, U = np.linalg.eigh(fr_nodes["D"])
    kt = np.fft.fftfreq(config.Nt, 1.0 / config.Nt)
    kq = np.fft.fftfreq(config.Nq, 1.0 / config.Nq)
    div = TWO_PI * 1j * (kt[:, None, None, None] + kq[None, :, None, None] * Om[None, None, :, None])
    keep = (_nyquist_mask(config.Nt)[:, None] & _nyquist_mask(config.Nq)[None, :])[:, :, None, None]
    inv_x = np.where(keep, 1.0 / (div - eps * lam[None, None]), 0.0)
    inv_y = np.where(keep, 1.0 / (div + eps * lam[None, None]), 0.0)
    Dp = fd_matrix(xy.p_nodes, 1, xy.p_width + 1)
    k_q = (TWO_PI * 1j * kq * _nyquist_mask(config.Nq))[None, :, None, None]

    def transport_terms(V, q1d, p1d):
        dq = np.real(np.fft.ifft(np.fft.fft(V, axis=1) * k_q, axis=1))
        dp = np.einsum("ij,abjd->abid", Dp, V)
        return (q1d - Om[None, None, :])[..., None] * dq + p1d[..., None] * dp

    def invert(F, inv):
        Ft = np.einsum("pji,abpj->abpi", U, F)
        Vt = np.real(np.fft.ifft2(np.fft.fft2(Ft, axes=(0, 1)) * inv, axes=(0, 1)))
        return np.einsum("pij,abpj->abpi", U, Vt)

    X = xy.values[..., :r].copy()
    Yv = xy.values[..., r:].copy()
    history = []
    stall = 0
    D4 = fr_nodes["D"][None, None]
    for sweep in range(config.max_sweeps):
        q1d, p1d, xd, yd = system.xy_field(T.ravel(), Q.ravel(), P.ravel(), X.reshape(M, r), Yv.reshape(M, r), fr)
        q1d, p1d = q1d.reshape(shape), p1d.reshape(shape)
        Fx = xd.reshape(shape + (r,)) - eps * np.einsum("abpij,abpj->abpi", D4, X) - transport_terms(X, q1d, p1d)
        Fy = yd.reshape(shape + (r,)) + eps * np.einsum("abpij,abpj->abpi", D4, Yv) - transport_terms(Yv, q1d, p1d)
        Xn, Yn = invert(Fx, inv_x), invert(Fy, inv_y)
        upd = float(max(np.max(np.abs(Xn - X)), np.max(np.abs(Yn - Yv))))
        X, Yv = Xn, Yn
        history.append(upd)
        _check_domain(system, X, Yv, fr, delta, config.margin)
        if upd < config.tol_graph:
            break
        stall = stall + 1 if len(history) > 1 and upd >= history[-2] else 0
        if stall >= config.stall_sweeps:
            rate = history[-1] / history[-1 - config.stall_sweeps]
            raise ContractionError(f"graph iteration stopped contracting (rate {rate:.3g} over "
                                   f"{config.stall_sweeps} sweeps, update {upd:.3g})")
    else:
        raise ContractionError(f"no convergence in {config.max_sweeps} sweeps (update {history[-1]:.3g})")
    out = xy.with_values(np.concatenate([X, Yv], axis=-1), kind="xy", epsilon=eps, delta=delta)
    return CylinderSolution(system=system, xy=out, config=config, history=history, delta=delta)


def _check_domain(system, X, Y, fr, delta, margin):
    r, eps = system.r, system.eps
    Xf, Yf = X.reshape(-1, r), Y.reshape(-1, r)
    q2 = np.einsum("mij,mj->mi", fr["L"], Xf - Yf) / (2 * eps)
    w = 0.5 * np.einsum("mij,mj->mi", fr["Li"], Xf + Yf)
    q2max = float(np.max(np.linalg.norm(q2, axis=1)))
    wmax = float(np.max(np.linalg.norm(w, axis=1)))
    if not np.isfinite(q2max) or q2max > margin * np.sqrt(delta) or wmax > margin * eps:
        raise DomainError(f"graph left the coincidence domain (|q2| = {q2max:.3g} vs {margin}*sqrt(delta), "
                          f"|p2 - P2| = {wmax:.3g} vs {margin}*eps)")
    return q2max, wmax


def domain_margins(sol: CylinderSolution):
    X, Y = sol.split(sol.xy.values)
    P = sol.xy.mesh()[2]
    fr = sol.system.frame(P.ravel())
    r, eps = sol.system.r, sol.epsilon
    q2 = np.einsum("mij,mj->mi", fr["L"], (X - Y).reshape(-1, r)) / (2 * eps)
    w = 0.5 * np.einsum("mij,mj->mi", fr["Li"], (X + Y).reshape(-1, r))
    return float(np.max(np.linalg.norm(q2, axis=1)) / np.sqrt(sol.delta)), float(np.max(np.linalg.norm(w, axis=1)) / eps)


# transfer to the original Hamiltonian -----------------------------------------------

def transfer_to_H(sol: CylinderSolution) -> GraphFunction:
    """Apply psi^eps to the H1 graph and resample over the p1 nodes (one Gauss-Newton pass)."""
    system = sol.system
    H1 = system.H1
    eps2 = sol.epsilon**2
    r = system.r
    T, Q, P = sol.xy.mesh()
    t, q1, p_target = T.ravel(), Q.ravel(), P.ravel()

    def image_p1(s):
        Z = sol.on_graph_H1(t, q1, s)
        _, gq, _, _ = H1.f_derivs(t, Z[:, :1 + r])
        return s + eps2 * gq[:, 0], Z, gq

    s = p_target.copy()
    img, _, _ = image_p1(s)
    s = s - (img - p_target)
    # one Gauss-Newton correction with a finite-difference slope
    h = 1e-6
    img, _, _ = image_p1(s)
    slope = (image_p1(s + h)[0] - image_p1(s - h)[0]) / (2 * h)
    s = s - (img - p_target) / slope
    img, Z, gq = image_p1(s)
    q2 = Z[:, 1:1 + r]
    p2 = Z[:, 2 + r:] + eps2 * gq[:, 1:]
    out = sol.xy.with_values(np.concatenate([q2, p2], axis=1), kind="qp_H",
                             resample_error=float(np.max(np.abs(img - p_target))))
    return out


# certificates --------------------------------------------------------------------

def invariance_residual(sol: CylinderSolution, h_step: float = 0.1, inner_only: bool = True) -> float:
    """Max (x, y)-distance between the time-h_step H1-image of graph nodes and the graph."""
    system = sol.system
    T, Q, P = sol.xy.mesh()
    mask = sol.inner_mask() if inner_only else np.ones(T.shape, bool)
    t, q1, p1 = T[mask], Q[mask], P[mask]
    X, Y = sol.split(sol.xy.values[mask])
    Z0 = system.to_qp(q1, p1, X, Y)
    Z1, _, _ = propagate(system.H1, Z0, t, t + h_step, sol.config.step)
    q1n, p1n, xn, yn = system.from_qp(Z1)
    Xg, Yg = sol.xy_at(t + h_step, q1n, p1n)
    return float(max(np.max(np.linalg.norm(xn - Xg, axis=1)), np.max(np.linalg.norm(yn - Yg, axis=1))))


def c0_bound(sol: CylinderSolution, tol: float | None = None) -> CertificateReport:
    """||(X, Y)||_C0 <= (2/a) ||R||_C0, R the normal part of the perturbation on a tube around the graph."""
    system = sol.system
    r = system.r
    tol = sol.config.tol_graph if tol is None else tol
    rep = CertificateReport("c0_bound", True)
    with timed(rep):
        mask = sol.inner_mask()
        vals = sol.xy.values[mask]
        X, Y = sol.split(vals)
        xy_norm = float(max(np.max(np.linalg.norm(X, axis=1)), np.max(np.linalg.norm(Y, axis=1))))
        rho = 2.0 * xy_norm + tol
        T, Q, P = sol.xy.mesh()
        t, q1, p1 = T[mask], Q[mask], P[mask]
        fr = system.frame(p1)
        Rsup = 0.0
        offsets = [-rho, 0.0, rho]
        for sx in offsets:
            for sy in offsets:
                x = np.full((len(t), r), sx / np.sqrt(r))
                y = np.full((len(t), r), sy / np.sqrt(r))
                Rx, Ry = system.normal_remainder(t, q1, p1, x, y, fr)
                Rsup = max(Rsup, float(np.max(np.linalg.norm(Rx, axis=1))), float(np.max(np.linalg.norm(Ry, axis=1))))
        a = system.red.a
        rhs = 2.0 / a * Rsup
        rep.measured.update(xy_c0=xy_norm, R_c0=Rsup, a=a, rhs=rhs, tube_radius=rho)
        rep.thresholds.update(rule="||(X,Y)|| <= (2/a)||R||")
        rep.check(xy_norm <= rhs, f"||(X,Y)|| = {xy_norm:.3g} exceeds (2/a)||R|| = {rhs:.3g}")
    return rep


def graph_certificate(sol: CylinderSolution, h_step: float = 0.1, tol_residual: float = 1e-6) -> CertificateReport:
    rep = CertificateReport("graph", True, thresholds=dict(tol_residual=tol_residual, tol_graph=sol.config.tol_graph))
    with timed(rep):
        res = invariance_residual(sol, h_step)
        qm, wm = domain_margins(sol)
        rep.measured.update(invariance_residual=res, sweeps=len(sol.history), final_update=sol.history[-1],
                            update_history=sol.history, q2_over_sqrt_delta=qm, p2_offset_over_eps=wm,
                            xy_c0=sol.xy.c0_norm(sol.inner_mask()))
        rep.check(res <= tol_residual, f"invariance residual {res:.3g} above {tol_residual:g}")
        rep.check(qm <= sol.config.margin and wm <= sol.config.margin, "graph outside the coincidence-domain margin")
    return rep


def estimate_norms(sol: CylinderSolution, kappa: float = 0.1, inner_only: bool = True) -> CertificateReport:
    """C0/C1 norms of Q2^eps and P2^eps - P2 on the original-coordinates graph."""
    rep = CertificateReport("norms", True, thresholds=dict(kappa=kappa))
    with timed(rep):
        r = sol.system.r
        G = sol.qp_H
        P = G.mesh()[2]
        P2_0 = sol.system.avg.P2(P.reshape(-1, 1)).reshape(P.shape + (r,))
        Q2 = G.with_values(G.values[..., :r])
        dP2 = G.with_values(G.values[..., r:] - P2_0)
        mask = sol.inner_mask() if inner_only else None
        eps = sol.epsilon
        q2_c1 = Q2.c1_norm(mask)
        p2_c1 = dP2.c1_norm(mask)
        rep.measured.update(Q2_c0=Q2.c0_norm(mask), Q2_c1=q2_c1, eps_Q2_c1=eps * q2_c1,
                            P2_dev_c0=dP2.c0_norm(mask), P2_dev_c1=p2_c1,
                            resample_error=G.meta.get("resample_error", 0.0))
        rep.check(p2_c1 <= kappa, f"||P2^eps - P2||_C1 = {p2_c1:.3g} > kappa")
        rep.check(eps * q2_c1 <= kappa, f"eps ||Q2^eps||_C1 = {eps * q2_c1:.3g} > kappa")
    return rep


def _graph_seeds(sol, n, seed, spread):
    rng = np.random.default_rng(seed)
    q1 = rng.uniform(size=n)
    p1 = sol.p_center + spread * sol.delta * rng.uniform(-1, 1, size=n)
    return q1, p1


def hyperbolicity_rates(sol: CylinderSolution, n_orbits: int = 6, horizon: float | None = None, seed: int = 0,
                        gap_tol: float = 0.2) -> CertificateReport:
    """Finite-time exponents (QR method) in the scaled chart (x, theta, r, y) along on-graph orbits.

    The base orbit is put back on the graph after every unit of time, so the exponents
    describe the linearization along the cylinder rather than along a drifting orbit.
    """
    system = sol.system
    r, eps = system.r, sol.epsilon
    red = system.red
    rep = CertificateReport("hyperbolicity", True, thresholds=dict(relative_tol=gap_tol))
    with timed(rep):
        if horizon is None:
            horizon = float(np.ceil(20.0 / (eps * red.a)))
        nchunks = int(round(horizon))
        q1, p1 = _graph_seeds(sol, n_orbits, seed, 0.3)
        t = 0.0
        Z = sol.on_graph_H1(np.zeros(n_orbits), q1, p1)
        d = 2 + 2 * r
        Qb = np.broadcast_to(np.eye(d), (n_orbits, d, d)).copy()
        logs = np.zeros((n_orbits, d))
        Dev = []
        for _ in range(nchunks):
            S0 = system.chart_jacobian(Z)
            Z1, J, _ = propagate(system.H1, Z, t, t + 1.0, sol.config.step, tangent=True)
            S1 = system.chart_jacobian(Z1)
            Mx = S1 @ J @ np.linalg.inv(S0)
            Qn, Rn = np.linalg.qr(Mx @ Qb)
            sgn = np.sign(np.diagonal(Rn, axis1=1, axis2=2))
            Qb = Qn * sgn[:, None, :]
            logs += np.log(np.abs(np.diagonal(Rn, axis1=1, axis2=2)))
            t += 1.0
            q1n, p1n, _, _ = system.from_qp(Z1)
            Dev.append(np.max(np.abs(system.from_qp(Z1)[2] - sol.xy_at(np.full(n_orbits, t), q1n, p1n)[0])))
            Z = sol.on_graph_H1(np.full(n_orbits, t), q1n, p1n)
        lyap = logs / horizon  # t-units, ordered (x, theta, r, y) by the QR sweep
        normal_plus = lyap[:, :r]
        normal_minus = lyap[:, -r:]
        tangential = lyap[:, r:r + 2]
        Dvals = np.linalg.eigvalsh(system.frame(p1)["D"])
        expected = eps * np.mean(Dvals)
        # measured C1 bound of the slow field on the graph and a tube around it
        b_meas = slow_c1_bound(sol)
        a = red.a
        rep.measured.update(exponents=lyap, normal_plus=normal_plus, normal_minus=normal_minus,
                            tangential=tangential, expected_normal=expected, a=a, b_principal=red.b,
                            b=b_meas, eps_a=eps * a, eps_b=eps * b_meas, horizon=horizon,
                            max_reprojection=float(np.max(Dev)) if Dev else 0.0)
        rel_plus = np.max(np.abs(normal_plus - expected)) / expected
        rel_minus = np.max(np.abs(normal_minus + expected)) / expected
        tan_max = float(np.max(np.abs(tangential)))
        rep.measured.update(rel_err_plus=rel_plus, rel_err_minus=rel_minus, tangential_max=tan_max)
        rep.check(rel_plus <= gap_tol and rel_minus <= gap_tol,
                  f"normal exponents off by {max(rel_plus, rel_minus):.2%} from +-eps spec(D)")
        rep.check(np.min(normal_plus) >= (1 - gap_tol) * eps * a, "expansion below 0.8 eps a")
        rep.check(np.max(normal_minus) <= -(1 - gap_tol) * eps * a, "contraction weaker than 0.8 eps a")
        rep.check(tan_max <= eps * b_meas, f"tangential exponent {tan_max:.3g} exceeds eps b = {eps * b_meas:.3g}")
        rep.check(a > b_meas, f"no spectral gap: a = {a:.3g} <= b = {b_meas:.3g}")
    return rep


def slow_c1_bound(sol: CylinderSolution, stride: int = 2) -> float:
    """sup of ||d(theta', r')/d(tau, theta, r)|| over graph nodes and the tube x, y in {-rho, 0, rho}."""
    system = sol.system
    r = system.r
    mask = sol.inner_mask()
    T, Q, P = sol.xy.mesh()
    sel = (slice(None, None, stride), slice(None, None, stride), slice(None))
    m = mask[sel]
    t, q1, p1 = T[sel][m], Q[sel][m], P[sel][m]
    X, Y = sol.split(sol.xy.values[sel][m])
    rho = 2.0 * sol.xy.c0_norm(mask) + sol.config.tol_graph
    best = 0.0
    for sx in (-rho, 0.0, rho):
        for sy in (-rho, 0.0, rho):
            Jz = system.slow_jacobian(t, q1, p1, X + sx, Y + sy)
            best = max(best, float(np.max(np.linalg.norm(Jz, ord=2, axis=(1, 2)))))
    return best


def containment_test(sol: CylinderSolution, n_orbits: int = 100, T_half: float | None = None, seed: int = 0,
                     tol_contain: float = 1e-3, n_near: int = 20) -> CertificateReport:
    """Seeds in D^eps (random, plus near-graph ones) flowed by H for [-T_half, T_half];
    survivors (orbits never leaving D^eps) must sit on the graph at mid-horizon."""
    system = sol.system
    spec = system.spec
    r, eps = system.r, sol.epsilon
    delta = sol.delta
    rep = CertificateReport("containment", True, thresholds=dict(tol_contain=tol_contain))
    with timed(rep):
        if T_half is None:
            T_half = 5.0 / eps
        T_half = float(np.round(T_half / sol.config.step) * sol.config.step)
        rng = np.random.default_rng(seed)
        c = sol.p_center
        t0 = rng.uniform(size=n_orbits + n_near)
        q1 = rng.uniform(size=n_orbits + n_near)
        p1 = c + delta * sol.config.inner * rng.uniform(-1, 1, size=n_orbits + n_near)
        q2 = np.sqrt(delta) * rng.uniform(-1, 1, size=(n_orbits, r))
        p2 = eps * rng.uniform(-1, 1, size=(n_orbits, r))
        G = sol.qp_H
        near = G(t0[n_orbits:], q1[n_orbits:], p1[n_orbits:])
        near += 1e-9 * rng.normal(size=near.shape)
        q2 = np.vstack([q2, near[:, :r]])
        p2 = np.vstack([p2, near[:, r:]])
        Z0 = np.concatenate([q1[:, None], q2, p1[:, None], p2], axis=1)
        lo = np.concatenate([[-np.inf], np.full(r, -np.sqrt(delta)), [c - delta], np.full(r, -eps)])
        hi = np.concatenate([[np.inf], np.full(r, np.sqrt(delta)), [c + delta], np.full(r, eps)])
        spec_eps = spec.with_epsilon(eps)
        _, _, esc_f = propagate(spec_eps, Z0, t0, t0 + T_half, sol.config.step, box=(lo, hi))
        _, _, esc_b = propagate(spec_eps, Z0, t0, t0 - T_half, sol.config.step, box=(lo, hi))
        survive = ~np.isfinite(esc_f) & ~np.isfinite(esc_b)
        dist = np.full(len(Z0), np.nan)
        if survive.any():
            g = G(t0[survive], q1[survive], p1[survive])
            dist[survive] = np.max(np.abs(np.concatenate([q2[survive], p2[survive]], axis=1) - g), axis=1)
        n_surv = int(survive.sum())
        maxd = float(np.nanmax(dist)) if n_surv else 0.0
        rep.measured.update(T_half=T_half, n_seeds=len(Z0), n_random=n_orbits, n_near_graph=n_near,
                            n_survivors=n_surv, n_random_survivors=int(survive[:n_orbits].sum()),
                            max_survivor_distance=maxd, vacuous=n_surv == 0)
        rep.check(maxd <= tol_contain, f"a surviving orbit is {maxd:.3g} from the graph")
        if n_surv == 0:
            rep.warn("no orbit stayed in the domain for the whole horizon; containment is vacuous")
    return rep


def escape_time_test(sol: CylinderSolution, fraction: float = 0.5, n: int = 8, seed: int = 0,
                     rel_tol: float = 0.5) -> CertificateReport:
    """Start at x = fraction * rho off the graph (y on the graph) and time the exit from |x| <= rho.

    The linear estimate is log(1/fraction) / (eps * lambda_D).
    """
    system = sol.system
    r, eps = system.r, sol.epsilon
    rep = CertificateReport("escape_time", True, thresholds=dict(rel_tol=rel_tol))
    with timed(rep):
        rho = min(max(10.0 * sol.xy.c0_norm(), 1e-3), 0.05 * eps)
        q1, p1 = _graph_seeds(sol, n, seed, 0.3)
        t0 = np.zeros(n)
        X, Y = sol.xy_at(t0, q1, p1)
        fr = system.frame(p1)
        lam, U = np.linalg.eigh(fr["D"])
        x0 = X + fraction * rho * U[:, :, 0]
        Z0 = system.to_qp(q1, p1, x0, Y, fr)
        expected = np.log(1.0 / fraction) / (eps * lam[:, 0])
        horizon = float(np.ceil(4 * np.max(expected)))
        step = sol.config.step
        nrec = int(round(horizon / 0.01))
        times = np.linspace(0, horizon, nrec + 1)
        Z = Z0
        esc = np.full(n, np.nan)
        for k in range(1, len(times)):
            Z, _, _ = propagate(system.H1, Z, times[k - 1], times[k], step)
            q1n, p1n, xn, _ = system.from_qp(Z)
            Xg, _ = sol.xy_at(np.full(n, times[k]), q1n, p1n)
            out = np.isnan(esc) & (np.linalg.norm(xn - Xg, axis=1) > rho)
            esc[out] = times[k]
            if not np.isnan(esc).any():
                break
        rel = np.abs(esc - expected) / expected
        rep.measured.update(escape_times=esc, expected=expected, rel_err=rel, box=rho)
        rep.check(np.all(np.isfinite(esc)) and np.max(rel) <= rel_tol,
                  f"escape time off by {np.nanmax(rel):.2%} from the linear estimate")
    return rep


# export / import ------------------------------------------------------------------

GRAPH_COLUMNS = ("t", "q1", "p1", "q2", "p2", "q2_h1", "p2_h1")


def export_graph(sol: CylinderSolution, directory, header_extra: dict | None = None):
    """graph.json (header) + graph.csv (one row per node; see GRAPH_COLUMNS, q2/p2 repeated per slow dof)."""
    os.makedirs(directory, exist_ok=True)
    r = sol.system.r
    T, Q, P = sol.xy.mesh()
    H, H1 = sol.qp_H.values, sol.qp_H1.values
    cols = [T.ravel(), Q.ravel(), P.ravel()]
    names = ["t", "q1", "p1"]
    for blk, tag in ((H, ""), (H1, "_h1")):
        for i in range(r):
            cols.append(blk[..., i].ravel())
            names.append(f"q2{tag}" if r == 1 else f"q2_{i}{tag}")
        for i in range(r):
            cols.append(blk[..., r + i].ravel())
            names.append(f"p2{tag}" if r == 1 else f"p2_{i}{tag}")
    data = np.stack(cols, axis=1)
    with open(os.path.join(directory, "graph.csv"), "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    header = dict(grid=dict(Nt=sol.config.Nt, Nq=sol.config.Nq, Np=sol.config.Np), epsilon=sol.epsilon,
                  delta=sol.delta, alpha=sol.system.alpha, p_lo=sol.xy.p_lo, p_hi=sol.xy.p_hi,
                  columns=names, config=asdict(sol.config), sweeps=len(sol.history), final_update=sol.history[-1])
    header.update(header_extra or {})
    from .report import _clean
    with open(os.path.join(directory, "graph.json"), "w") as fh:
        json.dump(_clean(header), fh, indent=2, sort_keys=True)
        fh.write("\n")


def import_graph(directory, H1: NormalFormH1, red: ReductionData) -> CylinderSolution:
    """Rebuild a CylinderSolution from graph.json/graph.csv (the H1 columns define X, Y)."""
    with open(os.path.join(directory, "graph.json")) as fh:
        header = json.load(fh)
    data = np.loadtxt(os.path.join(directory, "graph.csv"), delimiter=",", skiprows=1, ndmin=2)
    g = header["grid"]
    cfg = GraphConfig(**header["config"])
    system = ScaledSystem(H1, red)
    r = system.r
    shape = (g["Nt"], g["Nq"], g["Np"])
    h1 = data[:, 3 + 2 * r:3 + 4 * r]
    fr = system.frame(data[:, 2])
    u = np.einsum("mij,mj->mi", fr["L"], h1[:, r:] - fr["P2"])
    v = system.eps * np.einsum("mij,mj->mi", fr["Li"], h1[:, :r])
    xy = GraphFunction(np.concatenate([u + v, u - v], axis=1).reshape(shape + (2 * r,)),
                       header["p_lo"], header["p_hi"], dict(kind="xy"), cfg.p_width)
    sol = CylinderSolution(system=system, xy=xy, config=cfg, history=[header["final_update"]],
                           delta=header["delta"])
    sol.__dict__["qp_H"] = xy.with_values(data[:, 3:3 + 2 * r], kind="qp_H")
    return sol
