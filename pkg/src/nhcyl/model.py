"""Near-integrable Hamiltonians H = h(p) - eps^2 G(t,q,p), resonance geometry and averaged data."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .fourier import FourierSeries, PolyFourier, Polynomial
from .kernels import KernelModel, backend
from .report import CertificateReport, inputs_hash, timed

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

TOL_NEWTON = 1e-12
MAX_ITER_NEWTON = 50


class ConvergenceError(RuntimeError):
    """Newton iteration for P2 failed (usually: left the convexity domain of h)."""


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    n: int
    m: int
    r: int
    h: Polynomial
    G: PolyFourier
    p0: np.ndarray
    omega: np.ndarray
    epsilon: float = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float).reshape(-1))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(-1))
        if self.m + self.r != self.n:
            raise ValueError(f"m + r must equal n (got {self.m} + {self.r} != {self.n})")
        if self.m < 1 or self.r < 1:
            raise ValueError("need at least one fast and one slow angle")
        if self.p0.shape != (self.n,) or self.omega.shape != (self.m,):
            raise ValueError("p0 must have n entries and omega m entries")
        if self.h.nvars != self.n or self.G.n != self.n:
            raise ValueError("h and G must be functions of n momenta")
        if not np.allclose(self.G.p0, self.p0):
            raise ValueError("G must be expanded about p0")

    @property
    def dims(self):
        return self.G.dims

    @property
    def q2_dims(self):
        return self.dims[1 + self.m:]

    def with_epsilon(self, epsilon: float) -> "HamiltonianSpec":
        return replace(self, epsilon=float(epsilon))

    @cached_property
    def kernel_model(self) -> KernelModel:
        gk, ga, gb, ge = self.G.flat_terms()
        return KernelModel(
            n=self.n,
            hc=np.ascontiguousarray(self.h.coefs, dtype=float),
            he=np.ascontiguousarray(self.h.exps, dtype=np.int32).reshape(-1, self.n),
            gk=gk,
            ga=ga,
            gb=gb,
            ge=ge,
            p0=self.p0.copy(),
        )

    def hamiltonian(self, t, q, p):
        t, q, p = np.broadcast_arrays(np.asarray(t, float)[..., None], np.asarray(q, float), np.asarray(p, float))
        return self.h.value(p) - self.epsilon**2 * self.G(t[..., 0], q, p)

    def vector_field(self, t, y, jacobian: bool = False):
        """(qdot, pdot) stacked, for states y of shape (N, 2n)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        dy, jac, _ = backend().field(self.kernel_model, t, y, self.epsilon**2, jacobian)
        return (dy, jac) if jacobian else dy


def average_potential(spec: HamiltonianSpec) -> FourierSeries:
    """(t, q1)-average of G(., ., q2, p0): the k_t = 0, k_q1 = 0 modes."""
    G0 = spec.G.at_p0()
    return G0.average(range(1 + spec.m))


def _solve_p2_batch(spec: HamiltonianSpec, p1, tol=TOL_NEWTON, max_iter=MAX_ITER_NEWTON):
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    m = spec.m
    p2 = np.tile(spec.p0[m:], (len(p1), 1))
    for it in range(max_iter + 1):
        p = np.concatenate([p1, p2], axis=1)
        g = spec.h.gradient(p)[:, m:]
        res = np.max(np.linalg.norm(g, axis=1)) if len(g) else 0.0
        if res <= tol:
            return p2, it, res
        if it == max_iter:
            break
        H22 = spec.h.hessian(p)[:, m:, m:]
        if np.min(np.linalg.eigvalsh(H22)) <= 0:
            raise ConvergenceError("d2h/dp2^2 lost positive definiteness along the Newton path")
        p2 = p2 - np.linalg.solve(H22, g[..., None])[..., 0]
        if not np.all(np.isfinite(p2)):
            break
    raise ConvergenceError(f"Newton for P2 did not converge in {max_iter} iterations (residual {res:.3g})")


def solve_P2(spec: HamiltonianSpec, p1, tol: float = TOL_NEWTON, max_iter: int = MAX_ITER_NEWTON):
    """Solve d_{p2} h(p1, p2) = 0 for p2 by Newton from p2 = p0's slow component.

    Accepts a single p1 (shape (m,)) or a batch (N, m).
    """
    p1 = np.asarray(p1, dtype=float)
    single = p1.ndim == 1
    p2, _, _ = _solve_p2_batch(spec, p1.reshape(-1, spec.m), tol, max_iter)
    return p2[0] if single else p2.reshape(p1.shape[:-1] + (spec.r,))


@dataclass(frozen=True, eq=False)
class AveragedData:
    """V, A = d^2V(0), and the resonant-cylinder functions of p1.

    All functions of p1 accept arrays with trailing dimension m.
    """

    spec: HamiltonianSpec
    V: FourierSeries
    A: np.ndarray

    def _flat(self, p1):
        p1 = np.asarray(p1, dtype=float)
        return p1.reshape(-1, self.spec.m), p1.shape[:-1]

    def P2(self, p1):
        return solve_P2(self.spec, p1)

    def _at(self, p1):
        P1, shape = self._flat(p1)
        p2 = solve_P2(self.spec, P1)
        p = np.concatenate([P1, p2], axis=1)
        return P1, p2, p, shape

    def B(self, p1):
        _, _, p, shape = self._at(p1)
        m = self.spec.m
        return self.spec.h.hessian(p)[:, m:, m:].reshape(shape + (self.spec.r, self.spec.r))

    def h0(self, p1):
        _, _, p, shape = self._at(p1)
        return self.spec.h.value(p).reshape(shape)

    def Omega0(self, p1):
        _, _, p, shape = self._at(p1)
        return self.spec.h.gradient(p)[:, : self.spec.m].reshape(shape + (self.spec.m,))

    def dP2(self, p1):
        """Jacobian of P2 by the implicit-function formula, shape (..., r, m)."""
        _, _, p, shape = self._at(p1)
        m = self.spec.m
        H = self.spec.h.hessian(p)
        J = -np.linalg.solve(H[:, m:, m:], H[:, m:, :m])
        return J.reshape(shape + (self.spec.r, m))

    def torsion(self, p1):
        """d Omega0 / d p1 = Hessian of h0 (Schur complement of d^2h), shape (..., m, m)."""
        _, _, p, shape = self._at(p1)
        m = self.spec.m
        H = self.spec.h.hessian(p)
        T = H[:, :m, :m] - H[:, :m, m:] @ np.linalg.solve(H[:, m:, m:], H[:, m:, :m])
        return T.reshape(shape + (m, m))


def averaged_data(spec: HamiltonianSpec) -> AveragedData:
    V = average_potential(spec)
    x0 = np.zeros(spec.r)
    A = np.array([[V.derivative(i).derivative(j)(x0) for j in range(spec.r)] for i in range(spec.r)])
    return AveragedData(spec=spec, V=V, A=0.5 * (A + A.T))


def ball_samples(center, radius, n_samples, seed=0):
    """Center plus uniform samples of the closed ball, deterministic in seed."""
    rng = np.random.default_rng(seed)
    d = len(center)
    u = rng.normal(size=(n_samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rad = radius * rng.uniform(size=(n_samples, 1)) ** (1.0 / d)
    return np.vstack([np.asarray(center, float)[None], np.asarray(center, float) + rad * u])


def check_hypotheses(spec: HamiltonianSpec, delta: float = 0.2, n_samples: int = 200, seed: int = 0,
                     tol_res: float = 1e-10, tol_crit: float = 1e-10) -> CertificateReport:
    """Convexity of h, resonance at p0, critical point and sign of d^2V(0), and B(p1) > 0."""
    rep = CertificateReport("check_hypotheses", True,
                            thresholds=dict(tol_res=tol_res, tol_crit=tol_crit, delta=delta),
                            inputs_hash=inputs_hash(dict(name=spec.name, delta=delta, n=n_samples, seed=seed)))
    with timed(rep):
        m = spec.m
        res = np.linalg.norm(spec.h.gradient(spec.p0) - np.concatenate([spec.omega, np.zeros(spec.r)]))
        rep.measured["resonance_residual"] = res
        rep.check(res <= tol_res, "resonance condition dh(p0) = (omega, 0) violated")

        ps = ball_samples(spec.p0, delta, n_samples, seed)
        hmin = float(np.min(np.linalg.eigvalsh(spec.h.hessian(ps))))
        rep.measured["hessian_min_eig"] = hmin
        convex = rep.check(hmin > 0, "Hessian not positive definite")

        avg = averaged_data(spec)
        dV0 = np.array([avg.V.derivative(i)(np.zeros(spec.r)) for i in range(spec.r)])
        rep.measured["grad_V0"] = float(np.linalg.norm(dV0))
        rep.check(np.linalg.norm(dV0) <= tol_crit, "V has no critical point at q2 = 0")
        eigA = np.linalg.eigvalsh(avg.A)
        rep.measured["A_eigenvalues"] = eigA
        rep.check(np.min(eigA) > 0, "A not positive definite")

        if convex:
            p1s = ball_samples(spec.p0[:m], delta, n_samples, seed + 1)
            try:
                bmin = float(np.min(np.linalg.eigvalsh(avg.B(p1s))))
                rep.measured["B_min_eig"] = bmin
                rep.check(bmin > 0, "B(p1) not positive definite on the working ball")
            except ConvergenceError as exc:
                rep.fail(f"P2 undefined on the working ball: {exc}")
    return rep


def diophantine_check(omega, gamma: float, tau: float, Kmax: int) -> CertificateReport:
    """Scan |k0 + k.omega| >= gamma / |k|^tau over 0 < |k|_1 <= Kmax, |k0| <= Kmax (1 + |omega|)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    m = len(omega)
    k0max = int(np.floor(Kmax * (1.0 + np.linalg.norm(omega))))
    rep = CertificateReport("diophantine_check", True, thresholds=dict(gamma=gamma, tau=tau, Kmax=Kmax),
                            inputs_hash=inputs_hash(dict(omega=omega, gamma=gamma, tau=tau, Kmax=Kmax)))
    best = (np.inf, None)
    raw = (np.inf, None)
    with timed(rep):
        for k in itertools.product(range(-Kmax, Kmax + 1), repeat=m):
            norm = sum(abs(v) for v in k)
            if norm == 0 or norm > Kmax:
                continue
            first = next(v for v in k if v != 0)
            if first < 0:
                continue
            kw = float(np.dot(k, omega))
            k0 = int(np.clip(-np.round(kw), -k0max, k0max))
            div = abs(k0 + kw)
            if div < raw[0]:
                raw = (div, (k0,) + k)
            normalized = div * norm**tau
            if normalized < best[0]:
                best = (normalized, (k0,) + k)
        rep.measured.update(smallest_normalized=best[0], argmin_normalized=best[1],
                            smallest_divisor=raw[0], argmin_divisor=raw[1])
        if best[0] < gamma:
            rep.fail(f"resonant mode (k0, k) = {best[1]} with |k0 + k.omega| |k|^tau = {best[0]:.3g} < gamma")
    return rep


# builtin examples -----------------------------------------------------------

def quadratic_h(n: int) -> Polynomial:
    return Polynomial(n, {tuple(2 if j == i else 0 for j in range(n)): 0.5 for i in range(n)})


def pendulum_family(mu: float = 0.3, nu: float = 0.05, epsilon: float = 0.05, omega: float = GOLDEN,
                    name: str = "") -> HamiltonianSpec:
    """n = 2, m = r = 1 pendulum-cylinder family with h = |p|^2/2, p0 = (omega, 0) and

        G = (1 - cos 2pi q2)(1 + mu cos 2pi t cos 2pi q1) + nu (1 + sin 2pi q2) cos 2pi(t - q1).

    The nu-term has zero (t, q1)-average, so V = 1 - cos 2pi q2 for every (mu, nu).
    """
    dims = ("t", "q1", "q2")
    one = FourierSeries.constant(dims, 1.0)
    cos_q2 = FourierSeries.cos(dims, (0, 0, 1))
    cos_t = FourierSeries.cos(dims, (1, 0, 0))
    cos_q1 = FourierSeries.cos(dims, (0, 1, 0))
    sin_q2 = FourierSeries.sin(dims, (0, 0, 1))
    G = (one - cos_q2) * (one + mu * cos_t * cos_q1)
    if nu:
        G = G + nu * (one + sin_q2) * FourierSeries.cos(dims, (1, -1, 0))
    p0 = np.array([omega, 0.0])
    return HamiltonianSpec(n=2, m=1, r=1, h=quadratic_h(2), G=PolyFourier.from_series(G, p0), p0=p0,
                           omega=np.array([omega]), epsilon=epsilon, name=name or f"pendulum(mu={mu},nu={nu})")


def sheared_h(c: float) -> Polynomial:
    """h = p1^2/2 + (p2 - c p1)^2/2, for which P2(p1) = c p1."""
    return Polynomial(2, {(2, 0): 0.5 + 0.5 * c * c, (1, 1): -c, (0, 2): 0.5})
