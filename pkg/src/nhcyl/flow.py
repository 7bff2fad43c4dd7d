"""Fixed-step RK4 trajectories and tangent flows of H, and of H1 by conjugation with psi^eps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .averaging import NormalFormH1
from .kernels import backend
from .model import HamiltonianSpec
from .report import CertificateReport, timed

System = Union[HamiltonianSpec, NormalFormH1]


class DomainEscape(RuntimeError):
    def __init__(self, message, escape_time):
        super().__init__(message)
        self.escape_time = escape_time


@dataclass(frozen=True)
class FlowConfig:
    step: float = 1e-3
    tangent: bool = False
    method: str = "rk4"

    def nsteps(self, horizon: float) -> int:
        k = abs(horizon) / self.step
        n = int(round(k))
        if abs(k - n) > 1e-9 * max(1.0, k):
            raise ValueError(f"horizon {horizon} is not a multiple of step {self.step}")
        return n


@dataclass
class TrajectorySample:
    times: np.ndarray
    states: np.ndarray  # (N, T, 2n)
    jacobians: Optional[np.ndarray]  # (N, 2n, 2n) at the final time
    energy: np.ndarray  # extended energy at (start, end), shape (N, 2)
    escape_time: np.ndarray  # (N,), nan where the orbit stayed in the box

    @property
    def final(self):
        return self.states[:, -1]

    @property
    def energy_drift(self):
        return np.abs(self.energy[:, 1] - self.energy[:, 0])


def _split_system(system: System):
    if isinstance(system, NormalFormH1):
        return system.spec, system
    return system, None


def _duration(t0, t1) -> float:
    dur = np.asarray(t1, dtype=float) - np.asarray(t0, dtype=float)
    if dur.size > 1 and np.ptp(dur) > 1e-12 * max(1.0, float(np.max(np.abs(dur)))):
        raise ValueError("all trajectories in a batch must share the same duration")
    return float(np.ravel(dur)[0])


def _run(spec, y0, t0, t1, step, tangent, box, record_every):
    dur = _duration(t0, t1)
    n = FlowConfig(step).nsteps(dur)
    h = np.sign(dur) * step if n else step
    t0 = np.asarray(t0, dtype=float)
    lo, hi = (None, None) if box is None else box
    y, jac, e, esc, rec = backend().rk4(spec.kernel_model, y0, t0, h, n, spec.epsilon**2, tangent, lo, hi,
                                         record_every)
    esc_t = np.where(esc >= 0, t0 + esc * h, np.nan)
    return y, jac, e, esc_t, rec, n, h


def propagate(system: System, y0, t0: float, t1: float, step: float = 1e-3, tangent: bool = False,
              box=None):
    """Batch flow from t0 to t1 (either direction).

    Returns (y1, jac or None, escape_time). For an H1 system the states are in H1
    coordinates and the tangent map is dpsi^-1(t1) dphi dpsi(t0).
    """
    spec, H1 = _split_system(system)
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    if H1 is not None:
        yH = H1.to_H(t0, y0)
    else:
        yH = y0
    y, jac, _, esc_t, _, _, _ = _run(spec, yH, t0, t1, step, tangent, box, 0)
    if H1 is not None:
        y1 = H1.from_H(t1, y)
        if tangent:
            J0 = H1.dpsi(t0, y0)
            J1 = H1.dpsi(t1, y1)
            J1inv = J1.copy()
            n = spec.n
            J1inv[:, n:, :n] *= -1.0
            jac = J1inv @ jac @ J0
        y = y1
    return y, jac, esc_t


def integrate(system: System, state0, t0: float, t1: float, config: FlowConfig = FlowConfig(),
              box=None, record_every: int = 1, strict: bool = False) -> TrajectorySample:
    """Trajectory sampled every ``record_every`` steps; extended energy recorded at both ends."""
    spec, H1 = _split_system(system)
    y0 = np.atleast_2d(np.asarray(state0, dtype=float))
    yH = H1.to_H(t0, y0) if H1 is not None else y0
    y, jac, e, esc_t, rec, n, h = _run(spec, yH, t0, t1, config.step, config.tangent, box, record_every)
    times = float(np.ravel(t0)[0]) + h * record_every * np.arange(rec.shape[1])
    model = spec.kernel_model
    from . import _pykernels as pk
    eps2 = spec.epsilon**2
    E0 = pk.hamiltonian(model, t0, yH, eps2)
    E1 = pk.hamiltonian(model, t0 + n * h, y, eps2) + e
    if H1 is not None:
        rec = np.stack([H1.from_H(tk, rec[:, k]) for k, tk in enumerate(times)], axis=1)
        if config.tangent:
            J0 = H1.dpsi(t0, y0)
            J1inv = H1.dpsi(times[-1], rec[:, -1])
            J1inv[:, spec.n:, :spec.n] *= -1.0
            jac = J1inv @ jac @ J0
    if strict and np.any(np.isfinite(esc_t)):
        raise DomainEscape(f"trajectory left the domain at t = {np.nanmin(esc_t):.6g}", esc_t)
    return TrajectorySample(times=times, states=rec, jacobians=jac, energy=np.stack([E0, E1], axis=1),
                            escape_time=esc_t)


def time_one_map(system: System, points, jacobian: bool = False, t0: float = 0.0, step: float = 1e-3):
    y, jac, _ = propagate(system, points, t0, t0 + 1.0, step, jacobian)
    return (y, jac) if jacobian else y


def energy_drift_certificate(system: System, y0, horizon: float = 1.0, step: float = 1e-3,
                             tol: float = 1e-10, t0: float = 0.0, min_step: float = 1e-5) -> CertificateReport:
    """Halve the step until the per-unit-time extended-energy drift is below tol."""
    rep = CertificateReport("energy_drift", True, thresholds=dict(tol_per_unit_time=tol))
    with timed(rep):
        drifts = []
        while True:
            s = integrate(system, y0, t0, t0 + horizon, FlowConfig(step), record_every=FlowConfig(step).nsteps(horizon))
            drift = float(np.max(s.energy_drift)) / abs(horizon)
            drifts.append((step, drift))
            if drift <= tol or step / 2 < min_step:
                break
            step /= 2
        rep.measured.update(step=step, drift_per_unit_time=drift, history=drifts)
        rep.check(drift <= tol, f"energy drift {drift:.3g} per unit time at step {step:g}")
    return rep
