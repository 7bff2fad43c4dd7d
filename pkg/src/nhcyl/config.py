"""Scenario configuration: JSON schema, builtin scenarios and parameter validation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

import numpy as np

from .fourier import FourierSeries, PolyFourier, Polynomial
from .model import GOLDEN, HamiltonianSpec, pendulum_family, quadratic_h


class ConfigError(ValueError):
    """Invalid scenario; the message names the violated constraint."""


DEFAULT_LADDER = (0.1, 0.05, 0.025)

BUILTINS: Dict[str, Dict[str, Any]] = {
    "pendulum-cylinder": dict(model="pendulum", mu=0.3, nu=0.05),
    "pendulum-cylinder-symmetric": dict(model="pendulum", mu=0.3, nu=0.0),
    "unperturbed": dict(model="pendulum", mu=0.0, nu=0.0),
}


@dataclass(frozen=True)
class GridConfig:
    Nt: int = 32
    Nq: int = 32
    Np: int = 33
    p_width: int = 8


@dataclass(frozen=True)
class Tolerances:
    tol_graph: float = 1e-8
    tol_residual: float = 1e-6
    tol_contain: float = 1e-3
    tol_pullback: float = 1e-6
    step: float = 1e-3
    h_step: float = 0.1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "pendulum-cylinder"
    model: Dict[str, Any] = field(default_factory=lambda: dict(BUILTINS["pendulum-cylinder"]))
    epsilon_ladder: tuple = DEFAULT_LADDER
    delta: float = 0.2
    kappa: float = 0.1
    alpha: Optional[float] = None
    eta: float = 0.1
    min_torsion: float = 0.5
    grid: GridConfig = GridConfig()
    tolerances: Tolerances = Tolerances()
    remainder_ladder: tuple = (0.1, 0.05, 0.025, 0.0125)
    remainder_samples: int = 64
    hyperbolic_orbits: int = 6
    containment_orbits: int = 100
    containment_near: int = 20
    containment_T_half: tuple = (5.0, 1.0)  # in units of 1/eps
    refine: bool = False
    diophantine: Dict[str, float] = field(default_factory=lambda: dict(gamma=0.3, tau=1.0, Kmax=40))
    seed: int = 0

    def spec(self, epsilon: Optional[float] = None) -> HamiltonianSpec:
        eps = self.epsilon_ladder[0] if epsilon is None else epsilon
        return build_spec(self.model, eps, self.name)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["epsilon_ladder"] = list(self.epsilon_ladder)
        d["remainder_ladder"] = list(self.remainder_ladder)
        d["containment_T_half"] = list(self.containment_T_half)
        return d

    def with_overrides(self, epsilon: Optional[float] = None, seed: Optional[int] = None) -> "ScenarioConfig":
        cfg = self
        if epsilon is not None:
            cfg = replace(cfg, epsilon_ladder=(float(epsilon),))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        validate(cfg)
        return cfg


def _poly_from_json(n: int, terms) -> Polynomial:
    return Polynomial(n, {tuple(e): c for e, c in terms})


def build_spec(model: Dict[str, Any], epsilon: float, name: str = "") -> HamiltonianSpec:
    """HamiltonianSpec from the ``model`` block: a builtin family or explicit h and G."""
    kind = model.get("model", "explicit")
    if kind == "pendulum":
        return pendulum_family(mu=float(model.get("mu", 0.3)), nu=float(model.get("nu", 0.05)), epsilon=epsilon,
                               omega=float(model.get("omega", GOLDEN)), name=name)
    if kind != "explicit":
        raise ConfigError(f"unknown model kind {kind!r}")
    try:
        n, m, r = int(model["n"]), int(model["m"]), int(model["r"])
        p0 = np.asarray(model["p0"], dtype=float)
        omega = np.asarray(model["omega"], dtype=float)
        hs = model["h"]
        h = quadratic_h(n) if hs == "quadratic" else _poly_from_json(n, hs["terms"])
        dims = ("t",) + tuple(f"q{i}" for i in range(1, n + 1))
        parts: Dict[tuple, FourierSeries] = {}
        for mode in model["G"]:
            k = (int(mode.get("k_t", 0)),) + tuple(int(v) for v in mode["k_q"])
            e = tuple(int(v) for v in mode.get("p_exp", [0] * n))
            F = FourierSeries(dims, {k: (float(mode.get("cos", 0.0)), float(mode.get("sin", 0.0)))})
            parts[e] = parts[e] + F if e in parts else F
        G = PolyFourier(dims, p0, parts)
        return HamiltonianSpec(n=n, m=m, r=r, h=h, G=G, p0=p0, omega=omega, epsilon=epsilon, name=name)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model block: {exc}") from exc


def validate(cfg: ScenarioConfig, alpha: Optional[float] = None) -> ScenarioConfig:
    """Parameter ordering 0 < eps < delta < alpha < 1 for every ladder entry, plus sanity checks."""
    alpha = cfg.alpha if alpha is None else alpha
    if not cfg.epsilon_ladder:
        raise ConfigError("epsilon_ladder: must not be empty")
    for eps in cfg.epsilon_ladder:
        if not 0.0 < eps:
            raise ConfigError(f"constraint 0 < epsilon violated (epsilon = {eps})")
        if not eps < cfg.delta:
            raise ConfigError(f"constraint epsilon < delta violated (epsilon = {eps}, delta = {cfg.delta})")
    if alpha is not None:
        if not cfg.delta < alpha:
            raise ConfigError(f"constraint delta < alpha violated (delta = {cfg.delta}, alpha = {alpha})")
        if not alpha < 1.0:
            raise ConfigError(f"constraint alpha < 1 violated (alpha = {alpha})")
    elif not cfg.delta < 1.0:
        raise ConfigError(f"constraint delta < 1 violated (delta = {cfg.delta})")
    if len(set(cfg.epsilon_ladder)) != len(cfg.epsilon_ladder):
        raise ConfigError("epsilon_ladder: entries must be distinct")
    g = cfg.grid
    if min(g.Nt, g.Nq) < 4 or g.Np < g.p_width + 1 or g.p_width < 2:
        raise ConfigError("grid: need Nt, Nq >= 4, p_width >= 2 and Np > p_width")
    t = cfg.tolerances
    if min(t.tol_graph, t.tol_residual, t.tol_contain, t.tol_pullback, t.step, t.h_step) <= 0:
        raise ConfigError("tolerances: all entries must be positive")
    if cfg.kappa <= 0 or cfg.eta <= 0:
        raise ConfigError("kappa and eta must be positive")
    return cfg


_NESTED = {"grid": GridConfig, "tolerances": Tolerances}
_TUPLES = ("epsilon_ladder", "remainder_ladder", "containment_T_half")


def from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Build and validate a config.  ``scenario`` names a builtin whose model block is used
    unless ``model`` is given; every other key overrides a default."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    scenario = data.pop("scenario", None)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kw: Dict[str, Any] = {}
    if scenario is not None:
        if scenario not in BUILTINS:
            raise ConfigError(f"unknown builtin scenario {scenario!r} (have: {', '.join(sorted(BUILTINS))})")
        kw["name"] = scenario
        kw["model"] = dict(BUILTINS[scenario])
    for key, value in data.items():
        if key in _NESTED:
            try:
                value = _NESTED[key](**value)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        elif key in _TUPLES:
            value = tuple(float(v) for v in value)
        elif key == "model" and scenario is not None:
            value = {**kw["model"], **value}
        kw[key] = value
    cfg = ScenarioConfig(**kw)
    build_spec(cfg.model, cfg.epsilon_ladder[0] if cfg.epsilon_ladder else 0.0, cfg.name)
    return validate(cfg)


def builtin(name: str, **overrides) -> ScenarioConfig:
    return from_dict(dict(scenario=name, **overrides))


def load(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return from_dict(data)
