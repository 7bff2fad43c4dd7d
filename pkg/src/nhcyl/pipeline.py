"""End-to-end runner: check -> average -> solve -> certify -> sweep, with artifacts on disk.

Layout under the output directory::

    config.json
    check/{hypotheses,diophantine,linear_block}.json
    average/{homological.json, modes.csv}
    eps_<eps>/{graph.json, graph.csv}           (solve)
    eps_<eps>/certificates/<name>.json          (certify)
    summary.csv                                 (certify; one row per ladder eps)
    sweep/{remainder.csv, <name>.json}          (sweep; ladder-level fits)

Each stage reads only what earlier stages wrote, so ``certify`` re-validates a stored
graph without solving again.  Files carry no timestamps; wall times live only in the
certificate JSONs, never in CSV tables.
"""
from __future__ import annotations

import csv
import json
import os
from typing import Callable, Dict, List, Optional

import numpy as np

from .averaging import NormalFormH1, remainder_order_sweep
from .config import ConfigError, ScenarioConfig, validate
from .cylinder import (ContractionError, DomainError, GraphConfig, c0_bound, containment_test,
                       escape_time_test, estimate_norms, export_graph, graph_certificate, graph_solve,
                       hyperbolicity_rates, import_graph, invariance_residual)
from .flow import energy_drift_certificate
from .model import ConvergenceError, averaged_data, check_hypotheses, diophantine_check
from .reduction import linear_block_check, reduction_data
from .report import CertificateReport, _clean, inputs_hash, timed
from .restricted import (RestrictedMap, form_deviation_scaling, map_distance, p1dot_scaling,
                         restricted_form_check, section_invariance, section_samples, torsion_check)

STAGES = ("check", "average", "solve", "certify", "sweep")

SUMMARY_COLUMNS = ("epsilon", "invariance_residual", "xy_c0", "c0_rhs", "eps_Q2_c1", "P2_dev_c1",
                   "phi_dist", "min_torsion", "passed")

# summary column -> (certificate, measured key)
SUMMARY_SOURCES = {
    "invariance_residual": ("graph", "invariance_residual"),
    "xy_c0": ("c0_bound", "xy_c0"),
    "c0_rhs": ("c0_bound", "rhs"),
    "eps_Q2_c1": ("norms", "eps_Q2_c1"),
    "P2_dev_c1": ("norms", "P2_dev_c1"),
    "phi_dist": ("restricted_map", "sup_phi_dist"),
    "min_torsion": ("torsion", "min_eigenvalue"),
}

ZERO_FLOOR = 1e-12


class MissingArtifact(RuntimeError):
    """An upstream stage has not been run (or was run with another ladder)."""


def eps_tag(eps: float) -> str:
    return f"eps_{eps:.6g}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return f"{float(v):.17g}"


class Pipeline:
    def __init__(self, cfg: ScenarioConfig, out: str, strict: bool = False, log: Callable[[str], None] = print):
        self.cfg = cfg
        self.out = out
        self.strict = strict
        self.log = log
        self.reports: List[CertificateReport] = []

    # helpers ---------------------------------------------------------------------
    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)

    def _require(self, *parts) -> str:
        p = self.path(*parts)
        if not os.path.exists(p):
            raise MissingArtifact(f"missing upstream artifact {p}")
        return p

    def _save(self, rep: CertificateReport, *parts) -> CertificateReport:
        p = self.path(*parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        rep.to_json(p)
        self.reports.append(rep)
        self.log(f"{rep.line()}")
        return rep

    def ok(self, rep: CertificateReport) -> bool:
        return rep.passed_strict(self.strict)

    def _objects(self, eps: float):
        spec = self.cfg.spec(eps)
        avg = averaged_data(spec)
        red = reduction_data(avg, self.cfg.delta, self.cfg.alpha)
        return spec, avg, NormalFormH1(spec), red

    def graph_config(self, refine: int = 1) -> GraphConfig:
        g, t = self.cfg.grid, self.cfg.tolerances
        return GraphConfig(Nt=refine * g.Nt, Nq=refine * g.Nq, Np=refine * (g.Np - 1) + 1, tol_graph=t.tol_graph,
                           step=t.step, p_width=g.p_width)

    def write_config(self):
        os.makedirs(self.out, exist_ok=True)
        with open(self.path("config.json"), "w") as fh:
            json.dump(_clean(self.cfg.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")

    # stages ------------------------------------------------------------------------
    def check(self) -> bool:
        cfg = self.cfg
        self.write_config()
        spec = cfg.spec()
        hyp = self._save(check_hypotheses(spec, cfg.delta, seed=cfg.seed), "check", "hypotheses.json")
        dio = cfg.diophantine
        self._save(diophantine_check(spec.omega, dio["gamma"], dio["tau"], int(dio["Kmax"])), "check",
                   "diophantine.json")
        if not hyp.passed:
            return False
        avg = averaged_data(spec)
        red = reduction_data(avg, cfg.delta, cfg.alpha)
        validate(cfg, red.alpha)
        lb = linear_block_check(avg.A, avg.B(spec.p0[:spec.m]))
        lb.measured.update(a=red.a, b_principal=red.b, alpha=red.alpha, torsion_sup=red.torsion_sup)
        self._save(lb, "check", "linear_block.json")
        return all(self.ok(r) for r in self.reports)

    def average(self) -> bool:
        self._require("check", "hypotheses.json")
        cfg = self.cfg
        spec = cfg.spec()
        rep = CertificateReport("homological", True, thresholds=dict(tol=1e-12),
                                inputs_hash=inputs_hash(dict(name=cfg.name, model=cfg.model, seed=cfg.seed)))
        with timed(rep):
            hom = NormalFormH1(spec).hom
            rng = np.random.default_rng(cfg.seed)
            x = rng.uniform(size=(256, 1 + spec.n))
            res = float(np.max(np.abs(hom.residual(spec.omega, x))))
            table = hom.mode_table()
            rep.measured.update(residual=res, smallest_divisor=hom.smallest_divisor, n_modes=len(table))
            rep.check(res <= 1e-12, f"homological residual {res:.3g}")
        os.makedirs(self.path("average"), exist_ok=True)
        with open(self.path("average", "modes.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k_t"] + [f"k_q{i + 1}" for i in range(spec.n)] + ["rhs_cos", "rhs_sin", "divisor",
                                                                        "f_cos", "f_sin"])
            for k, a, b, d, fa, fb in table:
                w.writerow(list(k) + [_fmt(a), _fmt(b), _fmt(d), _fmt(fa), _fmt(fb)])
        self._save(rep, "average", "homological.json")
        return self.ok(rep)

    def solve(self) -> bool:
        self._require("average", "homological.json")
        ok = True
        for eps in self.cfg.epsilon_ladder:
            _, _, H1, red = self._objects(eps)
            rep = CertificateReport("solve", True, thresholds=dict(tol_graph=self.cfg.tolerances.tol_graph))
            with timed(rep):
                try:
                    sol = graph_solve(H1, red, self.graph_config())
                except (ContractionError, DomainError, ConvergenceError) as exc:
                    rep.fail(f"{type(exc).__name__}: {exc}")
                    sol = None
                if sol is not None:
                    rep.measured.update(sweeps=len(sol.history), final_update=sol.history[-1],
                                        update_history=sol.history, epsilon=eps)
                    export_graph(sol, self.path(eps_tag(eps)), dict(kappa=self.cfg.kappa))
            self._save(rep, eps_tag(eps), "solve.json")
            ok &= self.ok(rep)
        return ok

    def certify_one(self, eps: float) -> List[CertificateReport]:
        cfg, tol = self.cfg, self.cfg.tolerances
        d = eps_tag(eps)
        self._require(d, "graph.json")
        spec, avg, H1, red = self._objects(eps)
        sol = import_graph(self.path(d), H1, red)
        save = lambda rep: self._save(rep, d, "certificates", f"{rep.name}.json")  # noqa: E731
        out = [save(graph_certificate(sol, tol.h_step, tol.tol_residual)),
               save(c0_bound(sol)),
               save(estimate_norms(sol, cfg.kappa)),
               save(hyperbolicity_rates(sol, cfg.hyperbolic_orbits, seed=cfg.seed))]
        for i, th in enumerate(cfg.containment_T_half):
            rep = containment_test(sol, cfg.containment_orbits, th / eps, cfg.seed, tol.tol_contain,
                                   cfg.containment_near)
            rep.name = "containment" if i == 0 else f"containment_T{th:g}"
            out.append(save(rep))
        out.append(save(escape_time_test(sol, seed=cfg.seed)))
        Z = sol.qp_H(np.zeros(8), np.arange(8) / 8, np.full(8, sol.p_center))
        Z0 = np.concatenate([np.arange(8)[:, None] / 8, Z[:, :spec.r], np.full((8, 1), sol.p_center),
                             Z[:, spec.r:]], axis=1)
        out.append(save(energy_drift_certificate(spec, Z0, 1.0, tol.step)))
        rm = RestrictedMap(sol)
        out.append(save(section_invariance(rm, tol_contain=tol.tol_contain)))
        out.append(save(torsion_check(rm, min_eig=cfg.min_torsion, seed=cfg.seed)))
        out.append(save(restricted_form_check(rm, tol_pullback=tol.tol_pullback)))
        rep = CertificateReport("restricted_map", True, thresholds=dict(eta=cfg.eta))
        with timed(rep):
            q1, p1 = section_samples(sol.p_center, 0.5 * sol.delta)
            d0, d1 = map_distance(rm, q1, p1)
            rep.measured.update(sup_phi_dist=d0, sup_dphi_dist=d1, B0=0.5 * sol.delta, epsilon=eps)
            rep.check(d1 <= cfg.eta, f"|dPhi - dPhi0| = {d1:.3g} > eta")
        out.append(save(rep))
        return out

    def certify(self) -> bool:
        ok = True
        for eps in self.cfg.epsilon_ladder:
            self._require(eps_tag(eps), "graph.json")
        for eps in self.cfg.epsilon_ladder:
            reps = self.certify_one(eps)
            ok &= all(self.ok(r) for r in reps)
        self.write_summary()
        return ok

    def load_certificates(self, eps: float) -> Dict[str, CertificateReport]:
        d = self._require(eps_tag(eps), "certificates")
        return {name[:-5]: CertificateReport.load(os.path.join(d, name)) for name in sorted(os.listdir(d))
                if name.endswith(".json")}

    def load_solve_time(self, eps: float) -> float:
        return CertificateReport.load(self._require(eps_tag(eps), "solve.json")).wall_time

    def summary_rows(self):
        rows = []
        for eps in sorted(self.cfg.epsilon_ladder, reverse=True):
            certs = self.load_certificates(eps)
            row = {"epsilon": eps}
            for col, (cert, key) in SUMMARY_SOURCES.items():
                row[col] = certs[cert].measured[key]
            row["passed"] = all(c.passed_strict(self.strict) for c in certs.values())
            rows.append(row)
        return rows

    def write_summary(self):
        with open(self.path("summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for row in self.summary_rows():
                w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])

    def sweep(self) -> bool:
        cfg = self.cfg
        ladder = sorted(cfg.epsilon_ladder, reverse=True)
        certs = [self.load_certificates(e) for e in ladder]
        save = lambda rep: self._save(rep, "sweep", f"{rep.name}.json")  # noqa: E731
        out = []
        rem = remainder_order_sweep(cfg.spec(), cfg.remainder_ladder, cfg.remainder_samples, cfg.delta, cfg.seed)
        out.append(save(rem))
        with open(self.path("sweep", "remainder.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "sup_residual", "fitted_slope"])
            for e, s in zip(rem.measured["epsilons"], rem.measured["sup_residual"]):
                w.writerow([_fmt(e), _fmt(s), _fmt(rem.measured["fitted_slope"])])
        out.append(save(decreasing_along_ladder("phi_convergence", ladder,
                                                [c["restricted_map"].measured["sup_phi_dist"] for c in certs],
                                                finest_max=0.05)))
        out.append(save(decreasing_along_ladder("P2_dev_convergence", ladder,
                                                [c["norms"].measured["P2_dev_c0"] for c in certs])))
        out.append(save(p1dot_scaling([c["section_invariance"] for c in certs])))
        out.append(save(form_deviation_scaling([c["restricted_form"] for c in certs], ladder)))
        if cfg.refine:
            out.append(save(self.refinement(ladder)))
        with open(self.path("sweep", "ladder.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "phi_dist", "dphi_dist", "P2_dev_c0", "p1dot_over_eps2", "form_deviation"])
            for e, c in zip(ladder, certs):
                w.writerow([_fmt(e), _fmt(c["restricted_map"].measured["sup_phi_dist"]),
                            _fmt(c["restricted_map"].measured["sup_dphi_dist"]),
                            _fmt(c["norms"].measured["P2_dev_c0"]),
                            _fmt(c["section_invariance"].measured["max_p1dot_over_eps2"]),
                            _fmt(c["restricted_form"].measured["deviation_from_standard"])])
        return all(self.ok(r) for r in out)

    def refinement(self, ladder) -> CertificateReport:
        """Re-solve on a grid with every size doubled; the invariance residual must move < 2x."""
        rep = CertificateReport("grid_refinement", True, thresholds=dict(max_ratio=2.0))
        with timed(rep):
            base, fine, ratios = [], [], []
            for eps in ladder:
                _, _, H1, red = self._objects(eps)
                r0 = self.load_certificates(eps)["graph"].measured["invariance_residual"]
                sol = graph_solve(H1, red, self.graph_config(2))
                r1 = invariance_residual(sol, self.cfg.tolerances.h_step)
                base.append(r0)
                fine.append(r1)
                ratios.append(max(r0, r1) / min(r0, r1) if min(r0, r1) > 0 else (1.0 if r0 == r1 else np.inf))
            g = self.graph_config(2)
            rep.measured.update(epsilons=ladder, residual=base, residual_refined=fine, ratio=ratios,
                                refined_grid=dict(Nt=g.Nt, Nq=g.Nq, Np=g.Np))
            worst = max(ratios)
            small = all(max(a, b) <= ZERO_FLOOR for a, b in zip(base, fine))
            rep.check(worst < 2.0 or small, f"refinement changes the residual by {worst:.3g}x")
        return rep

    # driver ------------------------------------------------------------------------
    def run(self, stages=STAGES) -> bool:
        ok = True
        for name in stages:
            self.log(f"== {name}")
            ok &= getattr(self, name)()
            if name in ("check", "solve") and not ok:
                self.log(f"stopping after failed stage {name}")
                break
        return ok


def decreasing_along_ladder(name: str, epsilons, values, finest_max: Optional[float] = None) -> CertificateReport:
    """values strictly decreasing as eps decreases; sequences that vanish identically (below
    a 1e-12 floor) are reported as exact rather than decreasing."""
    rep = CertificateReport(name, True, measured=dict(epsilons=list(epsilons), values=list(values)),
                            thresholds=dict(finest_max=finest_max, zero_floor=ZERO_FLOOR))
    exact = all(v <= ZERO_FLOOR for v in values)
    rep.measured["exact"] = exact
    if not exact:
        rep.check(all(b < a for a, b in zip(values, values[1:])), "not strictly decreasing along the ladder")
    if finest_max is not None:
        rep.check(values[-1] <= finest_max, f"{values[-1]:.3g} above {finest_max} at the finest eps")
    return rep


def run_pipeline(cfg: ScenarioConfig, out: str, stage: Optional[str] = None, strict: bool = False,
                 log: Callable[[str], None] = print) -> int:
    """Run every stage up to and including ``stage``; returns the exit code (0, 2 or 3)."""
    stages = STAGES if stage is None else STAGES[:STAGES.index(stage) + 1]
    try:
        ok = Pipeline(cfg, out, strict, log).run(stages)
    except (ConfigError, MissingArtifact) as exc:
        log(f"error: {exc}")
        return 3
    return 0 if ok else 2


__all__ = ["Pipeline", "run_pipeline", "STAGES", "SUMMARY_COLUMNS", "MissingArtifact", "eps_tag",
           "decreasing_along_ladder"]
