"""End-to-end dispatch solve: linearise, build, branch-and-bound, evaluate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .bnb import BnbResult, SolverConfig, solve_milp
from .linearize import ErrorReport, PiecewiseCost, approx_error_report, build_piecewise
from .milp import MilpInstance, build_milp, extract_solution
from .model import Schedule, SystemInstance, optimality_gap, schedule_cost


@dataclass
class DispatchResult:
    instance: SystemInstance
    m_segments: int
    pwcs: list
    error_reports: list
    milp: MilpInstance
    result: BnbResult
    schedule: Optional[Schedule]
    true_cost: float
    ogap: Optional[float]

    @property
    def lower_approx_units(self) -> list:
        """Units whose linearised cost was certified to stay below the true cost."""
        return [p.unit_id for p, r in zip(self.pwcs, self.error_reports) if r.is_lower_approx]

    @property
    def all_lower_approx(self) -> bool:
        return all(r.is_lower_approx for r in self.error_reports)

    def metadata(self) -> dict:
        res = self.result
        return {
            "instance": self.instance.name or "unnamed",
            "status": res.status,
            "milp_objective": res.incumbent_obj if res.incumbent is not None else None,
            "best_bound": res.best_bound if math.isfinite(res.best_bound) else None,
            "rgap": res.achieved_rgap if math.isfinite(res.achieved_rgap) else None,
            "wall_time": res.wall_time,
            "nodes": res.nodes_processed,
        }


def linearize_all(instance: SystemInstance, m: int):
    pwcs = [build_piecewise(u, m) for u in instance.units]
    reports = [approx_error_report(u, p) for u, p in zip(instance.units, pwcs)]
    return pwcs, reports


def solve_dispatch(instance: SystemInstance, m: int = 2,
                   config: Optional[SolverConfig] = None) -> DispatchResult:
    pwcs, reports = linearize_all(instance, m)
    milp = build_milp(instance, pwcs)
    result = solve_milp(milp, config or SolverConfig())
    schedule = None
    cost = math.inf
    ogap = None
    if result.incumbent is not None:
        schedule = extract_solution(milp, result.incumbent, instance)
        cost = schedule_cost(instance, schedule)
        if result.best_bound > 0:
            ogap = optimality_gap(cost, result.best_bound)
    return DispatchResult(instance, m, pwcs, reports, milp, result, schedule, cost, ogap)


def piecewise_summary(pwc: PiecewiseCost, report: ErrorReport) -> dict:
    return {
        "unit": pwc.unit_id,
        "segments": pwc.num_segments,
        "m": pwc.m_param,
        "breakpoints": list(pwc.breakpoints),
        "slopes": list(pwc.slopes),
        "intercepts": list(pwc.intercepts),
        "max_under": report.max_under,
        "max_over": report.max_over,
        "is_lower_approx": report.is_lower_approx,
        "samples": report.n_samples,
    }
