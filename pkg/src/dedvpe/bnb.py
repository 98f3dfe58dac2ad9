"""LP-based branch-and-bound over the binary columns of a :class:`MilpInstance`.

The search stops once the relative gap ``(UB - LB) / max(|LB|, 1e-10)`` is
within ``rgap_target``; the lower bound in the denominator matches the way
the optimality gap of the dispatch problem is measured.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, BoundedSimplex
from .milp import MilpInstance, fixed_binary_bounds

log = logging.getLogger(__name__)

GAP_REACHED = "gap-reached"
OPTIMAL_STATUS = "optimal"
TIME_LIMIT = "time-limit"
NODE_LIMIT = "node-limit"
INFEASIBLE_STATUS = "infeasible"

BRANCHING_RULES = ("most-fractional", "pseudo-cost")
NODE_SELECTIONS = ("best-bound", "depth-first-plunge")


@dataclass
class SolverConfig:
    rgap_target: float = 0.0025
    time_limit: float = math.inf
    node_limit: int = 10**9
    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    branching_rule: str = "most-fractional"
    node_selection: str = "best-bound"
    seed: int = 0
    threads: int = 1
    heuristic_every: int = 1
    record_trace: bool = False
    trace_path: Optional[str] = None

    def __post_init__(self):
        if not self.rgap_target >= 0:
            raise ValueError("rgap_target must be >= 0")
        if not (self.feasibility_tol > 0 and self.integrality_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.branching_rule not in BRANCHING_RULES:
            raise ValueError(f"unknown branching rule {self.branching_rule!r}")
        if self.node_selection not in NODE_SELECTIONS:
            raise ValueError(f"unknown node selection {self.node_selection!r}")
        if self.time_limit <= 0 or self.node_limit < 1:
            raise ValueError("limits must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class BnbResult:
    status: str
    incumbent: Optional[np.ndarray]
    incumbent_obj: float
    best_bound: float
    achieved_rgap: float
    nodes_processed: int
    wall_time: float
    trace: list = field(default_factory=list, repr=False)


def relative_gap(ub: float, lb: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    return max(ub - lb, 0.0) / max(abs(lb), 1e-10)


@dataclass(eq=False)
class _Node:
    id: int
    parent: int
    depth: int
    bound: float
    changes: dict
    warm: Optional[np.ndarray] = None
    branch: Optional[tuple] = None  # (col, direction, frac, parent_obj)


class _Propagator:
    """Activity-based bound tightening over the model rows."""

    def __init__(self, milp: MilpInstance):
        A = milp.matrix
        self.indptr, self.indices, self.data = A.indptr, A.indices, A.data
        At = A.T.tocsr()
        self.col_rows = [At.indices[At.indptr[j]:At.indptr[j + 1]] for j in range(milp.num_cols)]
        self.row_lo = np.where(milp.senses == "<=", -math.inf, milp.rhs)
        self.row_hi = np.where(milp.senses == ">=", math.inf, milp.rhs)
        self.is_binary = milp.is_binary
        self.m = milp.num_rows

    def run(self, lo: np.ndarray, hi: np.ndarray, seeds, max_visits: Optional[int] = None):
        """Tighten ``lo``/``hi`` in place; returns the set of changed columns or
        ``None`` when the bounds are found infeasible."""
        changed = set()
        queue = []
        queued = np.zeros(self.m, dtype=bool)
        for j in seeds:
            for r in self.col_rows[j]:
                if not queued[r]:
                    queued[r] = True
                    queue.append(r)
        visits = 0
        max_visits = max_visits or 20 * self.m + 100
        head = 0
        while head < len(queue) and visits < max_visits:
            r = queue[head]
            head += 1
            queued[r] = False
            visits += 1
            tightened = self._row(r, lo, hi)
            if tightened is None:
                return None
            for j in tightened:
                changed.add(j)
                for r2 in self.col_rows[j]:
                    if not queued[r2]:
                        queued[r2] = True
                        queue.append(r2)
        return changed

    def _row(self, r, lo, hi):
        s, e = self.indptr[r], self.indptr[r + 1]
        cols = self.indices[s:e]
        vals = self.data[s:e]
        clo, chi = lo[cols], hi[cols]
        with np.errstate(invalid="ignore"):
            mins = np.where(vals > 0, vals * clo, vals * chi)
            maxs = np.where(vals > 0, vals * chi, vals * clo)
        min_inf = np.isinf(mins)
        max_inf = np.isinf(maxs)
        min_fin = mins[~min_inf].sum()
        max_fin = maxs[~max_inf].sum()
        n_min_inf = int(min_inf.sum())
        n_max_inf = int(max_inf.sum())
        rlo, rhi = self.row_lo[r], self.row_hi[r]
        if n_min_inf == 0 and min_fin > rhi + 1e-6 * max(1.0, abs(rhi)):
            return None
        if n_max_inf == 0 and max_fin < rlo - 1e-6 * max(1.0, abs(rlo)):
            return None
        out = []
        for k, j in enumerate(cols):
            a = vals[k]
            new_lo, new_hi = lo[j], hi[j]
            if rhi < math.inf and n_min_inf - int(min_inf[k]) == 0:
                resid = min_fin - (0.0 if min_inf[k] else mins[k])
                bound = (rhi - resid) / a
                if a > 0:
                    new_hi = min(new_hi, bound)
                else:
                    new_lo = max(new_lo, bound)
            if rlo > -math.inf and n_max_inf - int(max_inf[k]) == 0:
                resid = max_fin - (0.0 if max_inf[k] else maxs[k])
                bound = (rlo - resid) / a
                if a > 0:
                    new_lo = max(new_lo, bound)
                else:
                    new_hi = min(new_hi, bound)
            if self.is_binary[j]:
                new_lo = math.ceil(new_lo - 1e-6) if new_lo > lo[j] else lo[j]
                new_hi = math.floor(new_hi + 1e-6) if new_hi < hi[j] else hi[j]
            else:
                # keep a hair of slack so rounding never cuts off feasible points
                if new_lo > lo[j]:
                    new_lo -= 1e-9 * max(1.0, abs(new_lo))
                if new_hi < hi[j]:
                    new_hi += 1e-9 * max(1.0, abs(new_hi))
                scale = 1e-6 * max(1.0, abs(lo[j]) if math.isfinite(lo[j]) else 1.0,
                                   abs(hi[j]) if math.isfinite(hi[j]) else 1.0)
                if new_lo <= lo[j] + scale:
                    new_lo = lo[j]
                if new_hi >= hi[j] - scale:
                    new_hi = hi[j]
            if new_lo > new_hi:
                if new_lo - new_hi > 1e-6 * max(1.0, abs(new_lo)):
                    return None
                mid = 0.5 * (new_lo + new_hi)
                new_lo = new_hi = mid
            if new_lo != lo[j] or new_hi != hi[j]:
                lo[j], hi[j] = new_lo, new_hi
                out.append(int(j))
        return out


class _Search:
    def __init__(self, milp: MilpInstance, config: SolverConfig):
        self.milp = milp
        self.cfg = config
        self.engine = BoundedSimplex.from_milp(milp)
        self.prop = _Propagator(milp)
        self.binaries = np.nonzero(milp.is_binary)[0]
        self.root_lo = np.array(milp.lower, dtype=float)
        self.root_hi = np.array(milp.upper, dtype=float)
        self.ub = math.inf
        self.incumbent = None
        self.floor = math.inf  # lowest bound among nodes dropped by the gap test
        self.open = []
        self.seq = 0
        self.next_id = 0
        self.nodes = 0
        self.trace = []
        self.trace_fh = open(config.trace_path, "w") if config.trace_path else None
        n = milp.num_cols
        self.pc_sum = np.zeros((2, n))
        self.pc_cnt = np.zeros((2, n))
        self.abs_eps = 1e-9

    # -- bookkeeping ----------------------------------------------------------

    def emit(self, **event) -> None:
        event["incumbent"] = self.ub if math.isfinite(self.ub) else None
        if self.cfg.record_trace:
            self.trace.append(event)
        if self.trace_fh is not None:
            self.trace_fh.write(json.dumps(event) + "\n")

    def push(self, node: _Node) -> None:
        self.seq += 1
        # deeper nodes first among equal bounds keeps dives short-lived
        heapq.heappush(self.open, (node.bound, -node.depth, self.seq, node))

    def make_node(self, parent: Optional[_Node], bound, changes, warm=None, branch=None):
        node = _Node(self.next_id, -1 if parent is None else parent.id,
                     0 if parent is None else parent.depth + 1, bound, changes, warm, branch)
        self.next_id += 1
        return node

    def bounds_of(self, node: _Node):
        lo = self.root_lo.copy()
        hi = self.root_hi.copy()
        for j, (a, b) in node.changes.items():
            lo[j], hi[j] = a, b
        return lo, hi

    def prunable(self, bound: float) -> bool:
        return bound >= self.ub - self.abs_eps * max(1.0, abs(self.ub))

    def gap_prunable(self, bound: float) -> bool:
        return math.isfinite(self.ub) and \
            self.ub - bound <= self.cfg.rgap_target * max(abs(bound), 1e-10)

    # -- incumbents --------------------------------------------------------------

    def offer(self, x: np.ndarray, lo, hi) -> bool:
        """Try ``x`` as incumbent after snapping binaries; repair with an LP if needed."""
        x = x.copy()
        b = self.binaries
        x[b] = np.round(x[b])
        if self.milp.max_row_violation(x) > self.cfg.feasibility_tol:
            flo, fhi = lo.copy(), hi.copy()
            flo[b] = fhi[b] = x[b]
            self.engine.set_bounds(flo, fhi)
            sol = self.engine.solve()
            if sol.status != OPTIMAL:
                return False
            x = sol.x
            x[b] = np.round(x[b])
            if self.milp.max_row_violation(x) > self.cfg.feasibility_tol:
                return False
        obj = self.milp.objective_value(x)
        if obj < self.ub - self.abs_eps * max(1.0, abs(obj)):
            self.ub = obj
            self.incumbent = x
            kept = [it for it in self.open if not self.prunable(it[0])]
            if len(kept) != len(self.open):
                self.open = kept
                heapq.heapify(self.open)
            return True
        return False

    def round_segments(self, node: _Node, x, lo, hi, warm) -> bool:
        groups = self.milp.segment_groups
        if groups:
            choice = []
            rng = None
            for g in groups:
                p = x[g.power_col]
                allowed = [l for l, bc in enumerate(g.binary_cols) if hi[bc] > 0.5]
                if not allowed:
                    return False
                forced = [l for l in allowed if lo[g.binary_cols[l]] > 0.5]
                if forced:
                    choice.append(forced[0])
                    continue
                inside = [l for l in allowed if g.lows[l] - 1e-9 <= p <= g.highs[l] + 1e-9]
                if inside:
                    # at a shared breakpoint prefer the segment carrying the LP weight
                    choice.append(max(inside, key=lambda l: x[g.binary_cols[l]]))
                else:
                    choice.append(min(allowed, key=lambda l: min(abs(p - g.lows[l]),
                                                                 abs(p - g.highs[l]))))
            attempts = [choice]
            if len(groups) > 1:
                rng = np.random.default_rng([self.cfg.seed, node.id])
                alt = list(choice)
                for k in rng.choice(len(groups), size=max(1, len(groups) // 10), replace=False):
                    g = groups[k]
                    opts = [l for l in (alt[k] - 1, alt[k] + 1)
                            if 0 <= l < len(g.binary_cols) and hi[g.binary_cols[l]] > 0.5
                            and lo[g.binary_cols[alt[k]]] < 0.5]
                    if opts:
                        alt[k] = int(rng.choice(opts))
                attempts.append(alt)
            found = False
            for ch in attempts:
                flo, fhi = fixed_binary_bounds(self.milp, ch, lo, hi)
                if np.any(flo > fhi + 1e-9):
                    continue
                self.engine.set_bounds(flo, np.maximum(fhi, flo))
                sol = self.engine.solve(warm)
                if sol.status == OPTIMAL and self.offer(sol.x, flo, np.maximum(fhi, flo)):
                    found = True
                if found:
                    break
            return found
        b = self.binaries
        flo, fhi = lo.copy(), hi.copy()
        flo[b] = fhi[b] = np.clip(np.round(x[b]), lo[b], hi[b])
        self.engine.set_bounds(flo, fhi)
        sol = self.engine.solve(warm)
        return sol.status == OPTIMAL and self.offer(sol.x, flo, fhi)

    # -- branching ----------------------------------------------------------------

    def choose(self, x: np.ndarray, frac_cols: np.ndarray) -> int:
        f = x[frac_cols] - np.floor(x[frac_cols])
        if self.cfg.branching_rule == "pseudo-cost":
            known = self.pc_cnt > 0
            avg = [self.pc_sum[d][known[d]].sum() / max(known[d].sum(), 1) if known[d].any()
                   else 1.0 for d in (0, 1)]
            est = []
            for d, width in ((0, f), (1, 1.0 - f)):
                cnt = self.pc_cnt[d][frac_cols]
                unit = np.where(cnt > 0, self.pc_sum[d][frac_cols] / np.maximum(cnt, 1), avg[d])
                est.append(np.maximum(unit * width, 1e-6))
            score = est[0] * est[1]
        else:
            score = np.minimum(f, 1.0 - f)
        best = score.max()
        ties = frac_cols[score >= best - 1e-12 * max(1.0, abs(best))]
        return int(ties.min())

    def update_pseudo(self, node: _Node, obj: float) -> None:
        if node.branch is None:
            return
        col, direction, frac, parent_obj = node.branch
        width = frac if direction == 0 else 1.0 - frac
        if width > 1e-9 and math.isfinite(obj):
            self.pc_sum[direction, col] += max(obj - parent_obj, 0.0) / width
            self.pc_cnt[direction, col] += 1

    def children(self, node: _Node, lo, hi, x, col, obj, warm):
        frac = x[col] - math.floor(x[col])
        kids = []
        for direction in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if direction == 0:
                chi[col] = 0.0
            else:
                clo[col] = 1.0
            changed = self.prop.run(clo, chi, [col])
            if changed is None:
                continue
            changes = dict(node.changes)
            changes[col] = (clo[col], chi[col])
            for j in changed:
                changes[j] = (clo[j], chi[j])
            kids.append(self.make_node(node, max(obj, node.bound), changes, warm,
                                       (col, direction, frac, obj)))
        # plunge in the direction the LP leans
        if frac < 0.5:
            kids.sort(key=lambda k: k.branch[1])
        else:
            kids.sort(key=lambda k: -k.branch[1])
        return kids

    # -- main loop ----------------------------------------------------------------------

    def run(self) -> BnbResult:
        cfg = self.cfg
        start = time.perf_counter()
        if cfg.threads > 1:
            log.warning("parallel node processing is not available; running single-threaded")
        lo, hi = self.root_lo.copy(), self.root_hi.copy()
        changed = self.prop.run(lo, hi, range(self.milp.num_cols))
        status = None
        if changed is None:
            status = INFEASIBLE_STATUS
        else:
            root = self.make_node(None, -math.inf, {j: (lo[j], hi[j]) for j in changed})
            self.push(root)
        plunge = None
        while status is None:
            lb = self.global_bound(plunge)
            if math.isfinite(self.ub) and relative_gap(self.ub, lb) <= cfg.rgap_target:
                break
            if plunge is None and not self.open:
                break
            if time.perf_counter() - start > cfg.time_limit:
                status = TIME_LIMIT
                break
            if self.nodes >= cfg.node_limit:
                status = NODE_LIMIT
                break
            if plunge is not None:
                node, plunge = plunge, None
            else:
                node = heapq.heappop(self.open)[3]
            if self.prunable(node.bound):
                self.emit(node=node.id, parent=node.parent, bound=node.bound,
                          decision="fathom-bound", global_bound=self.global_bound(None))
                continue
            if self.gap_prunable(node.bound):
                self.floor = min(self.floor, node.bound)
                self.emit(node=node.id, parent=node.parent, bound=node.bound,
                          decision="gap-prune", global_bound=self.global_bound(None))
                continue
            plunge = self.process(node)
        wall = time.perf_counter() - start
        if self.trace_fh is not None:
            self.trace_fh.close()
        lb = self.global_bound(plunge)
        if status is None:
            if self.incumbent is None:
                status = INFEASIBLE_STATUS
            else:
                status = OPTIMAL_STATUS if relative_gap(self.ub, lb) <= 1e-9 else GAP_REACHED
        if self.incumbent is None:
            return BnbResult(status, None, math.inf, lb if status != INFEASIBLE_STATUS
                             else math.inf, math.inf, self.nodes, wall, self.trace)
        return BnbResult(status, self.incumbent, self.ub, lb, relative_gap(self.ub, lb),
                         self.nodes, wall, self.trace)

    def global_bound(self, pending: Optional[_Node]) -> float:
        candidates = [self.floor, self.ub]
        if self.open:
            candidates.append(self.open[0][0])
        if pending is not None:
            candidates.append(pending.bound)
        # the heap keeps the smallest open bound at open[0]
        return min(candidates)

    def process(self, node: _Node) -> Optional[_Node]:
        cfg = self.cfg
        self.nodes += 1
        lo, hi = self.bounds_of(node)
        self.engine.set_bounds(lo, hi)
        sol = self.engine.solve(node.warm)
        if sol.status not in (OPTIMAL, INFEASIBLE):
            sol = self.engine.solve(None)
        if sol.status == INFEASIBLE:
            self.emit(node=node.id, parent=node.parent, bound=node.bound,
                      decision="fathom-infeasible", global_bound=self.global_bound(None))
            return None
        if sol.status != OPTIMAL:
            # cannot certify this subtree; keep its bound in the global bound
            self.floor = min(self.floor, node.bound)
            log.warning("LP at node %d ended with %s", node.id, sol.status)
            self.emit(node=node.id, parent=node.parent, bound=node.bound,
                      decision=f"lp-{sol.status}", global_bound=self.global_bound(None))
            return None
        obj = max(sol.objective, node.bound)
        self.update_pseudo(node, sol.objective)
        warm = sol.basis
        x = sol.x
        if self.prunable(obj):
            self.emit(node=node.id, parent=node.parent, bound=obj, decision="fathom-bound",
                      global_bound=self.global_bound(None))
            return None
        b = self.binaries
        frac = b[np.abs(x[b] - np.round(x[b])) > cfg.integrality_tol]
        if frac.size == 0:
            self.offer(x, lo, hi)
            self.emit(node=node.id, parent=node.parent, bound=obj, decision="integral",
                      global_bound=self.global_bound(None))
            return None
        if node.depth % cfg.heuristic_every == 0 or self.incumbent is None:
            self.round_segments(node, x, lo, hi, warm)
        if self.prunable(obj) or self.gap_prunable(obj):
            if not self.prunable(obj):
                self.floor = min(self.floor, obj)
            self.emit(node=node.id, parent=node.parent, bound=obj, decision="fathom-after-heuristic",
                      global_bound=self.global_bound(None))
            return None
        col = self.choose(x, frac)
        kids = self.children(node, lo, hi, x, col, obj, warm)
        plunge = None
        dive = cfg.node_selection == "depth-first-plunge" or self.incumbent is None
        if kids and dive:
            plunge = kids[0]
            kids = kids[1:]
        for k in kids:
            self.push(k)
        self.emit(node=node.id, parent=node.parent, bound=obj,
                  decision=f"branch {self.milp.col_names[col]}",
                  global_bound=self.global_bound(plunge))
        return plunge


def solve_milp(milp: MilpInstance, config: Optional[SolverConfig] = None) -> BnbResult:
    """Branch-and-bound to within ``config.rgap_target`` relative gap."""
    return _Search(milp, config or SolverConfig()).run()
