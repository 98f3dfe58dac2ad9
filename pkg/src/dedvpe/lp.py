"""Bounded-variable revised simplex.

Every row ``a x (<=,=,>=) b`` gets a slack ``s = b - a x`` whose bounds encode
the sense, so the working problem is ``min c x  s.t.  [A I] (x, s) = b`` with
box bounds on every variable and the all-slack basis always available.

The engine keeps its basis between calls, which is what branch-and-bound
uses for warm starts: after bound changes the old basis is usually still
dual feasible and a few dual simplex pivots restore optimality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


class SingularBasis(Exception):
    pass


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray]
    objective: float
    dual_objective: float
    row_duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0
    basis: Optional[np.ndarray] = None


class _Factor:
    """LU factors of a basis plus a product-form eta file."""

    DENSE_CUTOFF = 300

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        m = len(basis)
        B = A[:, basis]
        self.m = m
        self.etas = []
        if m <= self.DENSE_CUTOFF:
            Bd = B.toarray()
            lu, piv = la.lu_factor(Bd, check_finite=False)
            diag = np.abs(np.diag(lu))
            if m and diag.min() <= 1e-11 * max(1.0, diag.max()):
                raise SingularBasis
            self._dense = (lu, piv)
            self._sparse = None
        else:
            try:
                self._sparse = spla.splu(B.tocsc(), permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularBasis from exc
            self._dense = None

    def _solve(self, v, trans):
        if self._dense is not None:
            return la.lu_solve(self._dense, v, trans=1 if trans else 0, check_finite=False)
        return self._sparse.solve(v, trans="T" if trans else "N")

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self._solve(np.asarray(v, dtype=float), False)
        for r, w in self.etas:
            xr = x[r] / w[r]
            x -= w * xr
            x[r] = xr
        return x

    def btran(self, v: np.ndarray) -> np.ndarray:
        v = np.array(v, dtype=float)
        for r, w in reversed(self.etas):
            v[r] = v[r] - (w @ v - v[r]) / w[r]
        return self._solve(v, True)

    def update(self, r: int, w: np.ndarray) -> None:
        self.etas.append((r, w.copy()))


class BoundedSimplex:
    """Simplex engine over a fixed constraint matrix with mutable bounds."""

    REFACTOR_EVERY = 100
    DEGENERATE_SWITCH = 60

    def __init__(self, A, rhs, senses, c, lower, upper, *,
                 primal_tol: float = 1e-9, dual_tol: float = 1e-9,
                 pivot_tol: float = 1e-9, max_iter: Optional[int] = None):
        A = sp.csr_matrix(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        self.A = A
        self.AT = A.T.tocsr()
        self.A_full = sp.hstack([A, sp.identity(m, format="csr")], format="csc")
        self.b = np.asarray(rhs, dtype=float)
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        slo = np.zeros(m)
        shi = np.zeros(m)
        senses = list(senses)
        for k, s in enumerate(senses):
            if s == "<=":
                shi[k] = math.inf
            elif s == ">=":
                slo[k] = -math.inf
            elif s != "=":
                raise ValueError(f"unknown row sense {s!r}")
        self.lo = np.concatenate([np.asarray(lower, dtype=float), slo])
        self.hi = np.concatenate([np.asarray(upper, dtype=float), shi])
        self.ptol, self.dtol, self.pivtol = primal_tol, dual_tol, pivot_tol
        self.max_iter = max_iter if max_iter is not None else max(20000, 30 * (m + n))
        self.status = None
        self.basis = None
        self.x = None
        self.factor = None
        self.iterations = 0

    @classmethod
    def from_milp(cls, milp, **kw) -> "BoundedSimplex":
        return cls(milp.matrix, milp.rhs, milp.senses, milp.objective,
                   milp.lower, milp.upper, **kw)

    # -- state ------------------------------------------------------------------

    def set_bounds(self, lower, upper) -> None:
        self.lo[:self.n] = lower
        self.hi[:self.n] = upper

    def _cold_status(self) -> np.ndarray:
        st = np.empty(self.n + self.m, dtype=np.int8)
        st[self.n:] = BASIC
        for j in range(self.n):
            st[j] = self._resting_status(j, AT_LOWER)
        return st

    def _resting_status(self, j, preferred):
        lo, hi = self.lo[j], self.hi[j]
        if preferred == AT_UPPER and hi < math.inf:
            return AT_UPPER
        if lo > -math.inf:
            return AT_LOWER
        if hi < math.inf:
            return AT_UPPER
        return AT_ZERO

    def _load(self, status: Optional[np.ndarray]) -> None:
        if status is None or int(np.sum(status == BASIC)) != self.m:
            status = self._cold_status()
        st = np.array(status, dtype=np.int8)
        nb = np.nonzero(st != BASIC)[0]
        for j in nb:
            s = st[j]
            if s == AT_LOWER and self.lo[j] == -math.inf or \
               s == AT_UPPER and self.hi[j] == math.inf or s == AT_ZERO:
                st[j] = self._resting_status(j, s)
        self.status = st
        self.basis = np.nonzero(st == BASIC)[0]
        self._refactor()

    def _nonbasic_values(self) -> None:
        x = self.x
        st = self.status
        x[st == AT_LOWER] = self.lo[st == AT_LOWER]
        x[st == AT_UPPER] = self.hi[st == AT_UPPER]
        x[st == AT_ZERO] = 0.0

    def _refactor(self) -> None:
        self.factor = _Factor(self.A_full, self.basis)
        if self.x is None or len(self.x) != self.n + self.m:
            self.x = np.zeros(self.n + self.m)
        self._nonbasic_values()
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.factor.ftran(self.b - self.A_full @ xn)

    def _duals(self, cost: np.ndarray):
        y = self.factor.btran(cost[self.basis])
        d = cost - np.concatenate([self.AT @ y, y])
        d[self.basis] = 0.0
        return y, d

    def _column(self, j: int) -> np.ndarray:
        col = self.A_full[:, j]
        v = np.zeros(self.m)
        v[col.indices] = col.data
        return v

    def _pivot(self, r: int, q: int, w: np.ndarray, leave_status: int) -> None:
        p = self.basis[r]
        self.status[p] = leave_status
        self.status[q] = BASIC
        self.basis[r] = q
        self.factor.update(r, w)
        if len(self.factor.etas) >= self.REFACTOR_EVERY:
            self._refactor()

    def _infeasibility(self) -> np.ndarray:
        xb = self.x[self.basis]
        return np.maximum(self.lo[self.basis] - xb, xb - self.hi[self.basis])

    # -- public -------------------------------------------------------------------

    def solve(self, warm_status: Optional[np.ndarray] = None) -> LpSolution:
        self.iterations = 0
        for attempt in range(3):
            try:
                self._load(warm_status if attempt == 0 else None)
                status = self._run()
                break
            except SingularBasis:
                log.debug("singular basis, restarting from the slack basis")
                warm_status = None
        else:
            status = ITERATION_LIMIT
        return self._result(status)

    def _run(self) -> str:
        self._flip_boxed()
        if np.all(self._infeasibility() <= self.ptol):
            return self._primal(phase=2)
        _, d = self._duals(self.c)
        if self._dual_feasible(d):
            status = self._dual()
            if status != OPTIMAL:
                return status
            return self._primal(phase=2)
        status = self._primal(phase=1)
        if status != OPTIMAL:
            return status
        return self._primal(phase=2)

    def _flip_boxed(self) -> None:
        """Put boxed nonbasics at the bound their reduced cost prefers."""
        _, d = self._duals(self.c)
        st = self.status
        boxed = np.isfinite(self.lo) & np.isfinite(self.hi) & (st != BASIC)
        to_up = boxed & (st == AT_LOWER) & (d < -self.dtol)
        to_lo = boxed & (st == AT_UPPER) & (d > self.dtol)
        if np.any(to_up) or np.any(to_lo):
            st[to_up] = AT_UPPER
            st[to_lo] = AT_LOWER
            self._refactor()

    def _dual_feasible(self, d: np.ndarray) -> bool:
        st = self.status
        fixed = self.lo == self.hi
        bad = ((st == AT_LOWER) & (d < -self.dtol)) | ((st == AT_UPPER) & (d > self.dtol)) \
            | ((st == AT_ZERO) & (np.abs(d) > self.dtol))
        return not np.any(bad & ~fixed)

    def _tick(self) -> None:
        self.iterations += 1
        if self.iterations > self.max_iter:
            raise _IterationLimit

    # -- primal simplex --------------------------------------------------------

    def _primal(self, phase: int) -> str:
        degenerate = 0
        try:
            while True:
                self._tick()
                if phase == 1:
                    xb = self.x[self.basis]
                    below = xb < self.lo[self.basis] - self.ptol
                    above = xb > self.hi[self.basis] + self.ptol
                    if not (below.any() or above.any()):
                        return OPTIMAL
                    cost = np.zeros(self.n + self.m)
                    cost[self.basis[below]] = -1.0
                    cost[self.basis[above]] = 1.0
                else:
                    cost = self.c
                _, d = self._duals(cost)
                bland = degenerate >= self.DEGENERATE_SWITCH
                q, direction = self._price(d, bland)
                if q < 0:
                    if phase == 1:
                        return INFEASIBLE
                    return OPTIMAL
                w = self.factor.ftran(self._column(q))
                theta, r, target = self._ratio(w, direction, phase, bland)
                span = self.hi[q] - self.lo[q]
                if r < 0 and not span < math.inf:
                    return UNBOUNDED
                if span < math.inf and (r < 0 or span <= theta):
                    # bound flip, basis unchanged
                    self.x[q] += direction * span
                    self.x[self.basis] -= direction * span * w
                    self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                    degenerate = 0
                    continue
                step = direction * theta
                self.x[q] += step
                self.x[self.basis] -= step * w
                p = self.basis[r]
                self.x[p] = target
                leave = AT_LOWER if target == self.lo[p] else AT_UPPER
                self._pivot(r, q, w, leave)
                degenerate = degenerate + 1 if theta <= 1e-12 else 0
        except _IterationLimit:
            return ITERATION_LIMIT

    def _price(self, d: np.ndarray, bland: bool):
        st = self.status
        movable = self.lo < self.hi
        gain = np.zeros_like(d)
        up = movable & (((st == AT_LOWER) | (st == AT_ZERO)) & (d < -self.dtol))
        down = movable & (((st == AT_UPPER) | (st == AT_ZERO)) & (d > self.dtol))
        gain[up] = -d[up]
        gain[down] = d[down]
        cand = np.nonzero(gain > 0)[0]
        if cand.size == 0:
            return -1, 0
        q = int(cand[0]) if bland else int(cand[np.argmax(gain[cand])])
        return q, (1 if up[q] else -1)

    def _ratio(self, w: np.ndarray, direction: int, phase: int, bland: bool):
        """Two-pass Harris ratio test; returns (step, row, target bound)."""
        move = -direction * w
        big = np.abs(w) > self.pivtol
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        target = np.full(self.m, np.nan)
        dec = big & (move < 0)
        inc = big & (move > 0)
        if phase == 1:
            above = xb > hi + self.ptol
            below = xb < lo - self.ptol
            target[dec & above] = hi[dec & above]
            sel = dec & ~above & ~below
            target[sel] = lo[sel]
            target[inc & below] = lo[inc & below]
            sel = inc & ~below & ~above
            target[sel] = hi[sel]
        else:
            target[dec] = lo[dec]
            target[inc] = hi[inc]
        ok = np.isfinite(target)
        if not ok.any():
            return math.inf, -1, math.nan
        idx = np.nonzero(ok)[0]
        dist = np.abs(xb[idx] - target[idx])
        rate = np.abs(move[idx])
        ratio = np.maximum(dist, 0.0) / rate
        if bland:
            best = ratio.min()
            ties = idx[ratio <= best + 1e-12]
            r = int(ties[np.argmin(self.basis[ties])])
            return float(max(best, 0.0)), r, float(target[r])
        limit = ((dist + self.ptol) / rate).min()
        cand = ratio <= limit
        k = np.nonzero(cand)[0][np.argmax(rate[cand])]
        r = int(idx[k])
        return float(max(ratio[k], 0.0)), r, float(target[r])

    # -- dual simplex ------------------------------------------------------------

    def _dual(self) -> str:
        _, d = self._duals(self.c)
        degenerate = 0
        try:
            while True:
                self._tick()
                infeas = self._infeasibility()
                bland = degenerate >= self.DEGENERATE_SWITCH
                cand = np.nonzero(infeas > self.ptol)[0]
                if cand.size == 0:
                    return OPTIMAL
                if bland:
                    r = int(cand[np.argmin(self.basis[cand])])
                else:
                    r = int(cand[np.argmax(infeas[cand])])
                p = self.basis[r]
                below = self.x[p] < self.lo[p]
                e = np.zeros(self.m)
                e[r] = 1.0
                rho = self.factor.btran(e)
                alpha = np.concatenate([self.AT @ rho, rho])
                q = self._dual_ratio(d, alpha, below, bland)
                if q < 0:
                    return INFEASIBLE
                w = self.factor.ftran(self._column(q))
                if abs(w[r]) <= self.pivtol:
                    self._refactor()
                    _, d = self._duals(self.c)
                    continue
                target = self.lo[p] if below else self.hi[p]
                dq = (self.x[p] - target) / w[r]
                self.x[q] += dq
                self.x[self.basis] -= dq * w
                self.x[p] = target
                theta_d = d[q] / alpha[q]
                d = d - theta_d * alpha
                degenerate = degenerate + 1 if abs(theta_d) <= 1e-12 else 0
                leave = AT_LOWER if below else AT_UPPER
                if self.lo[p] == self.hi[p]:
                    leave = AT_LOWER
                self._pivot(r, q, w, leave)
                if not self.factor.etas:
                    _, d = self._duals(self.c)
                d[self.basis] = 0.0
        except _IterationLimit:
            return ITERATION_LIMIT

    def _dual_ratio(self, d, alpha, below: bool, bland: bool) -> int:
        st = self.status
        movable = (st != BASIC) & (self.lo < self.hi)
        sign = -1.0 if below else 1.0  # required sign of alpha for at-lower entries
        big = np.abs(alpha) > self.pivtol
        at_lo = movable & big & (st == AT_LOWER) & (sign * alpha > 0)
        at_hi = movable & big & (st == AT_UPPER) & (sign * alpha < 0)
        free = movable & big & (st == AT_ZERO)
        elig = np.nonzero(at_lo | at_hi | free)[0]
        if elig.size == 0:
            return -1
        slack = np.where(st[elig] == AT_LOWER, d[elig],
                         np.where(st[elig] == AT_UPPER, -d[elig], np.abs(d[elig])))
        a = np.abs(alpha[elig])
        ratio = np.maximum(slack, 0.0) / a
        if bland:
            best = ratio.min()
            return int(elig[ratio <= best + 1e-12][0])
        limit = ((slack + self.dtol) / a).min()
        cand = ratio <= limit
        k = np.nonzero(cand)[0][np.argmax(a[cand])]
        return int(elig[k])

    # -- results ------------------------------------------------------------------

    def _result(self, status: str) -> LpSolution:
        if status != OPTIMAL:
            return LpSolution(status, None, math.nan, math.nan, iterations=self.iterations,
                              basis=None if self.status is None else self.status.copy())
        # recompute from a fresh factorisation to shed accumulated drift
        self._refactor()
        y, d = self._duals(self.c)
        x = self.x[:self.n].copy()
        obj = float(self.c[:self.n] @ x)
        return LpSolution(OPTIMAL, x, obj, self.dual_bound(y, d), y, d[:self.n],
                          self.iterations, self.status.copy())

    def dual_bound(self, y: np.ndarray, d: np.ndarray) -> float:
        """Lagrangian bound ``b y + sum_j min(d_j lo_j, d_j hi_j)``."""
        d = np.where(np.abs(d) <= self.dtol, 0.0, d)
        with np.errstate(invalid="ignore"):
            lo_term = np.where(d > 0, d * self.lo, 0.0)
            hi_term = np.where(d < 0, d * self.hi, 0.0)
        return float(self.b @ y + lo_term.sum() + hi_term.sum())


class _IterationLimit(Exception):
    pass


def solve_lp(milp, fixed_bounds=None, *, max_iter: Optional[int] = None) -> LpSolution:
    """Solve the LP relaxation of ``milp`` (integrality ignored).

    ``fixed_bounds`` overrides column bounds, either as a ``(lower, upper)``
    pair of arrays or as a mapping ``col -> (lower, upper)``.
    """
    lower = np.array(milp.lower, dtype=float)
    upper = np.array(milp.upper, dtype=float)
    if fixed_bounds is not None:
        if isinstance(fixed_bounds, dict):
            for j, (lo, hi) in fixed_bounds.items():
                lower[j], upper[j] = lo, hi
        else:
            lower = np.array(fixed_bounds[0], dtype=float)
            upper = np.array(fixed_bounds[1], dtype=float)
    if np.any(lower > upper):
        return LpSolution(INFEASIBLE, None, math.nan, math.nan)
    engine = BoundedSimplex(milp.matrix, milp.rhs, milp.senses, milp.objective,
                            lower, upper, max_iter=max_iter)
    return engine.solve()
