"""Brute-force references for testing the solver on tiny instances."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .bnb import INFEASIBLE_STATUS, OPTIMAL_STATUS, BnbResult
from .linearize import build_piecewise
from .lp import OPTIMAL, BoundedSimplex
from .milp import MilpInstance, fixed_binary_bounds
from .model import GeneratorUnit, ReserveProduct, SystemInstance


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class TinyLimits:
    max_assignments: int = 10**6


def _assignments(milp: MilpInstance):
    if milp.segment_groups:
        sizes = [len(g.binary_cols) for g in milp.segment_groups]
        return sizes, itertools.product(*(range(s) for s in sizes))
    k = int(milp.is_binary.sum())
    return [2] * k, itertools.product((0, 1), repeat=k)


def enumerate_solve(milp: MilpInstance, limits: TinyLimits = TinyLimits(), *,
                    instance: Optional[SystemInstance] = None,
                    m_segments: Optional[int] = None) -> BnbResult:
    """Exact optimum by solving one LP per complete segment assignment.

    Models built from a dispatch instance enumerate one segment per
    ``(unit, period)``; other models enumerate all 0/1 vectors of their
    binary columns.  Given a single-unit ``instance`` and the ``m_segments``
    it was linearised with, the optimum is also checked against an
    independent grid search.
    """
    sizes, combos = _assignments(milp)
    total = math.prod(sizes)
    if total > limits.max_assignments:
        raise OracleError(
            f"{total} assignments (product of segment counts {sizes}) exceeds the cap "
            f"of {limits.max_assignments}")
    engine = BoundedSimplex.from_milp(milp)
    binaries = np.nonzero(milp.is_binary)[0]
    best_obj, best_x = math.inf, None
    count = 0
    for combo in combos:
        count += 1
        if milp.segment_groups:
            lo, hi = fixed_binary_bounds(milp, combo)
        else:
            lo = np.array(milp.lower, dtype=float)
            hi = np.array(milp.upper, dtype=float)
            lo[binaries] = hi[binaries] = combo
        if np.any(lo > hi):
            continue
        engine.set_bounds(lo, hi)
        sol = engine.solve()
        if sol.status != OPTIMAL:
            continue
        x = sol.x
        viol = milp.max_row_violation(x)
        if viol > 1e-6:
            raise OracleError(f"LP optimum for assignment {combo} violates the model by {viol}")
        if sol.objective < best_obj:
            best_obj, best_x = sol.objective, x
    if best_x is None:
        result = BnbResult(INFEASIBLE_STATUS, None, math.inf, math.inf, math.inf, count, 0.0)
    else:
        result = BnbResult(OPTIMAL_STATUS, best_x, best_obj, best_obj, 0.0, count, 0.0)
    if instance is not None and m_segments is not None and instance.num_units == 1:
        _grid_cross_check(instance, m_segments, result)
    return result


def grid_search_single_unit(instance: SystemInstance, m: int,
                            resolution: float = 0.01) -> float:
    """Optimal linearised cost of a one-unit instance by scanning an output grid.

    The balance row pins the output to the demand, so each period picks the
    grid point nearest its demand; ramp and reserve limits are checked on the
    chosen points.  Returns ``inf`` when no grid trajectory is feasible.
    """
    if instance.num_units != 1:
        raise ValueError("grid search handles single-unit instances only")
    unit = instance.units[0]
    pwc = build_piecewise(unit, m)
    a = np.asarray(pwc.breakpoints)
    values = np.array([pwc.slopes[0] * a[0] + pwc.intercepts[0]]
                      + [k * p + b for k, b, p in zip(pwc.slopes, pwc.intercepts, a[1:])])
    grid = np.append(np.arange(unit.p_min, unit.p_max, resolution), unit.p_max)
    total = 0.0
    prev = unit.initial_power
    for t, d in enumerate(instance.demand):
        near = grid[np.abs(grid - d) <= resolution / 2 + 1e-9]
        if near.size == 0:
            return math.inf
        p = float(near[np.argmin(np.abs(near - d))])
        if prev is not None and not (-unit.ramp_down - resolution <= p - prev
                                     <= unit.ramp_up + resolution):
            return math.inf
        for product in instance.reserves:
            cap = min(unit.p_max - p, product.tau * unit.ramp_up)
            if cap < product.requirement[t] - resolution:
                return math.inf
        total += float(np.interp(p, a, values))
        prev = p
    return total


def _grid_cross_check(instance, m_segments, result) -> None:
    grid = grid_search_single_unit(instance, m_segments)
    if math.isinf(grid):
        if result.incumbent is not None:
            raise OracleError("grid search found no trajectory but enumeration did")
        # the grid relaxes ramps and reserves by its resolution, so it may
        # accept trajectories the exact model rejects
        return
    if result.incumbent is None:
        return
    pwc = build_piecewise(instance.units[0], m_segments)
    tol = max(abs(k) for k in pwc.slopes) * 0.01 * instance.horizon + 1e-6
    if abs(grid - result.incumbent_obj) > tol:
        raise OracleError(f"grid search {grid} disagrees with enumeration "
                          f"{result.incumbent_obj}")


# -- random tiny instances ---------------------------------------------------------

def random_instance(seed: int, n_units: int, n_periods: int, *, m: int = 2,
                    max_segments: int = 4, reserve: Optional[bool] = None) -> SystemInstance:
    """Deterministic pseudo-random dispatch instance with a feasible trajectory.

    Valve-point frequencies are chosen so that ``m`` segments per half period
    give between 1 and ``max_segments`` segments per unit.  Demand is the sum
    of a ramp-feasible random walk, so a feasible dispatch always exists.
    """
    if n_units < 1 or n_periods < 1:
        raise ValueError("need at least one unit and one period")
    rng = np.random.default_rng(seed)
    units = []
    for i in range(n_units):
        p_min = rng.uniform(10, 100)
        width = rng.uniform(40, 200)
        L = int(rng.integers(1, max_segments + 1))
        f = math.pi * (L - rng.uniform(0.1, 0.9)) / (m * width)
        ramp = rng.uniform(0.3, 1.0, size=2) * width
        units.append(dict(id=i + 1, alpha=rng.uniform(50, 500), beta=rng.uniform(8, 30),
                          gamma=rng.uniform(0.001, 0.1), e=rng.uniform(20, 300), f=f,
                          p_min=p_min, p_max=p_min + width,
                          ramp_down=ramp[0], ramp_up=ramp[1]))
    P = np.empty((n_units, n_periods))
    start = np.empty(n_units)
    for i, u in enumerate(units):
        start[i] = rng.uniform(u["p_min"], u["p_max"])
        prev = start[i]
        for t in range(n_periods):
            step = rng.uniform(-u["ramp_down"], u["ramp_up"]) * 0.9
            P[i, t] = prev = float(np.clip(prev + step, u["p_min"], u["p_max"]))
    with_p0 = rng.random(n_units) < 0.5
    for i, u in enumerate(units):
        if with_p0[i]:
            back = rng.uniform(-0.5, 0.5) * min(u["ramp_down"], u["ramp_up"])
            u["initial_power"] = float(np.clip(P[i, 0] + back, u["p_min"], u["p_max"]))
    gens = [GeneratorUnit(**u) for u in units]
    demand = P.sum(axis=0)
    reserves = []
    if reserve is None:
        reserve = bool(rng.random() < 0.5)
    if reserve:
        tau = float(rng.choice([1.0, 1.0 / 6.0]))
        avail = sum(np.minimum(g.p_max - P[i], tau * g.ramp_up) for i, g in enumerate(gens))
        req = avail * rng.uniform(0.1, 0.6)
        reserves.append(ReserveProduct(tau, tuple(float(r) for r in req)))
    return SystemInstance(tuple(gens), tuple(float(d) for d in demand), tuple(reserves),
                          name=f"random-{seed}-{n_units}x{n_periods}", source="generated")


@dataclass(frozen=True)
class RandomLp:
    A: np.ndarray
    rhs: np.ndarray
    senses: tuple
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def random_lp(seed: int, max_rows: int = 6, max_cols: int = 6) -> RandomLp:
    """Small LP with integer data and a mix of finite and infinite bounds.

    Roughly half of the draws come out infeasible or unbounded, which is
    the point: they exercise every exit of the simplex engine.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, max_rows + 1))
    n = int(rng.integers(1, max_cols + 1))
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    A[rng.random((m, n)) < 0.3] = 0.0
    rhs = rng.integers(-10, 11, size=m).astype(float)
    senses = tuple(str(s) for s in rng.choice(["<=", ">=", "="], size=m, p=[0.45, 0.35, 0.2]))
    c = rng.integers(-5, 6, size=n).astype(float)
    lower = np.where(rng.random(n) < 0.8, rng.integers(-3, 2, size=n), -np.inf).astype(float)
    upper = np.where(rng.random(n) < 0.6, lower + rng.integers(0, 8, size=n), np.inf)
    upper = np.where(np.isfinite(lower), upper, np.where(rng.random(n) < 0.5, 4.0, np.inf))
    return RandomLp(A, rhs, senses, c, lower, upper)


# -- exact rational LP -------------------------------------------------------------------

def exact_lp(A, rhs, senses, c, lower, upper):
    """Solve a small LP in exact rational arithmetic.

    Dense tableau simplex with Bland's rule on the standard-form
    transformation of the bounded problem.  Returns ``(status, value)`` with
    status ``optimal``, ``infeasible`` or ``unbounded``; float data is
    converted exactly.
    """
    A = [[Fraction(float(v)) for v in row] for row in np.asarray(A, dtype=float)]
    rhs = [Fraction(float(v)) for v in rhs]
    c = [Fraction(float(v)) for v in c]
    m = len(rhs)
    n = len(c)
    # x_j = shift_j + sign_j * x'_j  (free columns split in two)
    cols = []  # (orig j, sign)
    shift = [Fraction(0)] * n
    extra_rows = []
    for j in range(n):
        lo, hi = float(lower[j]), float(upper[j])
        if math.isfinite(lo):
            shift[j] = Fraction(lo)
            cols.append((j, 1))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, Fraction(hi) - Fraction(lo)))
        elif math.isfinite(hi):
            shift[j] = Fraction(hi)
            cols.append((j, -1))
        else:
            cols.append((j, 1))
            cols.append((j, -1))
    k = len(cols)
    rows, b = [], []
    for i in range(m):
        coef = [A[i][j] * s for j, s in cols]
        rows.append((coef, senses[i], rhs[i] - sum(A[i][j] * shift[j] for j in range(n))))
    for col, width in extra_rows:
        coef = [Fraction(0)] * k
        coef[col] = Fraction(1)
        rows.append((coef, "<=", width))
    # slacks, then flip rows to non-negative rhs
    n_slack = sum(1 for _, s, _ in rows if s != "=")
    T = []
    si = 0
    for coef, sense, r in rows:
        slack = [Fraction(0)] * n_slack
        if sense == "<=":
            slack[si] = Fraction(1)
            si += 1
        elif sense == ">=":
            slack[si] = Fraction(-1)
            si += 1
        row = coef + slack
        if r < 0:
            row = [-v for v in row]
            r = -r
        T.append(row + [r])
        b.append(r)
    nv = k + n_slack
    na = len(T)
    for i, row in enumerate(T):
        art = [Fraction(0)] * na
        art[i] = Fraction(1)
        T[i] = row[:-1] + art + [row[-1]]
    basis = [nv + i for i in range(na)]
    total = nv + na
    cost_shift = sum(c[j] * shift[j] for j in range(n))
    phase1 = [Fraction(0)] * nv + [Fraction(1)] * na
    value = _bland(T, basis, phase1, total)
    if value is None or value != 0:
        return "infeasible", None
    # drive artificials out of the basis where possible
    for i, bv in enumerate(basis):
        if bv >= nv:
            for j in range(nv):
                if T[i][j] != 0:
                    _pivot(T, basis, i, j)
                    break
    keep = [i for i, bv in enumerate(basis) if bv < nv]
    T = [T[i][:nv] + [T[i][-1]] for i in keep]
    basis = [basis[i] for i in keep]
    cost = [c[j] * s for j, s in cols] + [Fraction(0)] * n_slack
    value = _bland(T, basis, cost, nv)
    if value is None:
        return "unbounded", None
    return "optimal", value + cost_shift


def _pivot(T, basis, r, q):
    piv = T[r][q]
    T[r] = [v / piv for v in T[r]]
    for i in range(len(T)):
        if i != r and T[i][q] != 0:
            f = T[i][q]
            T[i] = [a - f * b for a, b in zip(T[i], T[r])]
    basis[r] = q


def _bland(T, basis, cost, ncols):
    """Minimise ``cost`` over the tableau; ``None`` if unbounded."""
    while True:
        y_cost = {bv: cost[bv] for bv in basis}
        entering = None
        for j in range(ncols):
            if j in y_cost:
                continue
            d = cost[j] - sum(y_cost[basis[i]] * T[i][j] for i in range(len(T)))
            if d < 0:
                entering = j
                break
        if entering is None:
            return sum(cost[basis[i]] * T[i][-1] for i in range(len(T)))
        best = None
        for i, row in enumerate(T):
            if row[entering] > 0:
                ratio = row[-1] / row[entering]
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return None
        _pivot(T, basis, best[1], entering)
