import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from dedvpe.bnb import SolverConfig, solve_milp
from dedvpe.io import duplicate_system, dumps_instance, format_solution, loads_solution
from dedvpe.linearize import approx_cost, approx_cost_array, breakpoints, build_piecewise
from dedvpe.milp import build_milp, extract_solution
from dedvpe.model import (GeneratorUnit, Schedule, quadratic_cost, true_cost,
                          validate_schedule, vpe_cost)
from dedvpe.oracle import random_instance

pos = st.floats(0.0, 1e3, allow_nan=False)


@st.composite
def units(draw):
    p_min = draw(st.floats(0, 200))
    width = draw(st.floats(1, 400))
    return GeneratorUnit(1, draw(pos), draw(st.floats(0, 50)), draw(st.floats(0, 0.2)),
                         draw(st.floats(0, 500)), draw(st.floats(0, 0.2)),
                         p_min, p_min + width, 50.0, 50.0)


@settings(max_examples=200, deadline=None)
@given(units(), st.floats(0, 1))
def test_cost_decomposition(u, s):
    p = u.p_min + s * (u.p_max - u.p_min)
    assert vpe_cost(u, p) >= 0
    assert true_cost(u, p) == pytest.approx(quadratic_cost(u, p) + vpe_cost(u, p))


@settings(max_examples=150, deadline=None)
@given(units(), st.integers(1, 6))
def test_piecewise_invariants(u, m):
    pwc = build_piecewise(u, m)
    a = np.array(pwc.breakpoints)
    assert a[0] == u.p_min and a[-1] == u.p_max
    assert np.all(np.diff(a) > 0)
    if u.f > 0:
        expect = math.ceil(m * u.f * (u.p_max - u.p_min) / math.pi - 1e-9)
        assert pwc.num_segments in (max(expect, 1), max(expect, 1) + 1)
    scale = max(1.0, max(abs(true_cost(u, x)) for x in a))
    for l in range(pwc.num_segments):
        for x in (a[l], a[l + 1]):
            assert abs(pwc.slopes[l] * x + pwc.intercepts[l] - true_cost(u, x)) <= 1e-9 * scale
    ps = np.linspace(u.p_min, u.p_max, 10 * pwc.num_segments + 1)
    cq = np.interp(ps, a, [quadratic_cost(u, x) for x in a])
    cv = np.interp(ps, a, [vpe_cost(u, x) for x in a])
    approx = approx_cost_array(pwc, ps)
    # chords of a sum are the sum of chords
    assert np.allclose(approx, cq + cv, rtol=1e-9, atol=1e-9 * scale)
    # the quadratic chord dominates the quadratic itself
    exact_q = np.array([quadratic_cost(u, p) for p in ps])
    assert np.all(approx - (exact_q + cv) >= -1e-9 * scale)
    # between zeros of the sine, its chord stays below it
    exact_v = np.array([vpe_cost(u, p) for p in ps])
    if u.f > 0:
        seg = np.clip(np.searchsorted(a, ps, side="left") - 1, 0, pwc.num_segments - 1)
        half = math.pi / u.f
        ok = np.floor((a[seg] - u.p_min) / half + 1e-9) == np.floor(
            (a[seg + 1] - u.p_min) / half - 1e-9)
        assert np.all((cv - exact_v)[ok] <= 1e-9 * max(1.0, u.e))


@settings(max_examples=40, deadline=None)
@given(units(), st.integers(1, 3))
def test_doubling_m_keeps_breakpoints(u, m):
    assume(u.f > 0)
    fine = breakpoints(u, 2 * m)
    for a in breakpoints(u, m):
        assert min(abs(a - b) for b in fine) <= 1e-9 * max(1.0, abs(a))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 3))
def test_solved_point_structure(seed, n, T):
    inst = random_instance(seed, n, T, max_segments=3)
    pwcs = [build_piecewise(u, 2) for u in inst.units]
    milp = build_milp(inst, pwcs)
    res = solve_milp(milp, SolverConfig(rgap_target=0.0))
    assume(res.incumbent is not None)
    x = res.incumbent
    assert milp.max_row_violation(x) <= 1e-6
    total = 0.0
    for g in milp.segment_groups:
        u = x[list(g.binary_cols)]
        assert np.sum(np.abs(u - 1) <= 1e-6) == 1
        s = int(np.argmax(u))
        assert g.lows[s] - 1e-6 <= x[g.power_col] <= g.highs[s] + 1e-6
    sched = extract_solution(milp, x, inst)
    assert validate_schedule(inst, sched, 1e-6).is_feasible
    for i, p in enumerate(pwcs):
        for t in range(T):
            total += approx_cost(p, sched.power[i, t])
    assert total == pytest.approx(res.incumbent_obj, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 3), st.integers(1, 3))
def test_duplication_composes(seed, a, b):
    inst = random_instance(seed, 2, 2, reserve=True)
    left = duplicate_system(duplicate_system(inst, a), b)
    right = duplicate_system(inst, a * b)
    assert left.units == right.units
    assert left.demand == pytest.approx(right.demand)
    for r1, r2 in zip(left.reserves, right.reserves):
        assert r1.requirement == pytest.approx(r2.requirement)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000))
def test_solution_file_round_trip(seed):
    inst = random_instance(seed, 2, 3, reserve=True)
    rng = np.random.default_rng(seed)
    lo = np.array([u.p_min for u in inst.units])[:, None]
    hi = np.array([u.p_max for u in inst.units])[:, None]
    power = np.round(lo + rng.random((2, 3)) * (hi - lo), 2)
    sched = Schedule(power, [np.round(rng.random((2, 3)) * 5, 2)])
    back, _ = loads_solution(format_solution(inst, sched, {"status": "x"}))
    assert np.allclose(back.power, sched.power, atol=5e-10)
    assert np.allclose(back.reserve[0], sched.reserve[0], atol=5e-10)
