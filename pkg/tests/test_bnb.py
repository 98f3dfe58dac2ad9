import json
import logging
import math

import numpy as np
import pytest

from dedvpe.bnb import (GAP_REACHED, INFEASIBLE_STATUS, NODE_LIMIT, OPTIMAL_STATUS,
                        SolverConfig, relative_gap, solve_milp)
from dedvpe.linearize import build_piecewise
from dedvpe.lp import solve_lp
from dedvpe.milp import MilpInstance, Row, build_milp, fixed_binary_bounds
from dedvpe.model import SystemInstance
from dedvpe.oracle import enumerate_solve, random_instance

from conftest import make_toy


def dispatch_milp(instance, m=2):
    return build_milp(instance, [build_piecewise(u, m) for u in instance.units])


def test_toy_single_period(toy_instance):
    res = solve_milp(dispatch_milp(toy_instance), SolverConfig(rgap_target=0.0))
    assert res.status == OPTIMAL_STATUS
    assert res.incumbent_obj == pytest.approx(545.5)
    assert res.incumbent[0] == pytest.approx(37.0)
    assert res.achieved_rgap == pytest.approx(0.0, abs=1e-12)


def test_integral_root_needs_no_branching():
    milp = MilpInstance([1.0, -2.0], [0, 0], [1, 1], [True, True],
                        [Row((0, 1), (1.0, 1.0), "<=", 2.0)], ["a", "b"])
    res = solve_milp(milp, SolverConfig(rgap_target=0.0))
    assert res.status == OPTIMAL_STATUS
    assert res.nodes_processed == 1
    assert res.incumbent_obj == pytest.approx(-2.0)


def test_knapsack_needs_branching():
    w = [5.0, 4.0, 3.0, 2.0]
    milp = MilpInstance([-10.0, -8.0, -5.0, -3.0], [0] * 4, [1] * 4, [True] * 4,
                        [Row((0, 1, 2, 3), tuple(w), "<=", 9.0)], list("abcd"))
    res = solve_milp(milp, SolverConfig(rgap_target=0.0))
    assert res.status == OPTIMAL_STATUS
    assert res.incumbent_obj == pytest.approx(-18.0)
    assert enumerate_solve(milp).incumbent_obj == pytest.approx(-18.0)


def test_infeasible_milp():
    milp = MilpInstance([1.0, 1.0], [0, 0], [1, 1], [True, True],
                        [Row((0, 1), (1.0, 1.0), "=", 1.5)], ["a", "b"])
    res = solve_milp(milp)
    assert res.status == INFEASIBLE_STATUS
    assert res.incumbent is None


def test_statically_infeasible_dispatch(toy):
    res = solve_milp(dispatch_milp(SystemInstance((toy,), (80.0,))))
    assert res.status == INFEASIBLE_STATUS


def test_fixed_binaries_match_lp():
    inst = random_instance(11, 2, 2, reserve=True)
    milp = dispatch_milp(inst)
    lo, hi = fixed_binary_bounds(milp, [0] * len(milp.segment_groups))
    fixed = MilpInstance(milp.objective, lo, hi, milp.is_binary, milp.rows, milp.col_names)
    lp = solve_lp(fixed)
    res = solve_milp(fixed, SolverConfig(rgap_target=0.0))
    if lp.status == "optimal":
        assert res.incumbent_obj == pytest.approx(lp.objective, rel=1e-8)
    else:
        assert res.status == INFEASIBLE_STATUS


def test_relative_gap_convention():
    assert relative_gap(101.0, 100.0) == pytest.approx(0.01)
    assert relative_gap(1e-12, 0.0) == pytest.approx(1e-12 / 1e-10)
    assert relative_gap(math.inf, 0.0) == math.inf


def test_config_validation():
    for kw in ({"rgap_target": -1}, {"feasibility_tol": 0}, {"branching_rule": "x"},
               {"node_selection": "x"}, {"threads": 0}, {"time_limit": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("rule,selection", [("most-fractional", "best-bound"),
                                            ("pseudo-cost", "best-bound"),
                                            ("most-fractional", "depth-first-plunge")])
def test_matches_oracle(seed, rule, selection):
    inst = random_instance(seed, 2, 3, max_segments=3)
    milp = dispatch_milp(inst)
    ref = enumerate_solve(milp, instance=inst, m_segments=2)
    res = solve_milp(milp, SolverConfig(rgap_target=0.0, branching_rule=rule,
                                        node_selection=selection))
    if ref.incumbent is None:
        assert res.status == INFEASIBLE_STATUS
        return
    assert res.incumbent_obj == pytest.approx(ref.incumbent_obj, abs=1e-6)
    assert milp.max_row_violation(res.incumbent) <= 1e-6
    b = milp.is_binary
    assert np.all(np.abs(res.incumbent[b] - np.round(res.incumbent[b])) <= 1e-6)
    assert res.incumbent_obj >= res.best_bound - 1e-6


def test_trace_is_monotone_and_written(tmp_path):
    inst = random_instance(5, 2, 3, max_segments=4)
    path = tmp_path / "trace.jsonl"
    res = solve_milp(dispatch_milp(inst), SolverConfig(rgap_target=0.0, record_trace=True,
                                                       trace_path=str(path)))
    events = [json.loads(line) for line in path.read_text().splitlines()]
    assert events == res.trace
    assert len(events) >= res.nodes_processed
    for e in events:
        assert {"node", "parent", "bound", "decision", "global_bound", "incumbent"} <= set(e)
    bounds = [e["global_bound"] for e in events]
    assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(bounds, bounds[1:]))
    incs = [e["incumbent"] for e in events if e["incumbent"] is not None]
    assert all(i2 <= i1 + 1e-9 for i1, i2 in zip(incs, incs[1:]))


def test_deterministic_single_thread():
    milp = dispatch_milp(random_instance(8, 3, 3, max_segments=4))
    a = solve_milp(milp, SolverConfig(rgap_target=0.0, seed=3))
    b = solve_milp(milp, SolverConfig(rgap_target=0.0, seed=3))
    assert a.nodes_processed == b.nodes_processed
    assert np.array_equal(a.incumbent, b.incumbent)


def test_threads_fall_back_with_warning(caplog):
    milp = dispatch_milp(random_instance(8, 2, 2))
    with caplog.at_level(logging.WARNING):
        res = solve_milp(milp, SolverConfig(threads=4, rgap_target=0.0))
    assert "single-threaded" in caplog.text
    assert res.incumbent_obj == pytest.approx(
        solve_milp(milp, SolverConfig(rgap_target=0.0)).incumbent_obj, abs=1e-6)


def test_node_limit_and_gap_contract():
    inst = random_instance(2, 4, 4, max_segments=4)
    milp = dispatch_milp(inst)
    res = solve_milp(milp, SolverConfig(rgap_target=0.0, node_limit=1))
    assert res.status in (NODE_LIMIT, OPTIMAL_STATUS)
    loose = solve_milp(milp, SolverConfig(rgap_target=0.05))
    assert loose.status in (GAP_REACHED, OPTIMAL_STATUS)
    assert loose.achieved_rgap <= 0.05
    assert loose.achieved_rgap == pytest.approx(
        (loose.incumbent_obj - loose.best_bound) / max(abs(loose.best_bound), 1e-10))
