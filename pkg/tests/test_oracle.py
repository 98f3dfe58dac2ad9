import math
from fractions import Fraction

import numpy as np
import pytest

from dedvpe.io import dumps_instance
from dedvpe.linearize import build_piecewise
from dedvpe.milp import build_milp
from dedvpe.model import SystemInstance
from dedvpe.oracle import (OracleError, TinyLimits, enumerate_solve, exact_lp,
                           grid_search_single_unit, random_instance)

from conftest import make_toy


def test_toy_enumeration(toy_instance):
    milp = build_milp(toy_instance, [build_piecewise(toy_instance.units[0], 2)])
    res = enumerate_solve(milp, instance=toy_instance, m_segments=2)
    assert res.nodes_processed == 4
    assert res.incumbent_obj == pytest.approx(545.5)
    assert res.achieved_rgap == 0.0


def test_all_assignments_infeasible(toy):
    inst = SystemInstance((toy,), (70.0,))
    res = enumerate_solve(build_milp(inst, [build_piecewise(toy, 2)]))
    assert res.status == "infeasible" and res.incumbent is None


def test_cap_names_segment_counts():
    inst = random_instance(3, 2, 3, max_segments=4)
    milp = build_milp(inst, [build_piecewise(u, 2) for u in inst.units])
    with pytest.raises(OracleError, match="exceeds the cap"):
        enumerate_solve(milp, TinyLimits(max_assignments=2))


def test_two_by_two_three_segments_counts_81():
    units = tuple(make_toy(id=i + 1, f=3 * math.pi / 80 * 0.9, beta=10 + i) for i in range(2))
    inst = SystemInstance(units, (70.0, 80.0))
    milp = build_milp(inst, [build_piecewise(u, 2) for u in units])
    assert [len(g.binary_cols) for g in milp.segment_groups] == [3] * 4
    assert enumerate_solve(milp).nodes_processed == 81


def test_grid_search_agrees_on_single_unit():
    for seed in range(10):
        inst = random_instance(seed, 1, 3)
        milp = build_milp(inst, [build_piecewise(inst.units[0], 2)])
        res = enumerate_solve(milp)
        grid = grid_search_single_unit(inst, 2)
        if res.incumbent is not None:
            assert grid <= res.incumbent_obj + 1e-6 + 60 * 0.01 * 3


def test_random_instance_deterministic_and_valid():
    a, b = random_instance(1, 1, 1), random_instance(1, 1, 1)
    assert dumps_instance(a) == dumps_instance(b)
    assert not random_instance(1, 2, 3).statically_infeasible
    for seed in range(30):
        inst = random_instance(seed, 2, 3, max_segments=3)
        assert all(1 <= build_piecewise(u, 2).num_segments <= 3 for u in inst.units)


def test_random_instances_mostly_feasible():
    feasible = 0
    for seed in range(200):
        inst = random_instance(seed, 2, 3, max_segments=2)
        milp = build_milp(inst, [build_piecewise(u, 2) for u in inst.units])
        feasible += enumerate_solve(milp).incumbent is not None
    assert feasible >= 190


def test_exact_lp_small_cases():
    assert exact_lp([[1.0]], [1.0], [">="], [1.0], [0.0], [10.0]) == ("optimal", Fraction(1))
    assert exact_lp([[1.0], [1.0]], [2.0, 1.0], [">=", "<="], [1.0], [0.0], [10.0])[0] \
        == "infeasible"
    assert exact_lp([[1.0, -1.0]], [0.0], [">="], [-1.0, 0.0], [0.0, 0.0],
                    [math.inf, 1.0])[0] == "unbounded"
    status, value = exact_lp([[1.0, 1.0]], [1.0], ["<="], [-1.0, -1.0], [0, 0], [1, 1])
    assert (status, value) == ("optimal", Fraction(-1))
    status, value = exact_lp([[1.0, -1.0], [1.0, 1.0]], [1.0, 3.0], ["=", ">="],
                             [1.0, 2.0], [-np.inf, -np.inf], [np.inf, np.inf])
    assert (status, value) == ("optimal", Fraction(4))
