import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dedvpe.bnb import SolverConfig, solve_milp
from dedvpe.linearize import approx_cost, build_piecewise
from dedvpe.milp import (MilpInstance, Row, bin_name, build_milp, column_count,
                         extract_solution, p_name, read_model, row_count, seg_name,
                         sr_name, write_model, write_mps)
from dedvpe.model import (ReserveProduct, SystemInstance, schedule_cost,
                          validate_schedule)

from conftest import make_toy


def toy_milp(T=2, reserves=(), **unit_kw):
    u = make_toy(**unit_kw)
    inst = SystemInstance((u,), (37.0,) * T, reserves)
    return inst, build_milp(inst, [build_piecewise(u, 2)])


def test_toy_counts():
    inst, milp = toy_milp()
    assert (milp.num_cols, milp.num_rows) == (18, 24)
    inst, milp = toy_milp(reserves=(ReserveProduct(1.0, (1.0, 1.0)),))
    assert (milp.num_cols, milp.num_rows) == (20, 28)
    assert milp.upper[milp.column_map[sr_name(0, 0, 1)]] == pytest.approx(30.0)


def test_toy_column_layout_and_objective():
    inst, milp = toy_milp(T=1)
    cmap = milp.column_map
    assert cmap[p_name(0, 0)] == 0
    for l, (k, b) in enumerate(zip([14.5, 11.5, 16.5, 13.5], [30, 120, -80, 70])):
        assert milp.objective[cmap[seg_name(l, 0, 0)]] == pytest.approx(k)
        assert milp.objective[cmap[bin_name(l, 0, 0)]] == pytest.approx(b)
        assert milp.is_binary[cmap[bin_name(l, 0, 0)]]
    assert sorted(cmap.values()) == list(range(milp.num_cols))


def test_initial_power_adds_first_period_ramp_rows():
    _, a = toy_milp()
    _, b = toy_milp(initial_power=30.0)
    assert b.num_rows == a.num_rows + 2


def test_misaligned_pwcs_rejected(toy):
    inst = SystemInstance((toy, make_toy(id=2)), (60.0,))
    with pytest.raises(ValueError):
        build_milp(inst, [build_piecewise(toy, 2)])


def test_statically_infeasible_demand_is_a_warning(toy):
    inst = SystemInstance((toy,), (80.0,))
    milp = build_milp(inst, [build_piecewise(toy, 2)])
    assert milp.warnings


def test_single_segment_model_lp_equals_milp():
    u = make_toy(f=0.0)
    inst = SystemInstance((u, make_toy(id=2, f=0.0, beta=12.0)), (70.0, 90.0))
    milp = build_milp(inst, [build_piecewise(v, 2) for v in inst.units])
    from dedvpe.lp import solve_lp
    lp = solve_lp(milp)
    res = solve_milp(milp, SolverConfig(rgap_target=0.0))
    assert res.incumbent_obj == pytest.approx(lp.objective, rel=1e-8)


def test_extract_solution_and_round_trip():
    u1, u2 = make_toy(), make_toy(id=2, beta=11.0, ramp_up=12.0, ramp_down=12.0)
    inst = SystemInstance((u1, u2), (60.0, 75.0, 90.0),
                          (ReserveProduct(1.0, (5.0, 5.0, 5.0)),))
    pwcs = [build_piecewise(u, 2) for u in inst.units]
    milp = build_milp(inst, pwcs)
    res = solve_milp(milp, SolverConfig(rgap_target=0.0))
    sched = extract_solution(milp, res.incumbent, inst)
    assert validate_schedule(inst, sched, 1e-6).is_feasible
    approx = sum(approx_cost(p, sched.power[i, t]) for i, p in enumerate(pwcs)
                 for t in range(inst.horizon))
    assert approx == pytest.approx(res.incumbent_obj, rel=1e-6)
    assert schedule_cost(inst, sched) >= res.incumbent_obj - 1e-6
    with pytest.raises(ValueError):
        extract_solution(milp, res.incumbent[:-1], inst)


def test_extract_lower_bounds_gives_p_min(toy):
    inst = SystemInstance((toy,), (20.0,))
    milp = build_milp(inst, [build_piecewise(toy, 2)])
    assert extract_solution(milp, milp.lower, inst).power[0, 0] == 20.0


def test_model_validation():
    with pytest.raises(ValueError):
        MilpInstance([0.0], [0.0], [2.0], [True], [], ["x"])
    with pytest.raises(ValueError):
        MilpInstance([0.0], [0.0], [1.0], [False], [Row((0, 0), (1, 1), "<=", 1)], ["x"])
    with pytest.raises(ValueError):
        MilpInstance([0.0], [0.0], [1.0], [False], [Row((1,), (1,), "<=", 1)], ["x"])
    with pytest.raises(ValueError):
        MilpInstance([0.0], [0.0], [1.0], [False], [Row((0,), (1,), "<", 1)], ["x"])


def test_text_format_round_trip_and_determinism():
    inst, milp = toy_milp(reserves=(ReserveProduct(1 / 6, (1.0, 2.0)),), initial_power=40.0)
    text = milp.dumps()
    assert text.startswith("# dedvpe-milp 1")
    again = read_model(io.StringIO(text))
    assert again.dumps() == text
    assert np.array_equal(again.matrix.toarray(), milp.matrix.toarray())
    _, twin = toy_milp(reserves=(ReserveProduct(1 / 6, (1.0, 2.0)),), initial_power=40.0)
    assert twin.dumps() == text


def test_mps_output_lists_every_column():
    _, milp = toy_milp()
    buf = io.StringIO()
    write_mps(milp, buf)
    text = buf.getvalue()
    assert text.startswith("NAME") and text.rstrip().endswith("ENDATA")
    assert "MARKER" in text


def expected_counts(N, T, R, seg, n_p0):
    cols = N * T + 2 * T * sum(seg) + R * N * T
    rows = T * sum(2 + 2 * L for L in seg) + T + 2 * N * (T - 1) + 2 * n_p0 + R * (N * T + T)
    return cols, rows


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2), st.data())
def test_counts_match_closed_form(N, T, R, data):
    seg = data.draw(st.lists(st.integers(1, 6), min_size=N, max_size=N))
    p0 = data.draw(st.lists(st.booleans(), min_size=N, max_size=N))
    units = []
    for i, (L, has_p0) in enumerate(zip(seg, p0)):
        # L segments at M = 2 for a 40 MW range
        f = L * math.pi / (2 * 40.0)
        units.append(make_toy(id=i + 1, f=f, initial_power=30.0 if has_p0 else None))
    inst = SystemInstance(tuple(units), (30.0 * N,) * T,
                          tuple(ReserveProduct(1.0, (1.0,) * T) for _ in range(R)))
    pwcs = [build_piecewise(u, 2) for u in units]
    assert [p.num_segments for p in pwcs] == seg
    milp = build_milp(inst, pwcs)
    expect = expected_counts(N, T, R, seg, sum(p0))
    assert (milp.num_cols, milp.num_rows) == expect
    assert (column_count(inst, seg), row_count(inst, seg)) == expect
