import math

import numpy as np
import pytest

from dedvpe.io import load_bundled
from dedvpe.linearize import (approx_cost, approx_cost_array, approx_error_report,
                              breakpoints, build_piecewise, num_segments)
from dedvpe.model import quadratic_cost, true_cost, vpe_cost

from conftest import make_toy


def test_breakpoints_examples(toy):
    assert breakpoints(toy, 2) == pytest.approx([20, 30, 40, 50, 60])
    assert breakpoints(toy, 4) == pytest.approx([20, 25, 30, 35, 40, 45, 50, 55, 60])
    assert breakpoints(make_toy(f=0.0), 3) == [20, 60]


def test_breakpoints_truncated_last_segment():
    a = breakpoints(make_toy(p_max=57.0), 2)
    assert a == pytest.approx([20, 30, 40, 50, 57])
    assert num_segments(make_toy(p_max=57.0), 2) == 4


def test_breakpoints_reject_bad_m(toy):
    for m in (0, -1, 1.5):
        with pytest.raises(ValueError):
            breakpoints(toy, m)


def test_fixed_output_unit_has_one_zero_width_segment():
    pwc = build_piecewise(make_toy(p_min=55.0, p_max=55.0), 2)
    assert pwc.breakpoints == (55.0, 55.0)
    assert pwc.slopes == (0.0,)
    assert approx_cost(pwc, 55.0) == pytest.approx(true_cost(make_toy(p_min=55.0,
                                                                      p_max=55.0), 55.0))


def test_toy_chords(toy):
    pwc = build_piecewise(toy, 2)
    assert pwc.num_segments == 4
    assert pwc.slopes == pytest.approx([14.5, 11.5, 16.5, 13.5])
    assert pwc.intercepts == pytest.approx([30, 120, -80, 70])


def test_pure_quadratic_slopes_increase():
    pwc = build_piecewise(make_toy(e=0.0), 2)
    assert all(b > a for a, b in zip(pwc.slopes, pwc.slopes[1:]))


def test_refined_grid_contains_coarse_grid(toy):
    fine = breakpoints(toy, 4)
    for a in breakpoints(toy, 2):
        assert min(abs(a - b) for b in fine) < 1e-9


def test_approx_cost_examples(toy):
    pwc = build_piecewise(toy, 2)
    assert approx_cost(pwc, 25) == pytest.approx(392.5)
    assert approx_cost(pwc, 30) == pytest.approx(465.0)
    assert approx_cost(pwc, 20) == pytest.approx(320.0)
    assert approx_cost(pwc, 37) == pytest.approx(545.5)
    with pytest.raises(ValueError):
        approx_cost(pwc, 60.5)
    with pytest.raises(ValueError):
        approx_cost(pwc, 19.0)


def test_approx_cost_array_matches_scalar(toy):
    pwc = build_piecewise(toy, 4)
    ps = np.linspace(20, 60, 97)
    assert np.allclose(approx_cost_array(pwc, ps), [approx_cost(pwc, p) for p in ps])


def test_error_report_examples(toy):
    rep = approx_error_report(toy, build_piecewise(toy, 2), 1001)
    assert rep.is_lower_approx
    assert rep.max_under >= true_cost(toy, 25) - 392.5 - 1e-9
    quad = make_toy(e=0.0)
    assert not approx_error_report(quad, build_piecewise(quad, 2)).is_lower_approx
    on_breaks = approx_error_report(toy, build_piecewise(toy, 2), 5)
    assert on_breaks.max_under == pytest.approx(0, abs=1e-9)
    assert on_breaks.max_over == pytest.approx(0, abs=1e-9)
    assert approx_error_report(toy, build_piecewise(toy, 2)).n_samples == 41
    with pytest.raises(ValueError):
        approx_error_report(toy, build_piecewise(toy, 2), 1)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 8])
def test_bundled_units_chord_and_dominance(m):
    for u in load_bundled().units:
        pwc = build_piecewise(u, m)
        a = np.array(pwc.breakpoints)
        assert a[0] == u.p_min and a[-1] == u.p_max
        assert np.all(np.diff(a) > 0) or u.is_fixed
        for l in range(pwc.num_segments):
            for p in (a[l], a[l + 1]):
                assert pwc.slopes[l] * p + pwc.intercepts[l] == pytest.approx(
                    true_cost(u, p), rel=1e-9)
        ps = np.linspace(u.p_min, u.p_max, 10 * pwc.num_segments + 1)
        chord_v = np.interp(ps, a, [vpe_cost(u, x) for x in a])
        lower = np.array([quadratic_cost(u, p) for p in ps]) + chord_v
        approx = approx_cost_array(pwc, ps)
        assert np.all(approx - lower >= -1e-9 * np.abs(lower))
