"""Equal-segment piecewise-linear approximation of the valve-point cost curve.

Breakpoints sit at ``p_min + l * pi / (M f)``: every half period of the
rectified sine is cut into ``M`` equal pieces and the grid is truncated at
``p_max``.  Each piece is replaced by the chord of the *total* cost (quadratic
plus ripple) between its end points.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .model import GeneratorUnit, true_cost, true_cost_array


@dataclass(frozen=True)
class PiecewiseCost:
    unit_id: int
    breakpoints: tuple
    slopes: tuple
    intercepts: tuple
    m_param: int

    @property
    def num_segments(self) -> int:
        return len(self.slopes)

    def segment_of(self, p: float) -> int:
        """0-based index of a segment containing ``p`` (lowest on ties)."""
        a = self.breakpoints
        s = bisect.bisect_left(a, p, 1, len(a) - 1)
        return s - 1


def num_segments(unit: GeneratorUnit, m: int) -> int:
    """Segment count ``ceil(M f (p_max - p_min) / pi)``, at least 1."""
    if m < 1 or int(m) != m:
        raise ValueError(f"segments per half period must be a positive integer, got {m}")
    if unit.f == 0 or unit.p_max == unit.p_min:
        return 1
    x = m * unit.f * (unit.p_max - unit.p_min) / math.pi
    # absorb float noise so that exact multiples of the half period stay exact
    return max(1, math.ceil(x - 1e-9 * max(1.0, x)))


def breakpoints(unit: GeneratorUnit, m: int) -> list[float]:
    if unit.p_min > unit.p_max:
        raise ValueError(f"unit {unit.id}: p_min exceeds p_max")
    L = num_segments(unit, m)
    if L == 1:
        return [unit.p_min, unit.p_max]
    step = math.pi / (m * unit.f)
    pts = [min(unit.p_min + l * step, unit.p_max) for l in range(L)]
    pts.append(unit.p_max)
    return pts


def build_piecewise(unit: GeneratorUnit, m: int) -> PiecewiseCost:
    """Chords of the true cost between consecutive breakpoints."""
    a = breakpoints(unit, m)
    c = [true_cost(unit, p) for p in a]
    slopes, intercepts = [], []
    for l in range(1, len(a)):
        width = a[l] - a[l - 1]
        # a fixed-output unit has one zero-width segment
        k = (c[l] - c[l - 1]) / width if width > 0 else 0.0
        slopes.append(k)
        intercepts.append(c[l - 1] - k * a[l - 1])
    return PiecewiseCost(unit.id, tuple(a), tuple(slopes), tuple(intercepts), int(m))


def approx_cost(pwc: PiecewiseCost, p: float) -> float:
    a = pwc.breakpoints
    slack = 1e-9 * max(1.0, abs(a[-1]))
    if not (a[0] - slack <= p <= a[-1] + slack):
        raise ValueError(f"p={p} outside the linearised range [{a[0]}, {a[-1]}]")
    p = min(max(p, a[0]), a[-1])
    s = pwc.segment_of(p)
    return pwc.slopes[s] * p + pwc.intercepts[s]


def approx_cost_array(pwc: PiecewiseCost, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    a = np.asarray(pwc.breakpoints)
    slack = 1e-9 * max(1.0, abs(a[-1]))
    if np.any(p < a[0] - slack) or np.any(p > a[-1] + slack):
        raise ValueError("power outside the linearised range")
    p = np.clip(p, a[0], a[-1])
    s = np.clip(np.searchsorted(a, p, side="left") - 1, 0, pwc.num_segments - 1)
    return np.asarray(pwc.slopes)[s] * p + np.asarray(pwc.intercepts)[s]


@dataclass(frozen=True)
class ErrorReport:
    max_under: float
    max_over: float
    is_lower_approx: bool
    n_samples: int


def approx_error_report(unit: GeneratorUnit, pwc: PiecewiseCost,
                        n_samples: int | None = None) -> ErrorReport:
    """Sample the approximation error on a uniform grid over the unit's range.

    ``max_under`` is how far the approximation falls below the true cost,
    ``max_over`` how far it rises above.  Defaults to ``10 L + 1`` samples.
    """
    if n_samples is None:
        n_samples = 10 * pwc.num_segments + 1
    if n_samples < 2:
        raise ValueError("need at least two samples")
    p = np.linspace(unit.p_min, unit.p_max, n_samples)
    exact = true_cost_array(unit, p)
    approx = approx_cost_array(pwc, p)
    diff = approx - exact
    over_ok = diff <= 1e-6 * np.maximum(1.0, np.abs(exact))
    return ErrorReport(
        max_under=float(max(np.max(-diff), 0.0)),
        max_over=float(max(np.max(diff), 0.0)),
        is_lower_approx=bool(np.all(over_ok)),
        n_samples=int(n_samples),
    )
