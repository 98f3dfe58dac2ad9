"""Physical and economic model of dynamic economic dispatch with valve-point loading.

Units are thermal generators whose fuel cost is a convex quadratic plus a
rectified sinusoid.  A :class:`SystemInstance` bundles the units with a
per-period demand profile and any number of spinning-reserve products.
Periods are indexed from 0 in the Python API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_TOL = 0.01  # MW; Table-2 style outputs are rounded to 2 decimals


def _check_finite(p: float) -> float:
    p = float(p)
    if not math.isfinite(p):
        raise ValueError(f"power output must be finite, got {p!r}")
    return p


@dataclass(frozen=True)
class GeneratorUnit:
    """Cost coefficients, output limits and ramp rates of one thermal unit.

    ``ramp_down`` and ``ramp_up`` are non-negative magnitudes in MW/h.
    ``p_min == p_max`` describes a unit with fixed output.
    """

    id: int
    alpha: float
    beta: float
    gamma: float
    e: float
    f: float
    p_min: float
    p_max: float
    ramp_down: float
    ramp_up: float
    initial_power: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "e", "f", "p_min", "p_max",
                     "ramp_down", "ramp_up"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"unit {self.id}: {name} must be finite")
            if value < 0:
                raise ValueError(f"unit {self.id}: {name} must be >= 0, got {value}")
        if self.p_min > self.p_max:
            raise ValueError(
                f"unit {self.id}: p_min ({self.p_min}) exceeds p_max ({self.p_max})")
        if self.initial_power is not None and not (
                self.p_min <= self.initial_power <= self.p_max):
            raise ValueError(
                f"unit {self.id}: initial_power {self.initial_power} outside "
                f"[{self.p_min}, {self.p_max}]")

    @property
    def is_fixed(self) -> bool:
        return self.p_min == self.p_max


@dataclass(frozen=True)
class ReserveProduct:
    """A spinning-reserve requirement deliverable within ``tau`` hours."""

    tau: float
    requirement: tuple

    def __post_init__(self):
        object.__setattr__(self, "requirement",
                           tuple(float(r) for r in self.requirement))
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"reserve tau must be positive, got {self.tau}")
        if any(not math.isfinite(r) or r < 0 for r in self.requirement):
            raise ValueError("reserve requirements must be finite and >= 0")


@dataclass(frozen=True)
class SystemInstance:
    units: tuple
    demand: tuple
    reserves: tuple = ()
    name: str = ""
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "demand", tuple(float(d) for d in self.demand))
        object.__setattr__(self, "reserves", tuple(self.reserves))
        if not self.units:
            raise ValueError("instance needs at least one unit")
        if not self.demand:
            raise ValueError("instance needs at least one period")
        if any(not math.isfinite(d) or d <= 0 for d in self.demand):
            raise ValueError("every demand value must be positive and finite")
        for r, product in enumerate(self.reserves):
            if len(product.requirement) != self.horizon:
                raise ValueError(
                    f"reserve product {r}: requirement has {len(product.requirement)} "
                    f"entries, horizon is {self.horizon}")

    @property
    def horizon(self) -> int:
        return len(self.demand)

    @property
    def num_units(self) -> int:
        return len(self.units)

    def infeasible_periods(self) -> list[int]:
        """Periods whose demand lies outside [sum p_min, sum p_max]."""
        lo = sum(u.p_min for u in self.units)
        hi = sum(u.p_max for u in self.units)
        return [t for t, d in enumerate(self.demand) if d < lo or d > hi]

    @property
    def statically_infeasible(self) -> bool:
        return bool(self.infeasible_periods())


@dataclass
class Schedule:
    """Unit outputs ``power[i, t]`` and per-product reserves ``reserve[r][i, t]``."""

    power: np.ndarray
    reserve: list = field(default_factory=list)

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        self.reserve = [np.asarray(r, dtype=float) for r in self.reserve]
        if self.power.ndim != 2:
            raise ValueError("power must be an N x T matrix")
        for r in self.reserve:
            if r.shape != self.power.shape:
                raise ValueError("reserve matrices must match the power matrix shape")
        if not np.all(np.isfinite(self.power)) or any(
                not np.all(np.isfinite(r)) for r in self.reserve):
            raise ValueError("schedule entries must be finite")

    def check_shape(self, instance: SystemInstance) -> None:
        shape = (instance.num_units, instance.horizon)
        if self.power.shape != shape:
            raise ValueError(f"schedule is {self.power.shape}, instance is {shape}")
        if self.reserve and len(self.reserve) != len(instance.reserves):
            raise ValueError(
                f"schedule carries {len(self.reserve)} reserve products, "
                f"instance has {len(instance.reserves)}")


@dataclass(frozen=True)
class Violation:
    kind: str  # balance | limit | ramp | reserve-cap | reserve-sign | reserve-requirement
    unit: Optional[int]
    period: int
    magnitude: float


@dataclass
class ViolationReport:
    violations: list
    worst_violation: float
    tolerance: float

    @property
    def is_feasible(self) -> bool:
        return self.worst_violation <= self.tolerance

    def summary(self) -> str:
        if self.is_feasible:
            return f"feasible (worst violation {self.worst_violation:.6g} MW)"
        kinds = sorted({v.kind for v in self.violations if v.magnitude > self.tolerance})
        return (f"infeasible: worst violation {self.worst_violation:.6g} MW "
                f"({', '.join(kinds)})")


# -- cost model ---------------------------------------------------------------

def quadratic_cost(unit: GeneratorUnit, p: float) -> float:
    p = _check_finite(p)
    return unit.alpha + unit.beta * p + unit.gamma * p * p


def vpe_cost(unit: GeneratorUnit, p: float) -> float:
    """Valve-point ripple ``|e sin(f (p - p_min))|``."""
    p = _check_finite(p)
    return abs(unit.e * math.sin(unit.f * (p - unit.p_min)))


def true_cost(unit: GeneratorUnit, p: float) -> float:
    return quadratic_cost(unit, p) + vpe_cost(unit, p)


def true_cost_array(unit: GeneratorUnit, p) -> np.ndarray:
    """Vectorised :func:`true_cost`."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("power output must be finite")
    return (unit.alpha + unit.beta * p + unit.gamma * p * p
            + np.abs(unit.e * np.sin(unit.f * (p - unit.p_min))))


def schedule_cost(instance: SystemInstance, schedule: Schedule) -> float:
    """Total true generation cost of a schedule over the horizon."""
    schedule.check_shape(instance)
    return float(sum(true_cost_array(u, schedule.power[i]).sum()
                     for i, u in enumerate(instance.units)))


def optimality_gap(z: float, lb: float) -> float:
    """Relative distance ``(z - lb) / lb`` of a cost from its lower bound."""
    if not lb > 0:
        raise ValueError(f"optimality gap needs a positive lower bound, got {lb}")
    return (z - lb) / lb


# -- feasibility ----------------------------------------------------------------

def max_reserve(instance: SystemInstance, power) -> list:
    """Largest reserve each unit can carry for every product given its outputs.

    Used when a schedule arrives without reserve data (e.g. a published
    output table): if these allocations cannot cover a requirement, no
    allocation can.
    """
    power = np.asarray(power, dtype=float)
    p_max = np.array([u.p_max for u in instance.units])[:, None]
    ramp_up = np.array([u.ramp_up for u in instance.units])[:, None]
    headroom = np.clip(p_max - power, 0.0, None)
    return [np.minimum(headroom, np.broadcast_to(prod.tau * ramp_up, power.shape))
            for prod in instance.reserves]


def validate_schedule(instance: SystemInstance, schedule: Schedule,
                      tol: float = DEFAULT_TOL) -> ViolationReport:
    """Check balance, output limits, ramp limits and reserve constraints.

    Reports every constraint whose violation exceeds ``tol``; the worst
    violation is reported whether or not it exceeds the tolerance.
    """
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    schedule.check_shape(instance)
    P = schedule.power
    n, T = P.shape
    p_min = np.array([u.p_min for u in instance.units])
    p_max = np.array([u.p_max for u in instance.units])
    rd = np.array([u.ramp_down for u in instance.units])
    ru = np.array([u.ramp_up for u in instance.units])

    found = []  # (kind, unit, period, magnitude)

    def record(kind, mags, units=None):
        mags = np.atleast_1d(mags)
        for idx in zip(*np.nonzero(mags > 0)):
            if units is None:
                found.append((kind, None, int(idx[0]), float(mags[idx])))
            else:
                found.append((kind, int(idx[0]), int(idx[1]), float(mags[idx])))

    record("balance", np.abs(P.sum(axis=0) - np.asarray(instance.demand)))
    record("limit", np.maximum(p_min[:, None] - P, P - p_max[:, None]), units=True)

    prev = np.full(n, np.nan)
    for i, u in enumerate(instance.units):
        if u.initial_power is not None:
            prev[i] = u.initial_power
    steps = np.diff(np.hstack([prev[:, None], P]), axis=1)
    ramp = np.maximum(steps - ru[:, None], -rd[:, None] - steps)
    record("ramp", np.nan_to_num(ramp, nan=0.0), units=True)

    reserve = schedule.reserve if schedule.reserve else max_reserve(instance, P)
    for product, SR in zip(instance.reserves, reserve):
        cap = np.minimum(p_max[:, None] - P, product.tau * ru[:, None])
        record("reserve-cap", SR - cap, units=True)
        record("reserve-sign", -SR, units=True)
        record("reserve-requirement",
               np.asarray(product.requirement) - SR.sum(axis=0))

    worst = max((m for *_, m in found), default=0.0)
    violations = [Violation(k, i, t, m) for k, i, t, m in found if m > tol]
    violations.sort(key=lambda v: (v.period, v.kind, -1 if v.unit is None else v.unit))
    return ViolationReport(violations, worst, tol)


def make_schedule(instance: SystemInstance, power: Sequence,
                  reserve: Optional[Sequence] = None) -> Schedule:
    """Build a schedule, filling reserves with the maximal allocation if absent."""
    power = np.asarray(power, dtype=float)
    if reserve is None:
        reserve = max_reserve(instance, power) if instance.reserves else []
    sched = Schedule(power, list(reserve))
    sched.check_shape(instance)
    return sched
