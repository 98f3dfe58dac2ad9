"""Instance and solution files, plus system duplication.

Instance files are JSON documents with four sections::

    {
      "metadata": {"name": "...", "source": "..."},
      "units": [{"id": 1, "alpha": ..., "beta": ..., "gamma": ..., "e": ..., "f": ...,
                 "p_min": ..., "p_max": ..., "ramp_down": ..., "ramp_up": ...,
                 "initial_power": null}, ...],
      "demand": [D_1, ..., D_T],
      "reserves": [{"tau_hours": 1, "fraction_of_demand": 0.05},
                   {"tau_hours": "1/6", "requirement": [R_1, ..., R_T]}]
    }

Numbers may be given as ``"p/q"`` strings.  Solution files are plain text
(see :func:`write_solution`).
"""

from __future__ import annotations

import dataclasses
import json
import math
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .model import GeneratorUnit, ReserveProduct, Schedule, SystemInstance, \
    optimality_gap, schedule_cost

UNIT_FIELDS = ("id", "alpha", "beta", "gamma", "e", "f", "p_min", "p_max",
               "ramp_down", "ramp_up", "initial_power")
TOP_FIELDS = ("metadata", "units", "demand", "reserves")
METADATA_FIELDS = ("name", "source")
RESERVE_FIELDS = ("tau_hours", "requirement", "fraction_of_demand")


class InstanceFormatError(ValueError):
    pass


class SolutionFormatError(ValueError):
    pass


def bundled_path(name: str = "ten_unit.json") -> Path:
    return Path(str(resources.files("dedvpe") / "data" / name))


def _number(value, where: str) -> float:
    if isinstance(value, bool):
        raise InstanceFormatError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise InstanceFormatError(f"{where}: expected a number, got {value!r}")


def _reject_unknown(record: dict, allowed, where: str) -> None:
    if not isinstance(record, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    for key in record:
        if key not in allowed:
            raise InstanceFormatError(f"{where}: unknown field {key!r}")


def loads_instance(text: str) -> SystemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _reject_unknown(doc, TOP_FIELDS, "instance")
    meta = doc.get("metadata", {})
    _reject_unknown(meta, METADATA_FIELDS, "metadata")
    if "units" not in doc or "demand" not in doc:
        raise InstanceFormatError("instance needs 'units' and 'demand' sections")
    demand = [_number(d, f"demand[{t}]") for t, d in enumerate(doc["demand"])]
    units = []
    for k, rec in enumerate(doc["units"]):
        where = f"units[{k}]"
        _reject_unknown(rec, UNIT_FIELDS, where)
        missing = [f for f in UNIT_FIELDS[:-1] if f not in rec]
        if missing:
            raise InstanceFormatError(f"{where}: missing fields {missing}")
        kw = {f: _number(rec[f], f"{where}.{f}") for f in UNIT_FIELDS[1:-1]}
        p0 = rec.get("initial_power")
        kw["initial_power"] = None if p0 is None else _number(p0, f"{where}.initial_power")
        try:
            units.append(GeneratorUnit(id=int(rec["id"]), **kw))
        except ValueError as exc:
            raise InstanceFormatError(f"{where}: {exc}") from exc
    reserves = []
    for k, rec in enumerate(doc.get("reserves", [])):
        where = f"reserves[{k}]"
        _reject_unknown(rec, RESERVE_FIELDS, where)
        if ("requirement" in rec) == ("fraction_of_demand" in rec):
            raise InstanceFormatError(
                f"{where}: give exactly one of 'requirement' and 'fraction_of_demand'")
        if "tau_hours" not in rec:
            raise InstanceFormatError(f"{where}: missing field 'tau_hours'")
        tau = _number(rec["tau_hours"], f"{where}.tau_hours")
        if "requirement" in rec:
            req = [_number(r, f"{where}.requirement[{t}]")
                   for t, r in enumerate(rec["requirement"])]
        else:
            frac = _number(rec["fraction_of_demand"], f"{where}.fraction_of_demand")
            req = [frac * d for d in demand]
        if len(req) != len(demand):
            raise InstanceFormatError(
                f"{where}: requirement has {len(req)} entries, demand has {len(demand)}")
        try:
            reserves.append(ReserveProduct(tau, tuple(req)))
        except ValueError as exc:
            raise InstanceFormatError(f"{where}: {exc}") from exc
    try:
        return SystemInstance(tuple(units), tuple(demand), tuple(reserves),
                              name=str(meta.get("name", "")),
                              source=str(meta.get("source", "")))
    except ValueError as exc:
        raise InstanceFormatError(f"instance: {exc}") from exc


def parse_instance(path) -> SystemInstance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InstanceFormatError(f"{path}: {exc.strerror}") from exc
    try:
        return loads_instance(text)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc


def dumps_instance(instance: SystemInstance) -> str:
    units = []
    for u in instance.units:
        rec = dataclasses.asdict(u)
        if rec["initial_power"] is None:
            del rec["initial_power"]
        units.append(rec)
    doc = {
        "metadata": {"name": instance.name, "source": instance.source},
        "units": units,
        "demand": list(instance.demand),
        "reserves": [{"tau_hours": r.tau, "requirement": list(r.requirement)}
                     for r in instance.reserves],
    }
    return json.dumps(doc, indent=2) + "\n"


def write_instance(instance: SystemInstance, path) -> None:
    Path(path).write_text(dumps_instance(instance))


def load_bundled(name: str = "ten_unit.json") -> SystemInstance:
    return parse_instance(bundled_path(name))


# -- duplication -------------------------------------------------------------------

def duplicate_system(instance: SystemInstance, k: int) -> SystemInstance:
    """Replicate every unit ``k`` times; demand and reserve requirements scale by ``k``."""
    if k < 1:
        raise ValueError("duplication factor must be >= 1")
    units = []
    for copy in range(k):
        for u in instance.units:
            units.append(dataclasses.replace(u, id=len(units) + 1))
    reserves = tuple(ReserveProduct(r.tau, tuple(k * v for v in r.requirement))
                     for r in instance.reserves)
    name = instance.name if k == 1 else f"{instance.name}x{k}"
    return SystemInstance(tuple(units), tuple(k * d for d in instance.demand), reserves,
                          name=name, source=instance.source)


# -- solution files ------------------------------------------------------------------

META_KEYS = ("instance", "status", "true_cost", "milp_objective", "best_bound", "rgap",
             "ogap", "wall_time", "nodes", "config")


def _meta_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _table(matrix: np.ndarray, ids) -> list[str]:
    header = "t " + "".join(f" {'unit' + str(i):>9}" for i in ids)
    lines = [header]
    for t in range(matrix.shape[1]):
        lines.append(f"{t + 1:<2}" + "".join(f" {v:9.2f}" for v in matrix[:, t]))
    return lines


def format_solution(instance: SystemInstance, schedule: Optional[Schedule],
                    meta: dict) -> str:
    """Render a solution file.

    Metadata lines ``key: value`` come first, followed by a ``[power]`` table
    (one row per period, MW with two decimals) and one ``[reserve r]`` table
    per reserve product.  ``true_cost`` and ``ogap`` are derived here from the
    schedule and ``best_bound``.
    """
    meta = dict(meta)
    notes = []
    if schedule is not None:
        schedule.check_shape(instance)
        power = np.round(schedule.power, 2)
        rounded = Schedule(power, [np.round(r, 2) for r in schedule.reserve])
        meta["true_cost"] = schedule_cost(instance, rounded)
        lb = meta.get("best_bound")
        if isinstance(lb, float) and lb > 0 and math.isfinite(lb):
            meta["ogap"] = optimality_gap(meta["true_cost"], lb)
        for i, u in enumerate(instance.units):
            if np.all(power[i] == power[i, 0]):
                notes.append(f"note: output of unit {u.id} is always {power[i, 0]:.2f} MW")
    lines = ["# dedvpe solution"]
    for key in META_KEYS:
        if key in meta and meta[key] is not None:
            lines.append(f"{key}: {_meta_value(meta[key])}")
    if schedule is not None:
        ids = [u.id for u in instance.units]
        lines.append("[power]")
        lines.extend(_table(power, ids))
        for r, SR in enumerate(schedule.reserve):
            lines.append(f"[reserve {r + 1}]")
            lines.extend(_table(np.round(SR, 2), ids))
    lines.extend(notes)
    return "\n".join(lines) + "\n"


def write_solution(instance: SystemInstance, schedule: Optional[Schedule], meta: dict,
                   path) -> None:
    Path(path).write_text(format_solution(instance, schedule, meta))


def _parse_meta(key: str, raw: str):
    if key == "config":
        return json.loads(raw)
    if key in ("instance", "status"):
        return raw
    if key == "nodes":
        return int(raw)
    return float(raw)


def loads_solution(text: str):
    """Parse a solution file into ``(schedule or None, metadata dict)``."""
    meta = {}
    tables = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("note:"):
            continue
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            tables[current] = []
            continue
        if current is None:
            key, sep, raw = s.partition(":")
            if not sep or key.strip() not in META_KEYS:
                raise SolutionFormatError(f"line {lineno}: unexpected metadata {s!r}")
            try:
                meta[key.strip()] = _parse_meta(key.strip(), raw.strip())
            except ValueError as exc:
                raise SolutionFormatError(f"line {lineno}: bad value for {key}") from exc
            continue
        tok = s.split()
        if tok[0] == "t":
            continue
        try:
            tables[current].append([float(v) for v in tok[1:]])
        except ValueError as exc:
            raise SolutionFormatError(f"line {lineno}: non-numeric table entry") from exc
    if "power" not in tables:
        return None, meta
    power = np.array(tables["power"], dtype=float).T
    reserve = []
    r = 1
    while f"reserve {r}" in tables:
        reserve.append(np.array(tables[f"reserve {r}"], dtype=float).T)
        r += 1
    try:
        return Schedule(power, reserve), meta
    except ValueError as exc:
        raise SolutionFormatError(str(exc)) from exc


def parse_solution(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SolutionFormatError(f"{path}: {exc.strerror}") from exc
    return loads_solution(text)
