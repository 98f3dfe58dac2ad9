"""Assembly of the segment-binary MILP for dispatch with valve-point costs.

Column layout (all 0-based):

* ``P[i,t]``        unit output, bounds ``[p_min, p_max]``
* ``Pseg[l,i,t]``   output attributed to segment ``l``, bounds ``[0, a_l]``
* ``U[l,i,t]``      binary selecting segment ``l``
* ``SR[r,i,t]``     reserve of product ``r``, bounds ``[0, tau_r * ramp_up]``

Rows keep their sense (``<=``, ``=``, ``>=``) instead of being normalised.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .linearize import PiecewiseCost
from .model import Schedule, SystemInstance

SENSES = ("<=", "=", ">=")
FORMAT_HEADER = "# dedvpe-milp 1"


@dataclass(frozen=True)
class Row:
    cols: tuple
    vals: tuple
    sense: str
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class SegmentGroup:
    """One ``(unit, period)`` pair: its output column and segment columns."""

    power_col: int
    segment_cols: tuple
    binary_cols: tuple
    lows: tuple
    highs: tuple


@dataclass(frozen=True, eq=False)
class MilpInstance:
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    is_binary: np.ndarray
    rows: tuple
    col_names: tuple
    segment_groups: tuple = ()
    warnings: tuple = ()
    column_map: dict = field(init=False, repr=False)

    def __post_init__(self):
        for name, dtype in (("objective", float), ("lower", float),
                            ("upper", float), ("is_binary", bool)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.objective)
        if not (len(self.lower) == len(self.upper) == len(self.is_binary)
                == len(self.col_names) == n):
            raise ValueError("column arrays have inconsistent lengths")
        cmap = {name: j for j, name in enumerate(self.col_names)}
        if len(cmap) != n:
            raise ValueError("duplicate column names")
        object.__setattr__(self, "column_map", cmap)
        object.__setattr__(self, "rows", tuple(self.rows))
        b = self.is_binary
        if np.any(self.lower[b] < 0) or np.any(self.upper[b] > 1):
            raise ValueError("binary columns must lie within [0, 1]")
        for k, row in enumerate(self.rows):
            if row.sense not in SENSES:
                raise ValueError(f"row {k}: unknown sense {row.sense!r}")
            if len(set(row.cols)) != len(row.cols):
                raise ValueError(f"row {k}: duplicate column")
            if row.cols and (min(row.cols) < 0 or max(row.cols) >= n):
                raise ValueError(f"row {k}: column index out of range")

    @property
    def num_cols(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        indptr = [0]
        indices, data = [], []
        for row in self.rows:
            indices.extend(row.cols)
            data.extend(row.vals)
            indptr.append(len(indices))
        return sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                              np.array(indptr)), shape=(self.num_rows, self.num_cols))

    @cached_property
    def senses(self) -> np.ndarray:
        return np.array([r.sense for r in self.rows], dtype=object)

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    def objective_value(self, x) -> float:
        return float(np.dot(self.objective, x))

    def max_row_violation(self, x) -> float:
        """Largest violation over rows and column bounds at point ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.matrix @ x
        viol = np.zeros(self.num_rows)
        le = self.senses == "<="
        ge = self.senses == ">="
        eq = self.senses == "="
        viol[le] = act[le] - self.rhs[le]
        viol[ge] = self.rhs[ge] - act[ge]
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        bound = np.maximum(self.lower - x, x - self.upper)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0), 0.0))

    # -- interchange format ----------------------------------------------------

    def dumps(self) -> str:
        buf = io.StringIO()
        write_model(self, buf)
        return buf.getvalue()


def _fmt(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def write_model(milp: MilpInstance, fh) -> None:
    """Write the plain-text interchange format.

    ::

        # dedvpe-milp 1
        COLUMNS <n>
        <name> <lower> <upper> <B|C> <objective>
        ROWS <m>
        <name> <L|E|G> <rhs> <k> <col>:<coef> ...
        END

    Column references in rows are 0-based indices into the COLUMNS list.
    """
    sense_code = {"<=": "L", "=": "E", ">=": "G"}
    fh.write(FORMAT_HEADER + "\n")
    fh.write(f"COLUMNS {milp.num_cols}\n")
    for j, name in enumerate(milp.col_names):
        kind = "B" if milp.is_binary[j] else "C"
        fh.write(f"{name} {_fmt(milp.lower[j])} {_fmt(milp.upper[j])} {kind} "
                 f"{_fmt(milp.objective[j])}\n")
    fh.write(f"ROWS {milp.num_rows}\n")
    for k, row in enumerate(milp.rows):
        terms = " ".join(f"{c}:{_fmt(v)}" for c, v in zip(row.cols, row.vals))
        name = row.name or f"r{k}"
        fh.write(f"{name} {sense_code[row.sense]} {_fmt(row.rhs)} {len(row.cols)} {terms}\n")
    fh.write("END\n")


def read_model(fh) -> MilpInstance:
    sense_of = {"L": "<=", "E": "=", "G": ">="}
    lines = iter(enumerate(fh, start=1))

    def next_line():
        for lineno, line in lines:
            line = line.strip()
            if line and not line.startswith("#"):
                return lineno, line.split()
        raise ValueError("unexpected end of model file")

    lineno, tok = next_line()
    if tok[0] != "COLUMNS":
        raise ValueError(f"line {lineno}: expected COLUMNS")
    names, lo, hi, binary, obj = [], [], [], [], []
    for _ in range(int(tok[1])):
        lineno, tok = next_line()
        if len(tok) != 5 or tok[3] not in ("B", "C"):
            raise ValueError(f"line {lineno}: malformed column record")
        names.append(tok[0])
        lo.append(float(tok[1]))
        hi.append(float(tok[2]))
        binary.append(tok[3] == "B")
        obj.append(float(tok[4]))
    lineno, tok = next_line()
    if tok[0] != "ROWS":
        raise ValueError(f"line {lineno}: expected ROWS")
    rows = []
    for _ in range(int(tok[1])):
        lineno, tok = next_line()
        try:
            k = int(tok[3])
            terms = [t.split(":") for t in tok[4:4 + k]]
            rows.append(Row(tuple(int(c) for c, _ in terms),
                            tuple(float(v) for _, v in terms),
                            sense_of[tok[1]], float(tok[2]), tok[0]))
        except (IndexError, KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed row record") from exc
    lineno, tok = next_line()
    if tok[0] != "END":
        raise ValueError(f"line {lineno}: expected END")
    return MilpInstance(np.array(obj), np.array(lo), np.array(hi), np.array(binary),
                        tuple(rows), tuple(names))


def write_mps(milp: MilpInstance, fh, name: str = "DEDVPE") -> None:
    """Free-format MPS export for cross-checking with external MILP solvers."""
    sense_code = {"<=": "L", "=": "E", ">=": "G"}
    row_names = [f"R{k}" for k in range(milp.num_rows)]
    fh.write(f"NAME {name}\nROWS\n N OBJ\n")
    for rname, row in zip(row_names, milp.rows):
        fh.write(f" {sense_code[row.sense]} {rname}\n")
    by_col = [[] for _ in range(milp.num_cols)]
    for rname, row in zip(row_names, milp.rows):
        for c, v in zip(row.cols, row.vals):
            by_col[c].append((rname, v))
    fh.write("COLUMNS\n")
    in_int = False
    for j, cname in enumerate(milp.col_names):
        cname = _mps_name(cname)
        if milp.is_binary[j] != in_int:
            marker = "INTORG" if not in_int else "INTEND"
            fh.write(f" MARKER 'MARKER' '{marker}'\n")
            in_int = not in_int
        fh.write(f" {cname} OBJ {_fmt(milp.objective[j])}\n")
        for rname, v in by_col[j]:
            fh.write(f" {cname} {rname} {_fmt(v)}\n")
    if in_int:
        fh.write(" MARKER 'MARKER' 'INTEND'\n")
    fh.write("RHS\n")
    for rname, row in zip(row_names, milp.rows):
        if row.rhs != 0:
            fh.write(f" RHS {rname} {_fmt(row.rhs)}\n")
    fh.write("BOUNDS\n")
    for j, cname in enumerate(milp.col_names):
        cname = _mps_name(cname)
        lo, hi = milp.lower[j], milp.upper[j]
        if milp.is_binary[j] and lo == 0 and hi == 1:
            fh.write(f" BV BND {cname}\n")
            continue
        if lo == hi:
            fh.write(f" FX BND {cname} {_fmt(lo)}\n")
            continue
        if lo == -math.inf and hi == math.inf:
            fh.write(f" FR BND {cname}\n")
            continue
        fh.write(f" LO BND {cname} {_fmt(lo)}\n" if lo != -math.inf else f" MI BND {cname}\n")
        if hi != math.inf:
            fh.write(f" UP BND {cname} {_fmt(hi)}\n")
    fh.write("ENDATA\n")


def _mps_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace(",", "_")


# -- builder ---------------------------------------------------------------------

def p_name(i, t):
    return f"P[{i},{t}]"


def seg_name(l, i, t):
    return f"Pseg[{l},{i},{t}]"


def bin_name(l, i, t):
    return f"U[{l},{i},{t}]"


def sr_name(r, i, t):
    return f"SR[{r},{i},{t}]"


def build_milp(instance: SystemInstance, pwcs: Sequence[PiecewiseCost]) -> MilpInstance:
    """Assemble the segment-binary MILP of a dispatch instance."""
    units = instance.units
    N, T = instance.num_units, instance.horizon
    if len(pwcs) != N:
        raise ValueError(f"{len(pwcs)} piecewise costs for {N} units")
    for u, pwc in zip(units, pwcs):
        a = pwc.breakpoints
        if pwc.unit_id != u.id or a[0] != u.p_min or a[-1] != u.p_max:
            raise ValueError(f"piecewise cost {pwc.unit_id} does not match unit {u.id}")

    names, obj, lo, hi, binary = [], [], [], [], []

    def add_col(name, lower, upper, cost=0.0, is_bin=False):
        names.append(name)
        lo.append(lower)
        hi.append(upper)
        obj.append(cost)
        binary.append(is_bin)
        return len(names) - 1

    pcol = {}
    for t in range(T):
        for i, u in enumerate(units):
            pcol[i, t] = add_col(p_name(i, t), u.p_min, u.p_max)

    rows = []
    groups = []
    for t in range(T):
        for i, pwc in enumerate(pwcs):
            a = pwc.breakpoints
            L = pwc.num_segments
            segs = [add_col(seg_name(l, i, t), 0.0, a[l + 1], pwc.slopes[l])
                    for l in range(L)]
            bins = [add_col(bin_name(l, i, t), 0.0, 1.0, pwc.intercepts[l], True)
                    for l in range(L)]
            groups.append(SegmentGroup(pcol[i, t], tuple(segs), tuple(bins),
                                       tuple(a[:-1]), tuple(a[1:])))
            rows.append(Row((pcol[i, t], *segs), (1.0,) + (-1.0,) * L, "=", 0.0,
                            f"couple[{i},{t}]"))
            for l in range(L):
                rows.append(Row((segs[l], bins[l]), (1.0, -a[l + 1]), "<=", 0.0,
                                f"segub[{l},{i},{t}]"))
            for l in range(L):
                rows.append(Row((segs[l], bins[l]), (1.0, -a[l]), ">=", 0.0,
                                f"seglb[{l},{i},{t}]"))
            rows.append(Row(tuple(bins), (1.0,) * L, "=", 1.0, f"onesegment[{i},{t}]"))

    for t in range(T):
        rows.append(Row(tuple(pcol[i, t] for i in range(N)), (1.0,) * N, "=",
                        instance.demand[t], f"balance[{t}]"))

    for i, u in enumerate(units):
        if u.initial_power is not None:
            rows.append(Row((pcol[i, 0],), (1.0,), "<=", u.initial_power + u.ramp_up,
                            f"rampup[{i},0]"))
            rows.append(Row((pcol[i, 0],), (1.0,), ">=", u.initial_power - u.ramp_down,
                            f"rampdown[{i},0]"))
        for t in range(1, T):
            cols = (pcol[i, t], pcol[i, t - 1])
            rows.append(Row(cols, (1.0, -1.0), "<=", u.ramp_up, f"rampup[{i},{t}]"))
            rows.append(Row(cols, (1.0, -1.0), ">=", -u.ramp_down, f"rampdown[{i},{t}]"))

    for r, product in enumerate(instance.reserves):
        srcol = {}
        for t in range(T):
            for i, u in enumerate(units):
                srcol[i, t] = add_col(sr_name(r, i, t), 0.0, product.tau * u.ramp_up)
                rows.append(Row((srcol[i, t], pcol[i, t]), (1.0, 1.0), "<=", u.p_max,
                                f"headroom[{r},{i},{t}]"))
        for t in range(T):
            rows.append(Row(tuple(srcol[i, t] for i in range(N)), (1.0,) * N, ">=",
                            product.requirement[t], f"reserve[{r},{t}]"))

    warnings = ()
    bad = instance.infeasible_periods()
    if bad:
        warnings = (f"demand outside [sum p_min, sum p_max] in periods {bad}",)
    return MilpInstance(np.array(obj), np.array(lo), np.array(hi), np.array(binary),
                        tuple(rows), tuple(names), tuple(groups), warnings)


def extract_solution(milp: MilpInstance, x, instance: SystemInstance) -> Schedule:
    x = np.asarray(x, dtype=float)
    if x.shape != (milp.num_cols,):
        raise ValueError(f"solution has {x.size} entries, model has {milp.num_cols} columns")
    N, T = instance.num_units, instance.horizon
    cmap = milp.column_map
    power = np.array([[x[cmap[p_name(i, t)]] for t in range(T)] for i in range(N)])
    reserve = [np.array([[x[cmap[sr_name(r, i, t)]] for t in range(T)] for i in range(N)])
               for r in range(len(instance.reserves))]
    return Schedule(power, reserve)


def column_count(instance: SystemInstance, seg_counts: Sequence[int]) -> int:
    N, T, R = instance.num_units, instance.horizon, len(instance.reserves)
    return T * (N + 2 * sum(seg_counts)) + R * N * T


def row_count(instance: SystemInstance, seg_counts: Sequence[int]) -> int:
    N, T, R = instance.num_units, instance.horizon, len(instance.reserves)
    with_p0 = sum(u.initial_power is not None for u in instance.units)
    per_period = sum(2 + 2 * L for L in seg_counts)
    return (T * per_period + T + 2 * N * (T - 1) + 2 * with_p0
            + R * (N * T + T))


def fixed_binary_bounds(milp: MilpInstance, choice: Sequence[int],
                        lower: Optional[np.ndarray] = None,
                        upper: Optional[np.ndarray] = None):
    """Bounds with every segment group pinned to the segment in ``choice``."""
    lo = np.array(milp.lower if lower is None else lower, dtype=float)
    hi = np.array(milp.upper if upper is None else upper, dtype=float)
    for g, s in zip(milp.segment_groups, choice):
        for l, (scol, bcol) in enumerate(zip(g.segment_cols, g.binary_cols)):
            if l == s:
                lo[bcol] = hi[bcol] = 1.0
                lo[scol] = max(lo[scol], g.lows[l])
                hi[scol] = min(hi[scol], g.highs[l])
            else:
                lo[bcol] = hi[bcol] = 0.0
                lo[scol] = 0.0
                hi[scol] = 0.0
        lo[g.power_col] = max(lo[g.power_col], g.lows[s])
        hi[g.power_col] = min(hi[g.power_col], g.highs[s])
    return lo, hi
