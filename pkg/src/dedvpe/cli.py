"""Command-line interface.

Exit codes: 0 success, 1 infeasible result or limit reached, 2 usage or
parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .bnb import GAP_REACHED, OPTIMAL_STATUS, SolverConfig
from .io import (InstanceFormatError, SolutionFormatError, duplicate_system, format_solution,
                 parse_instance, parse_solution, write_instance)
from .linearize import approx_error_report, build_piecewise
from .milp import build_milp, write_mps
from .model import DEFAULT_TOL, make_schedule, schedule_cost, validate_schedule
from .oracle import OracleError, TinyLimits, enumerate_solve, random_instance
from .pipeline import piecewise_summary, solve_dispatch

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dedvpe", description="Dynamic economic dispatch with valve-point "
                                            "costs via piecewise-linear MILP")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve an instance by branch-and-bound")
    s.add_argument("instance")
    s.add_argument("--m-segments", type=int, default=2)
    s.add_argument("--rgap", type=float, default=0.0025)
    s.add_argument("--time-limit", type=float, default=math.inf)
    s.add_argument("--node-limit", type=int, default=10**9)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--branching", choices=("most-fractional", "pseudo-cost"),
                   default="most-fractional")
    s.add_argument("--node-selection", choices=("best-bound", "depth-first-plunge"),
                   default="best-bound")
    s.add_argument("--trace", help="write a per-node trace (JSON lines)")
    s.add_argument("--dump-model", help="write the MILP (.mps for MPS, else native format)")
    s.add_argument("--out", help="solution file (default: stdout)")

    v = sub.add_parser("validate", help="check a solution against an instance")
    v.add_argument("instance")
    v.add_argument("solution")
    v.add_argument("--tol", type=float, default=DEFAULT_TOL)

    e = sub.add_parser("eval-cost", help="true generation cost of a solution")
    e.add_argument("instance")
    e.add_argument("solution")

    lz = sub.add_parser("linearize", help="per-unit linearisation report (JSON)")
    lz.add_argument("instance")
    lz.add_argument("--m-segments", type=int, required=True)
    lz.add_argument("--samples", type=int)

    o = sub.add_parser("oracle", help="exact optimum by enumeration (tiny instances only)")
    o.add_argument("instance")
    o.add_argument("--m-segments", type=int, required=True)
    o.add_argument("--max-assignments", type=int, default=TinyLimits().max_assignments)

    d = sub.add_parser("duplicate", help="replicate the units of an instance")
    d.add_argument("instance")
    d.add_argument("-k", type=int, required=True)
    d.add_argument("--out", required=True)

    g = sub.add_parser("gen", help="generate a random tiny instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--units", type=int, required=True)
    g.add_argument("--periods", type=int, required=True)
    g.add_argument("--max-segments", type=int, default=4)
    g.add_argument("--out", required=True)
    return p


def cmd_solve(args) -> int:
    instance = parse_instance(args.instance)
    config = SolverConfig(rgap_target=args.rgap, time_limit=args.time_limit,
                          node_limit=args.node_limit, threads=args.threads, seed=args.seed,
                          branching_rule=args.branching, node_selection=args.node_selection,
                          trace_path=args.trace)
    if instance.statically_infeasible:
        print(f"warning: demand outside unit limits in periods "
              f"{[t + 1 for t in instance.infeasible_periods()]}", file=sys.stderr)
    if args.dump_model:
        pwcs = [build_piecewise(u, args.m_segments) for u in instance.units]
        milp = build_milp(instance, pwcs)
        with open(args.dump_model, "w") as fh:
            if args.dump_model.lower().endswith(".mps"):
                write_mps(milp, fh)
            else:
                fh.write(milp.dumps())
    out = solve_dispatch(instance, args.m_segments, config)
    meta = out.metadata()
    meta["config"] = {"m_segments": args.m_segments, "rgap_target": args.rgap,
                      "time_limit": None if math.isinf(args.time_limit) else args.time_limit,
                      "seed": args.seed, "branching": args.branching,
                      "node_selection": args.node_selection}
    if not out.all_lower_approx:
        bad = [p.unit_id for p, r in zip(out.pwcs, out.error_reports) if not r.is_lower_approx]
        print(f"warning: linearisation over-estimates the true cost for units {bad}; "
              f"the bound is not a certified lower bound", file=sys.stderr)
    text = format_solution(instance, out.schedule, meta)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    res = out.result
    print(f"status {res.status}  milp {res.incumbent_obj:.6g}  bound {res.best_bound:.6g}  "
          f"rgap {res.achieved_rgap:.4%}  cost {out.true_cost:.6g}"
          + (f"  ogap {out.ogap:.4%}" if out.ogap is not None else ""), file=sys.stderr)
    return EXIT_OK if res.status in (GAP_REACHED, OPTIMAL_STATUS) else EXIT_FAIL


def _load_schedule(instance, path):
    schedule, meta = parse_solution(path)
    if schedule is None:
        raise SolutionFormatError(f"{path}: no schedule (status {meta.get('status')})")
    return make_schedule(instance, schedule.power, schedule.reserve or None)


def cmd_validate(args) -> int:
    instance = parse_instance(args.instance)
    schedule = _load_schedule(instance, args.solution)
    report = validate_schedule(instance, schedule, args.tol)
    print(report.summary())
    for v in report.violations:
        unit = "-" if v.unit is None else instance.units[v.unit].id
        print(f"  {v.kind:20s} unit {unit:>4} period {v.period + 1:>3}  {v.magnitude:.6g} MW")
    return EXIT_OK if report.is_feasible else EXIT_FAIL


def cmd_eval_cost(args) -> int:
    instance = parse_instance(args.instance)
    schedule = _load_schedule(instance, args.solution)
    print(f"{schedule_cost(instance, schedule):.6f}")
    return EXIT_OK


def cmd_linearize(args) -> int:
    instance = parse_instance(args.instance)
    units = []
    for u in instance.units:
        pwc = build_piecewise(u, args.m_segments)
        units.append(piecewise_summary(pwc, approx_error_report(u, pwc, args.samples)))
    json.dump({"instance": instance.name, "m_segments": args.m_segments, "units": units},
              sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    instance = parse_instance(args.instance)
    pwcs = [build_piecewise(u, args.m_segments) for u in instance.units]
    milp = build_milp(instance, pwcs)
    res = enumerate_solve(milp, TinyLimits(args.max_assignments), instance=instance,
                          m_segments=args.m_segments)
    doc = {"status": res.status, "assignments": res.nodes_processed,
           "objective": None if res.incumbent is None else res.incumbent_obj}
    print(json.dumps(doc))
    return EXIT_OK if res.incumbent is not None else EXIT_FAIL


def cmd_duplicate(args) -> int:
    write_instance(duplicate_system(parse_instance(args.instance), args.k), args.out)
    return EXIT_OK


def cmd_gen(args) -> int:
    write_instance(random_instance(args.seed, args.units, args.periods,
                                   max_segments=args.max_segments), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "eval-cost": cmd_eval_cost,
            "linearize": cmd_linearize, "oracle": cmd_oracle, "duplicate": cmd_duplicate,
            "gen": cmd_gen}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InstanceFormatError, SolutionFormatError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main())
