"""Dynamic economic dispatch with valve-point costs as a piecewise-linear MILP."""

from .bnb import BnbResult, SolverConfig, solve_milp
from .io import duplicate_system, load_bundled, parse_instance, parse_solution, write_solution
from .linearize import (PiecewiseCost, approx_cost, approx_error_report, breakpoints,
                        build_piecewise)
from .lp import LpSolution, solve_lp
from .milp import MilpInstance, build_milp, extract_solution
from .model import (GeneratorUnit, ReserveProduct, Schedule, SystemInstance, ViolationReport,
                    optimality_gap, quadratic_cost, schedule_cost, true_cost,
                    validate_schedule, vpe_cost)
from .oracle import TinyLimits, enumerate_solve, random_instance
from .pipeline import solve_dispatch

__version__ = "0.1.0"
