"""0-1 integer linear programming: branch and bound, exhaustive oracle, greedy warm start."""

from .branch_bound import solve_branch_and_bound
from .exhaustive import MAX_VARS, solve_exhaustive
from .greedy import greedy_max_coverage
from .problem import (EQ, GE, LE, BilpError, BilpProblem, BilpSolution, Status,
                      exact_violation, verify)
from .simplex import LPResult, simplex_bounded, simplex_highs, solve_lp

__all__ = [
    "EQ", "GE", "LE", "MAX_VARS", "BilpError", "BilpProblem", "BilpSolution", "LPResult",
    "Status", "exact_violation", "greedy_max_coverage", "simplex_bounded", "simplex_highs",
    "solve_branch_and_bound", "solve_exhaustive", "solve_lp", "verify",
]
