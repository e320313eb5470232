"""Best-bound branch and bound over LP relaxations for 0-1 programs."""

from __future__ import annotations

import heapq
import logging
import math
import time

import numpy as np

from .problem import BilpError, BilpProblem, BilpSolution, Status
from .simplex import solve_lp

log = logging.getLogger(__name__)

_INT_TOL = 1e-6


def _round_up(p: BilpProblem, x_lp, tol: float) -> np.ndarray | None:
    x = (np.asarray(x_lp) >= 0.5).astype(np.int8)
    return x if p.is_feasible(x, tol) else None


def solve_branch_and_bound(p: BilpProblem, time_limit: float | None = None,
                           gap_tol: float = 0.0, incumbents=(), heuristic=None,
                           lp_method: str = "auto", node_limit: int | None = None,
                           fixed: dict | None = None, feas_tol: float = 1e-9,
                           relax_rows=None) -> BilpSolution:
    """Maximize a 0-1 program exactly (or to ``gap_tol``) by branch and bound.

    Parameters
    ----------
    p : the problem.
    time_limit : seconds; on expiry the best incumbent is returned as
        ``Feasible`` with its gap. Expiry without any incumbent raises.
    gap_tol : relative gap at which a node is pruned; 0 asks for a proof.
    incumbents : candidate assignments (e.g. greedy or previous solutions);
        feasible ones seed the incumbent.
    heuristic : optional ``f(x_lp) -> assignment or None`` called on
        fractional node relaxations.
    lp_method : ``auto`` | ``dense`` | ``highs``.
    fixed : optional {variable: 0/1} imposed on every node.
    feas_tol : row tolerance (relative to row scale) for accepting assignments.
    relax_rows : optional boolean mask of the rows kept in the LP relaxations.
        Any subset of rows still gives valid bounds; assignments are always
        checked against every row, so the result stays exact. Useful for rows
        that never cut off an LP optimum but make the LP expensive.

    Nodes are taken best bound first; the branching variable is the most
    fractional one, and the up branch is explored first on equal bounds.
    """
    t0 = time.perf_counter()
    n = p.n
    if relax_rows is None:
        A_lp, senses_lp, rhs_lp = p.A, p.senses, p.rhs
    else:
        keep = np.asarray(relax_rows, bool)
        if keep.shape != (p.m,):
            raise ValueError(f"relax_rows must have {p.m} entries")
        A_lp, senses_lp, rhs_lp = p.A[keep], p.senses[keep], p.rhs[keep]
    integral_obj = bool(np.all(p.c == np.round(p.c)))
    slack = 1e-7 * (1.0 + np.abs(p.c).sum())

    best_x, best_val = None, -math.inf

    def offer(x):
        nonlocal best_x, best_val
        if x is None:
            return
        x = np.asarray(x).astype(np.int8)
        if not p.is_feasible(x, feas_tol):
            return
        v = p.objective(x)
        if v > best_val or (v == best_val and tuple(x) < tuple(best_x)):
            best_x, best_val = x, v

    def beats(bound):
        """Can a node with this LP bound hold something better than the incumbent?"""
        if best_x is None or math.isinf(bound):
            return True
        if integral_obj:
            return math.floor(bound + _INT_TOL) > best_val + gap_tol * max(1.0, abs(best_val))
        return bound + slack > best_val + gap_tol * max(1.0, abs(best_val)) + 1e-12

    for x in incumbents:
        offer(x)
    # an incumbent attaining the sum of positive costs needs no search
    trivial = math.fsum(np.maximum(p.c, 0.0))
    if best_x is not None and not fixed and best_val >= trivial:
        return BilpSolution(best_x, best_val, Status.OPTIMAL, 0, time.perf_counter() - t0,
                            best_val, 0.0, info={"root_bound": math.nan})

    root = np.full(n, -1, dtype=np.int8)
    for j, v in (fixed or {}).items():
        root[j] = v
    heap = [(-math.inf, 0, root)]
    seq = 1
    nodes = 0
    root_bound = math.nan
    status = Status.OPTIMAL
    open_bound = -math.inf
    while heap:
        neg, _, fix = heap[0]
        if not beats(-neg):
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit or \
                node_limit is not None and nodes >= node_limit:
            status = Status.FEASIBLE
            open_bound = max(-h[0] for h in heap)
            break
        heapq.heappop(heap)
        nodes += 1
        lo = (fix == 1).astype(float)
        hi = (fix != 0).astype(float)
        lp = solve_lp(p.c, A_lp, senses_lp, rhs_lp, lo, hi, lp_method)
        if lp.status == "unbounded":
            raise BilpError("LP relaxation is unbounded")
        if lp.status == "infeasible":
            continue
        bound = lp.fun
        if nodes == 1:
            root_bound = bound
            offer(_round_up(p, lp.x, feas_tol))
        if not beats(bound):
            continue
        frac = np.abs(lp.x - np.round(lp.x))
        free = fix < 0
        if np.all(frac[free] <= _INT_TOL):
            x = np.round(lp.x).astype(np.int8)
            offer(x)
            if p.is_feasible(x, feas_tol):
                continue
            cand = np.flatnonzero(free)
            if not len(cand):
                continue
            j = int(cand[np.argmax(frac[cand])])
        else:
            if heuristic is not None:
                offer(heuristic(lp.x))
                if not beats(bound):
                    continue
            score = np.where(free, np.abs(lp.x - 0.5), np.inf)
            j = int(np.argmin(score))
        for v in (1, 0):
            child = fix.copy()
            child[j] = v
            heapq.heappush(heap, (-bound, seq, child))
            seq += 1

    dt = time.perf_counter() - t0
    if status == Status.FEASIBLE and best_x is None:
        raise BilpError("time or node limit reached before any feasible assignment was found")
    if best_x is None:
        return BilpSolution(None, -math.inf, Status.INFEASIBLE, nodes, dt,
                            info={"root_bound": root_bound})
    if status == Status.FEASIBLE:
        bound = max(open_bound, best_val)
        gap = (bound - best_val) / max(1.0, abs(best_val))
    else:
        bound, gap = best_val, 0.0
    return BilpSolution(best_x, best_val, status, nodes, dt, bound, gap,
                        info={"root_bound": root_bound})
