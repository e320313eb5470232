"""Brute-force enumeration of every 0-1 assignment (test oracle)."""

from __future__ import annotations

import math
import time

import numpy as np

from .problem import EQ, GE, LE, BilpError, BilpProblem, BilpSolution, Status

MAX_VARS = 24
_CHUNK = 1 << 16


def _bits(start: int, stop: int, n: int) -> np.ndarray:
    # x1 is the most significant bit, so ascending codes are lexicographic order
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.float64)


def solve_exhaustive(p: BilpProblem, tol: float = 1e-9) -> BilpSolution:
    """Globally optimal assignment by enumerating all 2^n points.

    Ties are broken towards the lexicographically smallest assignment.
    """
    if p.n > MAX_VARS:
        raise BilpError(f"exhaustive search refused for n={p.n} > {MAX_VARS}")
    t0 = time.perf_counter()
    A = p.A.toarray()
    scale = tol * (1.0 + np.abs(p.rhs) + np.abs(A).sum(axis=1))
    le, ge, eq = p.senses == LE, p.senses == GE, p.senses == EQ
    best_val, best_x = -math.inf, None
    total = 1 << p.n
    for start in range(0, total, _CHUNK):
        X = _bits(start, min(total, start + _CHUNK), p.n)
        if p.m:
            act = X @ A.T - p.rhs
            ok = np.all((act <= scale) | ~le, axis=1)
            ok &= np.all((act >= -scale) | ~ge, axis=1)
            ok &= np.all((np.abs(act) <= scale) | ~eq, axis=1)
            X = X[ok]
        if not len(X):
            continue
        vals = X @ p.c
        top = vals.max()
        # exact objective on near-ties, first (smallest) code wins
        for r in np.flatnonzero(vals >= top - 1e-9 * (1.0 + abs(top))):
            v = p.objective(X[r])
            if v > best_val:
                best_val, best_x = v, X[r].astype(np.int8)
    dt = time.perf_counter() - t0
    if best_x is None:
        return BilpSolution(None, -math.inf, Status.INFEASIBLE, total, dt)
    return BilpSolution(best_x, best_val, Status.OPTIMAL, total, dt, bound=best_val)
