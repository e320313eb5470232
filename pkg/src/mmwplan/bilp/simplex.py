"""LP relaxations: a dense bounded-variable primal simplex, and a dispatcher
that hands large relaxations to HiGHS through scipy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .problem import EQ, GE, LE, BilpError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
DENSE_LIMIT = 250_000  # rows * columns handled by the dense routine in "auto" mode


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    fun: float
    iterations: int = 0


class _Tableau:
    """Dense tableau for  max d.x  s.t.  M x = b,  lo <= x <= hi."""

    def __init__(self, M, b, lo, hi, basis, xval):
        self.T = M.copy()
        self.lo, self.hi = lo, hi
        self.basis = basis
        self.x = xval
        self.M, self.b = M, b
        self.iterations = 0

    def _refactor(self):
        # rebuild tableau and basic values from the original data
        B = self.M[:, self.basis]
        self.T = np.linalg.solve(B, self.M)
        nb = np.ones(self.M.shape[1], bool)
        nb[self.basis] = False
        rhs = self.b - self.M[:, nb] @ self.x[nb]
        self.x[self.basis] = np.linalg.solve(B, rhs)

    def optimize(self, d, max_iter):
        m, ntot = self.T.shape
        T, lo, hi, x = self.T, self.lo, self.hi, self.x
        bland = False
        stall = 0
        is_basic = np.zeros(ntot, bool)
        is_basic[self.basis] = True
        while True:
            if self.iterations >= max_iter:
                raise BilpError("simplex iteration limit reached")
            red = d - d[self.basis] @ T
            red[is_basic] = 0.0
            movable = hi > lo
            up = movable & (red > PIVOT_TOL) & (x <= lo + 1e-12)
            dn = movable & (red < -PIVOT_TOL) & (x >= hi - 1e-12)
            cand = np.flatnonzero(up | dn)
            if not len(cand):
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(red[cand]))])
            delta = 1.0 if up[q] else -1.0
            col = T[:, q] * delta
            theta = hi[q] - lo[q]
            leave = -1
            xb = x[self.basis]
            lb, ub = lo[self.basis], hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.full(m, np.inf)
                pos = col > PIVOT_TOL
                neg = col < -PIVOT_TOL
                lim[pos] = (xb[pos] - lb[pos]) / col[pos]
                lim[neg] = (ub[neg] - xb[neg]) / (-col[neg])
            lim = np.maximum(lim, 0.0)
            if len(lim):
                tmin = lim.min()
                if tmin < theta:
                    ties = np.flatnonzero(lim <= tmin + 1e-12)
                    if bland:
                        leave = int(ties[np.argmin(np.asarray(self.basis)[ties])])
                    else:
                        leave = int(ties[np.argmax(np.abs(col[ties]))])
                    theta = tmin
            if not np.isfinite(theta):
                return "unbounded"
            self.iterations += 1
            stall = stall + 1 if theta <= 1e-12 else 0
            if stall > 50:
                bland = True
            x[self.basis] = xb - theta * col
            x[q] += delta * theta
            if leave < 0:
                continue  # bound flip
            out = self.basis[leave]
            x[out] = lb[leave] if col[leave] > 0 else ub[leave]
            piv = T[leave, q]
            T[leave] /= piv
            f = T[:, q].copy()
            f[leave] = 0.0
            T -= np.outer(f, T[leave])
            self.basis[leave] = q
            is_basic[out] = False
            is_basic[q] = True
            if self.iterations % 200 == 0:
                self._refactor()
                T = self.T


def simplex_bounded(c, A, senses, b, lo, hi, max_iter: int | None = None) -> LPResult:
    """Maximize c.x over A x (<=|=|>=) b with finite bounds lo <= x <= hi.

    Two-phase primal simplex on a dense tableau. Nonbasic variables sit at
    either bound; entering variables are priced by largest reduced cost with
    a switch to Bland's rule after 50 degenerate pivots.
    """
    c = np.asarray(c, dtype=float)
    A = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float)
    n = len(c)
    m = A.shape[0]
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    if np.any(lo > hi):
        return LPResult("infeasible", None, -np.inf)
    senses = np.asarray(senses, dtype=object)
    sign = np.where(senses == GE, -1.0, 1.0)
    A = A * sign[:, None]
    b = np.asarray(b, dtype=float) * sign
    le = senses != EQ
    n_s = int(le.sum())
    # slack columns
    S = np.zeros((m, n_s))
    S[np.flatnonzero(le), np.arange(n_s)] = 1.0
    x0 = lo.copy()
    r = b - A @ x0
    need = (~le) | (r < 0)
    n_a = int(need.sum())
    Art = np.zeros((m, n_a))
    art_rows = np.flatnonzero(need)
    Art[art_rows, np.arange(n_a)] = np.where(r[art_rows] >= 0, 1.0, -1.0)
    M = np.hstack([A, S, Art])
    ntot = n + n_s + n_a
    lo_f = np.concatenate([lo, np.zeros(n_s + n_a)])
    hi_f = np.concatenate([hi, np.full(n_s, np.inf), np.full(n_a, np.inf)])
    xv = np.concatenate([x0, np.zeros(n_s + n_a)])
    basis = np.empty(m, dtype=np.int64)
    slack_of_row = np.full(m, -1)
    slack_of_row[np.flatnonzero(le)] = n + np.arange(n_s)
    art_of_row = np.full(m, -1)
    art_of_row[art_rows] = n + n_s + np.arange(n_a)
    for i in range(m):
        if need[i]:
            basis[i] = art_of_row[i]
            xv[basis[i]] = abs(r[i])
        else:
            basis[i] = slack_of_row[i]
            xv[basis[i]] = r[i]
    if max_iter is None:
        max_iter = 50 * (m + ntot) + 1000
    tab = _Tableau(M, b, lo_f, hi_f, basis, xv)
    # B is diagonal +-1: tableau is M with artificial rows sign-flipped
    flip = np.ones(m)
    flip[art_rows] = np.where(r[art_rows] >= 0, 1.0, -1.0)
    tab.T = M * flip[:, None]

    if n_a:
        d1 = np.zeros(ntot)
        d1[n + n_s:] = -1.0
        tab.optimize(d1, max_iter)
        tab._refactor()
        if tab.x[n + n_s:].sum() > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult("infeasible", None, -np.inf, tab.iterations)
        tab.hi[n + n_s:] = 0.0
        tab.x[n + n_s:] = 0.0
        # drive zero-valued artificials out of the basis where possible
        for i in range(m):
            if tab.basis[i] >= n + n_s:
                row = tab.T[i, :n + n_s]
                nz = np.flatnonzero(np.abs(row) > 1e-7)
                nonbasic = [j for j in nz if j not in set(tab.basis)]
                if nonbasic:
                    q = nonbasic[0]
                    piv = tab.T[i, q]
                    tab.T[i] /= piv
                    f = tab.T[:, q].copy()
                    f[i] = 0.0
                    tab.T -= np.outer(f, tab.T[i])
                    tab.basis[i] = q
        tab._refactor()
    d2 = np.concatenate([c, np.zeros(n_s + n_a)])
    status = tab.optimize(d2, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", None, np.inf, tab.iterations)
    tab._refactor()
    x = np.clip(tab.x[:n], lo, hi)
    return LPResult("optimal", x, float(c @ x), tab.iterations)


def simplex_highs(c, A, senses, b, lo, hi) -> LPResult:
    senses = np.asarray(senses, dtype=object)
    A = sparse.csr_matrix(A)
    ub_rows = np.flatnonzero(senses != EQ)
    eq_rows = np.flatnonzero(senses == EQ)
    sgn = np.where(senses[ub_rows] == GE, -1.0, 1.0)
    A_ub = sparse.diags(sgn) @ A[ub_rows] if len(ub_rows) else None
    b_ub = sgn * np.asarray(b)[ub_rows] if len(ub_rows) else None
    A_eq = A[eq_rows] if len(eq_rows) else None
    b_eq = np.asarray(b)[eq_rows] if len(eq_rows) else None
    res = linprog(-np.asarray(c, float), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([lo, hi]), method="highs")
    if res.status == 2:
        return LPResult("infeasible", None, -np.inf, res.nit)
    if res.status == 3:
        return LPResult("unbounded", None, np.inf, res.nit)
    if res.status != 0:
        raise BilpError(f"LP backend failed: {res.message}")
    x = np.clip(res.x, lo, hi)
    return LPResult("optimal", x, float(np.asarray(c) @ x), res.nit)


def solve_lp(c, A, senses, b, lo, hi, method: str = "auto") -> LPResult:
    """LP relaxation dispatcher: ``dense`` | ``highs`` | ``auto`` (by size)."""
    if method == "auto":
        method = "dense" if A.shape[0] * A.shape[1] <= DENSE_LIMIT else "highs"
    if method == "dense":
        return simplex_bounded(c, A, senses, b, lo, hi)
    if method == "highs":
        return simplex_highs(c, A, senses, b, lo, hi)
    raise ValueError(f"unknown LP method {method!r}")
