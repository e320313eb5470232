"""Reflector placement and orientation as a 0-1 program with indicator
(Big-M) coverage rows, plus sweeps over the reflector budget and plate size."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .bilp import (BilpError, BilpProblem, BilpSolution, Status, solve_branch_and_bound,
                   verify)
from .reflector import GainTensor

log = logging.getLogger(__name__)

RECHECK_RTOL = 1e-12  # relative band around the threshold in the post-solve re-check


class PmrError(RuntimeError):
    """Reflector program could not be built or its solution failed re-verification."""


def gamma_linear(gamma_max_db: float, g_gnb_dbi: float = 21.5, g_ue_dbi: float = 5.5) -> float:
    """Minimum end-to-end linear gain equivalent to a maximum path loss.

    The reflector gain includes both antenna gains while the path-loss budget
    is between isotropic ports, hence ``10**((G_gNB + G_UE - gamma)/10)``.
    """
    vals = (gamma_max_db, g_gnb_dbi, g_ue_dbi)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("threshold and antenna gains must be finite")
    return 10.0 ** ((g_gnb_dbi + g_ue_dbi - gamma_max_db) / 10.0)


@dataclass(frozen=True, eq=False)
class PmrProblemSpec:
    """Inputs of one reflector program.

    Parameters
    ----------
    tensor : gains of every (gNB, position, orientation) triple.
    n_pmr : number of reflectors to place (the count row is an equality).
    gamma_lin : linear end-to-end gain a grid needs to count as served.
    weights : optional (O,) non-negative weights over outage grids.
    strict_c4 : also cap every gNB at one reflector (literal association row).
    clip : use threshold-clipped coefficients in the lower indicator row.
    prune : drop orientations dominated within their (gNB, position) pair.
    """

    tensor: GainTensor
    n_pmr: int
    gamma_lin: float
    weights: np.ndarray | None = None
    strict_c4: bool = False
    clip: bool = True
    prune: bool = True

    def __post_init__(self):
        if not (self.gamma_lin > 0 and math.isfinite(self.gamma_lin)):
            raise ValueError("gamma_lin must be positive and finite")
        if self.n_pmr < 0:
            raise ValueError("n_pmr must be >= 0")
        O = self.tensor.n_targets
        if self.weights is None:
            w = np.full(O, 1.0 / O) if O else np.zeros(0)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (O,) or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise ValueError(f"need {O} finite non-negative weights, not all zero")
            w = w / w.sum()
        object.__setattr__(self, "weights", w)

    @property
    def uniform(self) -> bool:
        w = self.weights
        return bool(len(w) == 0 or np.all(w == w[0]))


@dataclass(frozen=True, eq=False)
class PmrModel:
    """Assembled program. Variables: alpha per kept triple, then beta per modeled grid."""

    problem: BilpProblem
    triples: np.ndarray  # tensor row of each alpha variable
    grids: np.ndarray  # outage index of each beta variable
    big_m_lower: np.ndarray  # per modeled grid
    big_m_upper: np.ndarray
    big_m_global: float
    gains: sparse.csr_matrix  # (kept triples, O)
    info: dict = field(default_factory=dict)

    @property
    def n_alpha(self) -> int:
        return len(self.triples)


@dataclass(frozen=True, eq=False)
class PmrPlacement:
    side: float
    rows: np.ndarray  # selected tensor rows
    triples: np.ndarray  # (S, 3) selected (i, k, l)
    normals: np.ndarray  # (S, 3)
    xi: np.ndarray  # (O,) served linear gain
    beta: np.ndarray  # (O,) bool
    coverage: float  # covered weight fraction of the outage set
    solution: BilpSolution | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_covered(self) -> int:
        return int(self.beta.sum())


def _pair_ids(tensor: GainTensor):
    """Dense ids of (i, k) pairs and of gNBs, per tensor row."""
    tr = tensor.triples
    _, pair = np.unique(tr[:, :2], axis=0, return_inverse=True)
    _, gnb = np.unique(tr[:, 0], return_inverse=True)
    return pair.ravel(), gnb.ravel()


def dominated_orientations(G: sparse.csr_matrix, pair: np.ndarray, gamma: float) -> np.ndarray:
    """Rows whose threshold-clipped gains are matched or beaten by a sibling.

    Siblings share the (gNB, position) pair, so at most one of them may be
    selected. Replacing a dominated orientation by its dominator can only
    raise every served gain below the threshold and keeps every grid at or
    above it, so coverage never drops. Of identical rows the first is kept.
    """
    T = G.shape[0]
    drop = np.zeros(T, dtype=bool)
    order = np.argsort(pair, kind="stable")
    bounds = np.flatnonzero(np.diff(pair[order])) + 1
    for rows in np.split(order, bounds):
        if len(rows) < 2:
            continue
        sub = G[rows]
        cols = np.unique(sub.indices)
        blk = np.minimum(sub[:, cols].toarray(), gamma)
        tot = blk.sum(axis=1)
        seq = np.lexsort((rows, -tot))
        kept = []
        for r in seq:
            if kept and np.any(np.all(blk[kept] >= blk[r], axis=1)):
                drop[rows[r]] = True
            else:
                kept.append(r)
    return drop


def _top_sum(G: sparse.csr_matrix, n: int) -> np.ndarray:
    """Per column, the sum of its ``n`` largest entries."""
    Gc = G.tocsc()
    out = np.zeros(G.shape[1])
    for j in range(G.shape[1]):
        v = Gc.data[Gc.indptr[j]:Gc.indptr[j + 1]]
        if len(v) > n:
            v = np.partition(v, len(v) - n)[len(v) - n:]
        out[j] = math.fsum(v)
    return out


def assemble_pmr_bilp(spec: PmrProblemSpec) -> PmrModel:
    """Build the 0-1 program with the served gain substituted into the indicator rows.

    With ``xi_j = sum_t g_tj alpha_t`` the rows are, scaled by ``1/gamma``:

    * lower: ``xi_j >= gamma beta_j`` (Big-M ``M^L_j = gamma``); with
      ``clip`` each coefficient is capped at ``gamma``, which is still valid
      because one term at or above the threshold already serves the grid;
    * upper: ``xi_j - gamma <= M^U_j beta_j`` with ``M^U_j`` the sum of the
      ``n_pmr`` largest gains at ``j`` minus ``gamma``;
    * count: ``sum alpha = n_pmr``;
    * one orientation per (gNB, position) pair; with ``strict_c4`` also one
      reflector per gNB.

    Grids whose best ``n_pmr`` gains cannot reach ``gamma`` get no variable
    (their indicator is 0 in every feasible assignment).
    """
    tensor, gamma, n = spec.tensor, spec.gamma_lin, spec.n_pmr
    if tensor.n_triples == 0:
        raise PmrError("nothing to place: the gain tensor is empty")
    if n < 1:
        raise ValueError("assembling needs n_pmr >= 1")
    G_all = tensor.matrix().tocsr()
    pair, gnb = _pair_ids(tensor)
    drop = dominated_orientations(G_all, pair, gamma) if spec.prune else np.zeros(len(pair), bool)
    keep = np.flatnonzero(~drop)
    G = G_all[keep]
    pair_k, gnb_k = pair[keep], gnb[keep]
    n_pairs = len(np.unique(pair_k))
    if n > n_pairs or (spec.strict_c4 and n > len(np.unique(gnb_k))):
        raise PmrError(f"cannot place {n} reflectors: not enough distinct "
                       f"{'gNBs' if spec.strict_c4 else 'positions'}")

    top = _top_sum(G, n)
    grids = np.flatnonzero(top >= gamma * (1.0 - 1e-9))
    T, J = G.shape[0], len(grids)
    Gj = G[:, grids].tocsc()
    m_lo = np.full(J, gamma)
    m_hi = np.maximum(top[grids] - gamma, 0.0)
    big_m_global = math.fsum(G_all.max(axis=1).toarray().ravel())

    S = (Gj / gamma).T.tocsr()  # (J, T) scaled gains
    lower = S.minimum(1.0) if spec.clip else S
    eye = sparse.identity(J, format="csr")
    blocks = [
        sparse.hstack([lower, -eye]),
        sparse.hstack([S, -sparse.diags(m_hi / gamma)]),
        sparse.hstack([sparse.csr_matrix(np.ones((1, T))), sparse.csr_matrix((1, J))]),
    ]
    senses = [">="] * J + ["<="] * J + ["="]
    rhs = [np.zeros(J), np.ones(J), [float(n)]]
    row_names = [f"lo{j}" for j in grids] + [f"up{j}" for j in grids] + ["count"]

    def group_rows(ids, tag):
        sizes = np.bincount(ids)
        multi = np.flatnonzero(sizes > 1)
        if not len(multi):
            return
        remap = np.full(len(sizes), -1)
        remap[multi] = np.arange(len(multi))
        r = remap[ids]
        cols = np.flatnonzero(r >= 0)
        R = sparse.csr_matrix((np.ones(len(cols)), (r[cols], cols)), shape=(len(multi), T))
        blocks.append(sparse.hstack([R, sparse.csr_matrix((len(multi), J))]))
        senses.extend(["<="] * len(multi))
        rhs.append(np.ones(len(multi)))
        row_names.extend(f"{tag}{g}" for g in multi)

    group_rows(np.unique(pair_k, return_inverse=True)[1].ravel(), "pos")
    if spec.strict_c4:
        group_rows(np.unique(gnb_k, return_inverse=True)[1].ravel(), "gnb")

    A = sparse.vstack(blocks).tocsr()
    w = spec.weights[grids]
    c = np.concatenate([np.zeros(T), np.ones(J) if spec.uniform else w])
    tr = tensor.triples[keep]
    names = tuple(f"a{i}_{k}_{l}" for i, k, l in tr) + tuple(f"b{j}" for j in grids)
    problem = BilpProblem(c, A, senses, np.concatenate(rhs), names, tuple(row_names))
    info = {"triples": int(tensor.n_triples), "triples_kept": int(T),
            "dominated": int(drop.sum()), "grids": int(tensor.n_targets),
            "grids_modeled": int(J), "positions": int(n_pairs),
            "big_m_global": big_m_global,
            "big_m_upper_max": float(m_hi.max(initial=0.0)),
            "count_objective": spec.uniform}
    return PmrModel(problem, keep, grids, m_lo, m_hi, big_m_global, G, info)


class _Evaluator:
    """Coverage bookkeeping for greedy construction and swap search."""

    def __init__(self, G: sparse.csr_matrix, w: np.ndarray, gamma: float, pair, gnb,
                 strict: bool):
        self.G, self.w, self.gamma = G, w, gamma
        self.pair, self.gnb, self.strict = pair, gnb, strict
        self.row_of = np.repeat(np.arange(G.shape[0]), np.diff(G.indptr))

    def xi(self, sel) -> np.ndarray:
        sel = list(sel)
        if not sel:
            return np.zeros(self.G.shape[1])
        return np.asarray(self.G[sel].sum(axis=0)).ravel()

    def value(self, xi) -> float:
        return math.fsum(self.w[xi >= self.gamma])

    def allowed(self, sel) -> np.ndarray:
        ok = ~np.isin(self.pair, self.pair[list(sel)]) if len(sel) else \
            np.ones(len(self.pair), bool)
        if self.strict and len(sel):
            ok &= ~np.isin(self.gnb, self.gnb[list(sel)])
        return ok

    def gains(self, xi) -> np.ndarray:
        """Newly covered weight from adding each row on top of ``xi``."""
        G = self.G
        base = xi[G.indices]
        new = (base < self.gamma) & (base + G.data >= self.gamma)
        return np.bincount(self.row_of[new], weights=self.w[G.indices[new]],
                           minlength=G.shape[0])

    def extend(self, sel, n):
        sel = list(sel)
        xi = self.xi(sel)
        while len(sel) < n:
            ok = self.allowed(sel)
            if not ok.any():
                raise PmrError(f"cannot place {n} reflectors with distinct positions")
            g = np.where(ok, self.gains(xi), -1.0)
            t = int(np.argmax(g))
            sel.append(t)
            xi = xi + self.G[t].toarray().ravel()
        return sel

    def improve(self, sel, deadline=None, passes=None):
        """First-improvement single swaps until no swap helps."""
        sel = list(sel)
        cur = self.value(self.xi(sel))
        p = 0
        while passes is None or p < passes:
            p += 1
            better = False
            for pos in range(len(sel)):
                if deadline is not None and time.perf_counter() > deadline:
                    return sel
                rest = sel[:pos] + sel[pos + 1:]
                xi = self.xi(rest)
                base_val = self.value(xi)
                ok = self.allowed(rest)
                g = np.where(ok, self.gains(xi), -1.0)
                t = int(np.argmax(g))
                if base_val + g[t] > cur + 1e-12 and t != sel[pos]:
                    cand = rest[:pos] + [t] + rest[pos:]
                    v = self.value(self.xi(cand))
                    if v > cur:
                        sel, cur, better = cand, v, True
            if not better:
                break
        return sel


def _assignment(model: PmrModel, ev: _Evaluator, sel) -> np.ndarray:
    x = np.zeros(model.problem.n, dtype=np.int8)
    x[list(sel)] = 1
    xi = ev.xi(sel)
    x[model.n_alpha:] = xi[model.grids] >= ev.gamma
    return x


def recheck(xi: np.ndarray, beta: np.ndarray, gamma: float, rtol: float = RECHECK_RTOL):
    """Grids where the indicator disagrees with the served gain beyond ``rtol``."""
    beta = np.asarray(beta, bool)
    bad = (beta & (xi < gamma * (1.0 - rtol))) | (~beta & (xi > gamma * (1.0 + rtol)))
    return np.flatnonzero(bad)


def served_gain(tensor: GainTensor, rows) -> np.ndarray:
    """Per outage grid, the correctly rounded sum of gains of the given tensor rows."""
    xi = np.zeros(tensor.n_targets)
    rows = np.asarray(rows, dtype=np.int64)
    if not len(rows):
        return xi
    mask = np.isin(tensor.t_index, rows)
    j, g = tensor.j_index[mask], tensor.gain[mask]
    order = np.argsort(j, kind="stable")
    j, g = j[order], g[order]
    cuts = np.flatnonzero(np.diff(j)) + 1
    for jj, gg in zip(np.split(j, cuts), np.split(g, cuts)):
        if len(jj):
            xi[jj[0]] = math.fsum(gg)
    return xi


def _empty_placement(spec: PmrProblemSpec) -> PmrPlacement:
    O = spec.tensor.n_targets
    xi = np.zeros(O)
    return PmrPlacement(spec.tensor.side, np.zeros(0, np.int64), np.zeros((0, 3), np.int64),
                        np.zeros((0, 3)), xi, xi >= spec.gamma_lin, 0.0, None,
                        {"status": Status.OPTIMAL.value, "n_pmr": 0})


def plan_pmr(spec: PmrProblemSpec, time_limit: float | None = None, warm=(),
             lp_method: str = "auto", node_limit: int | None = None) -> PmrPlacement:
    """Best reflector set for the outage grids, re-verified against raw gains.

    ``warm`` holds earlier selections as sequences of (i, k, l) keys; each is
    completed greedily to ``n_pmr`` reflectors and offered as an incumbent.
    The returned indicators are checked against served gains recomputed
    from the tensor; any disagreement raises :class:`PmrError`.
    """
    if spec.n_pmr == 0:
        return _empty_placement(spec)
    t0 = time.perf_counter()
    model = assemble_pmr_bilp(spec)
    tensor, gamma, n = spec.tensor, spec.gamma_lin, spec.n_pmr
    pair, gnb = _pair_ids(tensor)
    w_obj = np.zeros(tensor.n_targets)
    w_obj[model.grids] = model.problem.c[model.n_alpha:]
    ev = _Evaluator(model.gains, w_obj, gamma, pair[model.triples], gnb[model.triples],
                    spec.strict_c4)

    key_to_var = {tuple(tensor.triples[t]): v for v, t in enumerate(model.triples)}
    all_keys = {tuple(k): r for r, k in enumerate(tensor.triples)}
    starts = []
    for keys in warm:
        sel = []
        for key in keys:
            key = tuple(int(v) for v in key)
            if key in key_to_var:
                v = key_to_var[key]
            elif key in all_keys:
                # pruned orientation: swap in its kept sibling with the best clipped gain
                r = all_keys[key]
                sib = np.flatnonzero(pair[model.triples] == pair[r])
                clip = np.asarray(model.gains[sib].minimum(gamma).sum(axis=1)).ravel()
                v = int(sib[np.argmax(clip)])
            else:
                continue
            if v not in sel and ev.allowed(sel)[v]:
                sel.append(v)
        starts.append(ev.extend(sel[:n], n))
    starts = [ev.improve(s) for s in starts]
    starts.append(ev.improve(ev.extend([], n)))
    incumbents = [_assignment(model, ev, s) for s in starts]

    def heuristic(x_lp):
        a = x_lp[:model.n_alpha]
        sel = []
        for v in np.argsort(-a, kind="stable"):
            if a[v] <= 1e-6 or len(sel) == n:
                break
            if ev.allowed(sel)[v]:
                sel.append(int(v))
        sel = ev.improve(ev.extend(sel, n), passes=1)
        return _assignment(model, ev, sel)

    # The upper Big-M rows only bound beta from below. While beta is free they never
    # cut off an LP optimum (xi_j cannot exceed the top-n sum), so the relaxations
    # skip them and run about three times faster; assignments still meet every row.
    J = len(model.grids)
    relax = np.ones(model.problem.m, dtype=bool)
    relax[J:2 * J] = False
    remaining = None if time_limit is None else max(0.0, time_limit - (time.perf_counter() - t0))
    sol = solve_branch_and_bound(model.problem, time_limit=remaining, incumbents=incumbents,
                                 heuristic=heuristic, lp_method=lp_method, feas_tol=1e-12,
                                 node_limit=node_limit, relax_rows=relax)
    if sol.status == Status.INFEASIBLE:
        raise PmrError("reflector program reported infeasible")
    verify(model.problem, sol)

    alpha = np.flatnonzero(sol.x[:model.n_alpha])
    rows = np.sort(model.triples[alpha])
    xi = served_gain(tensor, rows)
    beta = np.zeros(tensor.n_targets, dtype=bool)
    beta[model.grids] = sol.x[model.n_alpha:].astype(bool)
    bad = recheck(xi, beta, gamma)
    if len(bad):
        raise PmrError(f"indicator disagrees with recomputed served gain at {len(bad)} "
                       f"grids (first {bad[:5].tolist()}); the Big-M bound is inconsistent")
    coverage = math.fsum(spec.weights[beta])
    info = dict(model.info, status=sol.status.value, nodes=sol.nodes, gap=sol.gap,
                bound=sol.bound, objective=sol.objective, n_pmr=n, mismatches=0,
                root_bound=sol.info.get("root_bound"))
    return PmrPlacement(tensor.side, rows, tensor.triples[rows], tensor.normals[rows], xi,
                        beta, coverage, sol, info)


def sweep_pmr(tensors: dict, n_values, gamma_lin: float, weights=None,
              time_limit: float | None = None, strict_c4: bool = False,
              lp_method: str = "auto", node_limit: int | None = None
              ) -> tuple[list[dict], dict]:
    """Solve over plate sizes (ascending) and reflector budgets (ascending).

    Every solve is seeded with the previous budget's selection and with the
    smaller plate's selection at the same budget, so reported coverage is
    non-decreasing along both axes even when a time limit stops the search.

    Returns
    -------
    rows : one dict per (side, n_pmr) with coverage and solver status.
    placements : {(side, n_pmr): PmrPlacement}.
    """
    n_values = sorted(set(int(n) for n in n_values))
    rows, placements = [], {}
    prev_side = None
    for side in sorted(tensors):
        tensor = tensors[side]
        prev = None
        for n in n_values:
            spec = PmrProblemSpec(tensor, n, gamma_lin, weights, strict_c4=strict_c4)
            warm = []
            if prev is not None:
                warm.append([tuple(t) for t in prev.triples])
            if prev_side is not None and (prev_side, n) in placements:
                warm.append([tuple(t) for t in placements[(prev_side, n)].triples])
            p = plan_pmr(spec, time_limit, warm, lp_method, node_limit)
            placements[(side, n)] = p
            prev = p
            rows.append({"side": side, "n_pmr": n, "coverage": p.coverage,
                         "covered": p.n_covered, "outage": tensor.n_targets,
                         "status": p.info["status"], "gap": p.info.get("gap", 0.0),
                         "nodes": p.info.get("nodes", 0)})
            log.info("side %.1f m, N=%d: coverage %.4f (%s)", side, n, p.coverage,
                     p.info["status"])
        prev_side = side
    return rows, placements


__all__ = ["BilpError", "PmrError", "PmrModel", "PmrPlacement", "PmrProblemSpec",
           "RECHECK_RTOL", "assemble_pmr_bilp", "dominated_orientations", "gamma_linear",
           "plan_pmr", "recheck", "served_gain", "sweep_pmr"]
