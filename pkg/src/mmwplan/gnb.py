"""gNB placement as weighted maximum coverage: coverage matrix assembly,
the 0-1 program, and the resulting outage set."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .bilp import (BilpProblem, BilpSolution, Status, greedy_max_coverage,
                   solve_branch_and_bound, verify)
from .channel import ChannelParams, check_breakpoint, gb_plm
from .scenario import GridSet, Role

MODES = ("direct", "specular", "diffuse")


def normalize_weights(w, m: int) -> np.ndarray:
    if w is None:
        return np.full(m, 1.0 / m)
    w = np.asarray(w, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"expected {m} weights, got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValueError("weights must be finite, non-negative and not all zero")
    return w / w.sum()


def read_weights_csv(path, m: int) -> np.ndarray:
    """Read ``index,weight`` rows; unlisted grids get weight 0. Renormalized."""
    w = np.zeros(m)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            j = int(row[0])
            if not 0 <= j < m:
                raise ValueError(f"weight index {j} outside 0..{m - 1}")
            w[j] = float(row[1])
    return normalize_weights(w, m)


def link_distances(gnb: np.ndarray, sa: np.ndarray):
    P = np.atleast_2d(gnb)
    d2 = np.hypot(P[:, None, 0] - sa[None, :, 0], P[:, None, 1] - sa[None, :, 1])
    d3 = np.sqrt(d2 ** 2 + (P[:, None, 2] - sa[None, :, 2]) ** 2)
    return d2, d3


def path_loss_matrix(gnb: GridSet, sa: GridSet, direct, indirect, ch: ChannelParams,
                     warn_breakpoint: bool = True) -> np.ndarray:
    """(N, M) visibility-gated path loss; ``indirect`` may overlap ``direct``."""
    direct = np.asarray(direct, bool)
    indirect = np.asarray(indirect, bool) & ~direct
    shape = (len(gnb), len(sa))
    if direct.shape != shape or indirect.shape != shape:
        raise ValueError(f"visibility stacks must be {shape}, got {direct.shape}/{indirect.shape}")
    d2, d3 = link_distances(gnb.points, sa.points)
    if warn_breakpoint:
        check_breakpoint(d2[direct | indirect], ch)
    return gb_plm(direct, indirect, d2, d3, ch)


@dataclass(frozen=True, eq=False)
class CoverageMatrix:
    pl: np.ndarray  # (N, M) dB, inf for outage
    C: np.ndarray  # (N, M) bool
    weights: np.ndarray  # (M,), sums to 1
    gamma_max: float

    @classmethod
    def from_pl(cls, pl, gamma_max: float, w=None) -> "CoverageMatrix":
        pl = np.asarray(pl, dtype=float)
        return cls(pl, pl < gamma_max, normalize_weights(w, pl.shape[1]), float(gamma_max))

    @property
    def shape(self):
        return self.C.shape


def build_coverage_matrix(gnb: GridSet, sa: GridSet, vis, ch: ChannelParams, gamma: float,
                          w=None, mode: str = "specular") -> CoverageMatrix:
    """Coverage indicators from per-candidate visibility.

    ``vis`` is a sequence of :class:`~mmwplan.visibility.VisibilityIndex`,
    one per candidate. ``mode`` selects the indirect set: ``direct`` (none),
    ``specular`` or ``diffuse``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if len(vis) != len(gnb):
        raise ValueError(f"{len(vis)} visibility records for {len(gnb)} candidates")
    direct = np.vstack([v.direct for v in vis])
    if mode == "direct":
        indirect = np.zeros_like(direct)
    else:
        indirect = np.vstack([getattr(v, mode) for v in vis])
    pl = path_loss_matrix(gnb, sa, direct, indirect, ch)
    return CoverageMatrix.from_pl(pl, gamma, w)


@dataclass(frozen=True, eq=False)
class GnbPlacement:
    chosen: np.ndarray  # candidate indices
    beta: np.ndarray  # (M,) bool
    coverage: float
    outage: np.ndarray  # grid indices with beta = 0
    solution: BilpSolution | None = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class GnbModel:
    """Aggregated program: identical coverage columns merged, uncoverable grids dropped."""

    problem: BilpProblem
    groups: np.ndarray  # (M,) group id per grid, -1 when no candidate covers it
    group_weight: np.ndarray
    candidates: np.ndarray  # candidate index of each alpha variable
    count_objective: bool

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)


def undominated(C: np.ndarray, k: int = 1) -> np.ndarray:
    """Candidates whose coverage set is not contained in another candidate's.

    Of identical rows only the first survives. Swapping a dominated
    candidate for its dominator never lowers coverage, so restricting the
    program to these rows keeps the optimum, provided at least ``k`` remain
    (otherwise every candidate is returned).
    """
    Cf = C.astype(np.float32)
    size = Cf.sum(axis=1)
    inter = Cf @ Cf.T
    sub = inter >= size[:, None] - 0.5  # row i contained in row i'
    np.fill_diagonal(sub, False)
    same = sub & sub.T
    strict = sub & ~same
    earlier_twin = np.triu(same, 1).any(axis=0)  # an identical row with lower index
    keep = ~(strict.any(axis=1) | earlier_twin)
    idx = np.flatnonzero(keep)
    return idx if len(idx) >= k else np.arange(len(C))


def assemble_gnb_bilp(cm: CoverageMatrix, n_gnb: int, candidates=None) -> GnbModel:
    """Variables: alpha per candidate, then beta per coverage group.

    Rows: ``beta_g - sum_i C_ig alpha_i <= 0`` per group and
    ``sum_i alpha_i = n_gnb``. ``candidates`` restricts the alpha variables
    to a subset of rows of the coverage matrix.
    """
    if not 1 <= n_gnb <= cm.shape[0]:
        raise ValueError(f"n_gnb must be in 1..{cm.shape[0]}")
    cand = np.arange(cm.shape[0]) if candidates is None else np.asarray(candidates)
    if len(cand) < n_gnb:
        raise ValueError("fewer candidates than gNBs to place")
    C = cm.C[cand]
    N, M = C.shape
    live = np.flatnonzero(C.any(axis=0))
    groups = np.full(M, -1, dtype=np.int64)
    if len(live):
        cols = np.packbits(C[:, live], axis=0).T
        _, first, inv = np.unique(cols, axis=0, return_index=True, return_inverse=True)
        # number groups by first appearance for a stable variable order
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        groups[live] = rank[inv.ravel()]
        rep = live[first[order]]
    else:
        rep = np.zeros(0, dtype=np.int64)
    G = len(rep)
    gw = np.bincount(groups[live], weights=cm.weights[live], minlength=G)
    # uniform weights: optimize grid counts so the objective is integral
    uniform = np.allclose(cm.weights, cm.weights[0], rtol=0, atol=1e-15)
    count_obj = bool(uniform)
    obj_g = np.bincount(groups[live], minlength=G).astype(float) if count_obj else gw
    c = np.concatenate([np.zeros(N), obj_g])
    cov = sparse.csr_matrix(C[:, rep].T.astype(float))  # (G, N)
    A = sparse.vstack([sparse.hstack([-cov, sparse.identity(G, format="csr")]),
                       sparse.hstack([sparse.csr_matrix(np.ones((1, N))),
                                      sparse.csr_matrix((1, G))])]).tocsr()
    senses = ["<="] * G + ["="]
    rhs = np.concatenate([np.zeros(G), [float(n_gnb)]])
    names = tuple(f"a{i}" for i in cand) + tuple(f"b{g}" for g in range(G))
    return GnbModel(BilpProblem(c, A, senses, rhs, names), groups, gw, cand, count_obj)


def _complete(model: GnbModel, C_rep: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    beta = (C_rep[:, alpha.astype(bool)].any(axis=1)).astype(np.int8)
    return np.concatenate([alpha.astype(np.int8), beta])


def plan_gnb(cm: CoverageMatrix, n_gnb: int, time_limit: float | None = None,
             lp_method: str = "auto", node_limit: int | None = None) -> GnbPlacement:
    """Optimal ``n_gnb`` candidates maximizing covered weight.

    With a time or node limit the best assignment found is returned and
    ``info["status"]`` reads ``Feasible``; node limits keep runs reproducible.
    """
    model = assemble_gnb_bilp(cm, n_gnb, undominated(cm.C, n_gnb))
    N = model.n_candidates
    G = len(model.group_weight)
    rep_cols = np.zeros((G, N), dtype=bool)
    if G:
        live = np.flatnonzero(model.groups >= 0)
        _, first = np.unique(model.groups[live], return_index=True)
        rep_cols = cm.C[np.ix_(model.candidates, live[first])].T
    wg = model.problem.c[N:]
    start = greedy_max_coverage(rep_cols, wg, n_gnb)

    def heuristic(x_lp):
        top = np.argsort(-x_lp[:N], kind="stable")[:n_gnb]
        a = np.zeros(N, dtype=np.int8)
        a[top] = 1
        return _complete(model, rep_cols, a)

    sol = solve_branch_and_bound(model.problem, time_limit=time_limit,
                                 incumbents=[_complete(model, rep_cols, start)],
                                 heuristic=heuristic, lp_method=lp_method,
                                 node_limit=node_limit)
    if sol.status == Status.INFEASIBLE:
        raise RuntimeError("gNB program reported infeasible")
    verify(model.problem, sol)
    chosen = model.candidates[sol.x[:N].astype(bool)]
    beta = cm.C[chosen].any(axis=0)
    coverage = math.fsum(cm.weights[beta])
    info = {"status": sol.status.value, "nodes": sol.nodes, "gap": sol.gap, "groups": G,
            "candidates_kept": N, "objective": sol.objective}
    return GnbPlacement(chosen, beta, coverage, np.flatnonzero(~beta), sol, info)


def estimate_gnb_count(sa_area: float, cell_radius: float) -> int:
    """ceil(area / (pi r^2)), never below one."""
    if sa_area <= 0 or cell_radius <= 0:
        raise ValueError("area and radius must be positive")
    ratio = sa_area / (math.pi * cell_radius ** 2)
    return max(1, math.ceil(ratio - 1e-12))


def outage_set(p: GnbPlacement, sa: GridSet) -> GridSet:
    """Service grids left uncovered by the placement."""
    if len(p.beta) != len(sa):
        raise ValueError("placement and service grid sizes differ")
    return sa.subset(p.outage, Role.OUTAGE_AREA)
