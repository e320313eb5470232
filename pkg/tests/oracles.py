"""Independent reference implementations used as test oracles.

Buildings are restricted to axis-aligned boxes so that every check can use
the slab method, a different algorithm from the packaged edge/roof kernel.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from mmwplan.scenario import scenario_from_dict

TOL = 1e-9


def boxes_of(scenario):
    """(x0, y0, x1, y1, h) per building; asserts axis alignment."""
    out = []
    for b in scenario.buildings:
        fp = b.footprint
        x0, y0 = fp.min(axis=0)
        x1, y1 = fp.max(axis=0)
        assert len(fp) == 4 and np.isclose(abs(Polygon_area(fp)), (x1 - x0) * (y1 - y0))
        out.append((x0, y0, x1, y1, b.height))
    return np.array(out, dtype=float).reshape(-1, 5)


def Polygon_area(fp):
    x, y = fp[:, 0], fp[:, 1]
    return 0.5 * (x @ np.roll(y, -1) - y @ np.roll(x, -1))


def slab_blocked(P, Q, boxes, tol=TOL):
    """(len(P),) bool: closed box met strictly between the endpoints.

    ``P`` and ``Q`` broadcast against each other. Boxes are exact closed sets;
    contact within ``tol`` metres of either endpoint is ignored so that points
    mounted on faces do not block themselves, and a segment lying in the plane
    of a face grazes that building without being blocked by it.
    """
    P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
    d = Q - P
    L = np.linalg.norm(d, axis=-1)
    tt = np.where(L > 0, tol / np.maximum(L, 1e-300), np.inf)
    hit = np.zeros(P.shape[:-1], dtype=bool)
    for x0, y0, x1, y1, h in boxes:
        lo = np.array([x0, y0, 0.0])
        hi = np.array([x1, y1, h])
        tmin = np.full(P.shape[:-1], -np.inf)
        tmax = np.full(P.shape[:-1], np.inf)
        graze = np.zeros(P.shape[:-1], dtype=bool)
        for a in range(3):
            p, v = P[..., a], d[..., a]
            par = v == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo[a] - p) / v
                t2 = (hi[a] - p) / v
            a_min = np.where(par, np.where((p >= lo[a]) & (p <= hi[a]), -np.inf, np.inf),
                             np.minimum(t1, t2))
            a_max = np.where(par, np.where((p >= lo[a]) & (p <= hi[a]), np.inf, -np.inf),
                             np.maximum(t1, t2))
            tmin = np.maximum(tmin, a_min)
            tmax = np.minimum(tmax, a_max)
            # a segment lying in the plane of a face slides along the building
            graze |= par & ((np.abs(p - lo[a]) <= tol) | (np.abs(p - hi[a]) <= tol))
        # overlap of [tmin, tmax] with the open interval (tt, 1 - tt)
        hit |= (tmin <= tmax) & (tmax > tt) & (tmin < 1.0 - tt) & ~graze
    return hit


def faces_of(boxes):
    """(normal, offset, kind, box index) for 4 walls and the roof of every box."""
    out = []
    for bi, (x0, y0, x1, y1, h) in enumerate(boxes):
        out += [(np.array([0.0, -1.0, 0.0]), -y0, "wall", bi),
                (np.array([1.0, 0.0, 0.0]), x1, "wall", bi),
                (np.array([0.0, 1.0, 0.0]), y1, "wall", bi),
                (np.array([-1.0, 0.0, 0.0]), -x0, "wall", bi),
                (np.array([0.0, 0.0, 1.0]), h, "roof", bi)]
    return out


def brute_visibility(src, targets, boxes, surface_pts, tol=TOL):
    """Direct, specular and diffuse sets by exhaustive search.

    Specular paths are found by mirroring the *target* across each face
    plane and intersecting the source-to-image segment with the plane.
    Diffuse paths try every surface sample as a scatterer; a specular
    bounce point also counts as a scatterer.
    """
    src = np.asarray(src, float)
    T = np.asarray(targets, float)
    direct = ~slab_blocked(src[None], T, boxes, tol)
    spec = np.zeros(len(T), dtype=bool)
    for n, off, kind, bi in faces_of(boxes):
        ds = src @ n - off
        dt = T @ n - off
        ok = (ds > tol) & (dt > tol) & ~direct & ~spec
        if not ok.any():
            continue
        img = T - 2.0 * dt[:, None] * n
        lam = ds / (ds - (img @ n - off))
        b = src + lam[:, None] * (img - src)
        x0, y0, x1, y1, h = boxes[bi]
        if kind == "roof":
            on = (b[:, 0] >= x0 - tol) & (b[:, 0] <= x1 + tol) & \
                 (b[:, 1] >= y0 - tol) & (b[:, 1] <= y1 + tol)
        else:
            on = (b[:, 0] >= x0 - tol) & (b[:, 0] <= x1 + tol) & \
                 (b[:, 1] >= y0 - tol) & (b[:, 1] <= y1 + tol) & \
                 (b[:, 2] >= -tol) & (b[:, 2] <= h + tol)
        ok &= on
        idx = np.flatnonzero(ok)
        if not len(idx):
            continue
        clear = ~slab_blocked(src[None], b[idx], boxes, tol) & \
            ~slab_blocked(b[idx], T[idx], boxes, tol)
        spec[idx[clear]] = True
    S = np.asarray(surface_pts, float)
    seen = ~slab_blocked(src[None], S, boxes, tol)
    if seen.any():
        both = ~slab_blocked(T[:, None, :], S[seen][None, :, :], boxes, tol)
        diffuse = both.any(axis=1) & ~direct
    else:
        diffuse = np.zeros(len(T), dtype=bool)
    return direct, spec, diffuse | spec


def random_box_scenario(rng, max_buildings=3, width=20.0, depth=10.0):
    """Axis-aligned boxes at non-lattice coordinates inside a small area."""
    boxes = []
    tries = 0
    n = int(rng.integers(1, max_buildings + 1))
    while len(boxes) < n and tries < 200:
        tries += 1
        w, d = rng.uniform(2.0, 7.0), rng.uniform(2.0, 5.0)
        x0 = round(float(rng.uniform(0.3, width - w - 0.3)), 3) + 0.0007
        y0 = round(float(rng.uniform(0.3, depth - d - 0.3)), 3) + 0.0003
        x1, y1 = round(x0 + w, 3) + 0.0001, round(y0 + d, 3) + 0.0002
        if any(x0 < b[2] + 0.5 and b[0] < x1 + 0.5 and y0 < b[3] + 0.5 and b[1] < y1 + 0.5
               for b in boxes):
            continue
        boxes.append((x0, y0, x1, y1, round(float(rng.uniform(4.0, 20.0)), 2)))
    d = {"bounds": [0, 0, width, depth], "resolution_m": 1.0,
         "buildings": [{"id": f"B{i}", "height_m": h,
                        "footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]}
                       for i, (x0, y0, x1, y1, h) in enumerate(boxes)]}
    return scenario_from_dict(d)


def exhaustive_pmr(G, triples, n, gamma, weights=None, strict=False, rtol=1e-12):
    """Best covered weight over every valid selection of ``n`` triples.

    A selection is valid when no two triples share a (gNB, position) pair,
    and with ``strict`` also no two share a gNB. A grid counts as served
    when its summed gain reaches ``gamma`` up to a relative ``rtol``.
    Returns -1 when no valid selection exists.
    """
    G = np.asarray(G, float)
    w = np.ones(G.shape[1]) if weights is None else np.asarray(weights, float)
    best = -1.0
    for S in itertools.combinations(range(len(triples)), n):
        tr = [tuple(triples[s]) for s in S]
        if len({t[:2] for t in tr}) < n:
            continue
        if strict and len({t[0] for t in tr}) < n:
            continue
        xi = G[list(S)].sum(axis=0)
        best = max(best, float(w[xi >= gamma * (1.0 - rtol)].sum()))
    return best


def brute_bilp(c, rows, tol=1e-9):
    """Independent enumerator over ``itertools.product`` blocks; rows are dense tuples.

    Returns (best value, lexicographically smallest optimal assignment) or
    (None, None) when infeasible.
    """
    c = np.asarray(c, float)
    n = len(c)
    A = np.array([np.asarray(a, float) for a, _, _ in rows]).reshape(len(rows), n)
    b = np.array([float(r[2]) for r in rows])
    sense = [r[1] for r in rows]
    slack = tol * (1.0 + np.abs(b) + np.abs(A).sum(axis=1))
    # the low bits form a fixed block; the high bits are walked in product order
    lo = min(n, 12)
    tail = np.array(list(itertools.product((0.0, 1.0), repeat=lo))).reshape(-1, lo)
    integral = np.all(c == np.round(c)) and np.abs(c).sum() < 2.0 ** 52
    best, best_x = None, None
    for head in itertools.product((0.0, 1.0), repeat=n - lo):
        X = np.hstack([np.tile(head, (len(tail), 1)), tail])
        v = X @ A.T - b
        ok = np.ones(len(X), dtype=bool)
        for r, s in enumerate(sense):
            if s == "<=":
                ok &= v[:, r] <= slack[r]
            elif s == ">=":
                ok &= v[:, r] >= -slack[r]
            else:
                ok &= np.abs(v[:, r]) <= slack[r]
        if not ok.any():
            continue
        idx = np.flatnonzero(ok)
        vals = X[idx] @ c
        if integral:
            cand = [(float(vals.max()), idx[int(np.argmax(vals))])]
        else:
            # rank near-ties by the exact rational objective
            top = vals.max()
            cand = [(sum((Fraction(float(w)) for w in c[X[r] == 1]), Fraction(0)), r)
                    for r in idx[vals >= top - 1e-9 * (1.0 + abs(top))]]
        val, r = max(cand, key=lambda t: t[0])  # first maximum: smallest assignment
        if best is None or val > best:
            best, best_x = val, tuple(int(x) for x in X[r])
    if best is None:
        return None, None
    return float(best), best_x


def random_bilp(rng, style=None):
    """Random coverage-style or Big-M-style program with at most 20 variables.

    Coverage style mirrors the placement model: site variables, grid
    variables, ``beta_j <= sum_i C_ji alpha_i`` and a site count equality.
    Big-M style links each indicator to a weighted sum through a lower row
    ``sum g alpha - gamma beta >= 0`` and an upper row with ``M = sum g - gamma``.
    """
    style = style or ("coverage" if rng.random() < 0.5 else "bigm")
    if style == "coverage":
        n_s = int(rng.integers(2, 9))
        n_g = int(rng.integers(1, 21 - n_s))
        C = (rng.random((n_g, n_s)) < rng.uniform(0.15, 0.6)).astype(float)
        k = int(rng.integers(1, n_s + 1))
        w = rng.integers(1, 6, n_g).astype(float) if rng.random() < 0.5 else rng.random(n_g)
        c = np.concatenate([np.zeros(n_s), w])
        rows = [(np.concatenate([-C[j], np.eye(n_g)[j]]), "<=", 0.0) for j in range(n_g)]
        rows.append((np.concatenate([np.ones(n_s), np.zeros(n_g)]), "=", float(k)))
    else:
        n_s = int(rng.integers(2, 10))
        n_g = int(rng.integers(1, min(10, 21 - n_s)))
        G = rng.exponential(1.0, (n_g, n_s)) * (rng.random((n_g, n_s)) < 0.6)
        gamma = float(rng.uniform(0.5, 2.5))
        k = int(rng.integers(1, n_s + 1))
        c = np.concatenate([np.zeros(n_s), rng.integers(1, 4, n_g).astype(float)])
        rows = []
        for j in range(n_g):
            e = np.eye(n_g)[j]
            big = max(float(np.sort(G[j])[::-1][:k].sum()) - gamma, 0.0)
            rows.append((np.concatenate([G[j], -gamma * e]), ">=", 0.0))
            rows.append((np.concatenate([G[j], -big * e]), "<=", gamma))
        rows.append((np.concatenate([np.ones(n_s), np.zeros(n_g)]),
                     "<=" if rng.random() < 0.3 else "=", float(k)))
    return c, rows, style


def random_gain_tensor(rng, n_gnb=1, n_pos=3, n_orient=3, n_grid=6, density=0.6, unit=1e-9):
    """Small sparse tensor with gains drawn from a few multiples of ``unit``."""
    from mmwplan.reflector import GainTensor
    tr, ti, jj, gg = [], [], [], []
    for i in range(n_gnb):
        for k in range(n_pos):
            for l in range(n_orient):
                m = rng.random(n_grid) < density
                if not m.any():
                    continue
                js = np.flatnonzero(m)
                ti += [len(tr)] * len(js)
                jj += list(js)
                gg += list(rng.choice([0.3, 0.5, 0.7, 1.0, 1.2, 2.0], len(js)) * unit)
                tr.append((i, k, l))
    T = len(tr)
    return GainTensor(np.array(tr, dtype=np.int64).reshape(-1, 3), np.tile([0, 0, 1.0], (T, 1)),
                      np.array(ti, dtype=np.int64), np.array(jj, dtype=np.int64),
                      np.array(gg, dtype=float), n_grid, 1.0)
