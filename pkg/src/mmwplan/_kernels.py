"""Compiled segment-occlusion kernels over extruded-polygon buildings.

A segment is blocked when its open interior touches a wall (vertical face
above a footprint edge) or a roof (horizontal polygon at building height).
Crossings within ``tol`` metres of either endpoint are ignored so that points
mounted on a face do not occlude themselves.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _poly_status(x, y, ex0, ey0, ex1, ey1, start, count):
    """(even-odd inside flag, distance to the polygon boundary)."""
    inside = False
    best = np.inf
    for e in range(start, start + count):
        ax, ay, bx, by = ex0[e], ey0[e], ex1[e], ey1[e]
        if (ay > y) != (by > y):
            xc = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < xc:
                inside = not inside
        dx, dy = bx - ax, by - ay
        u = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        cx, cy = ax + u * dx - x, ay + u * dy - y
        d2 = cx * cx + cy * cy
        if d2 < best:
            best = d2
    return inside, math.sqrt(best)


@njit(cache=True)
def blocked(px, py, pz, qx, qy, qz, ex0, ey0, ex1, ey1, bstart, bcount, bh, bbox, tol):
    # canonical endpoint order keeps the test exactly symmetric
    if (qx < px) or (qx == px and (qy < py or (qy == py and qz < pz))):
        px, py, pz, qx, qy, qz = qx, qy, qz, px, py, pz
    dx, dy, dz = qx - px, qy - py, qz - pz
    L = math.sqrt(dx * dx + dy * dy + dz * dz)
    if L <= tol:
        return False
    tt = tol / L
    lox, hix = min(px, qx), max(px, qx)
    loy, hiy = min(py, qy), max(py, qy)
    loz = min(pz, qz)
    for b in range(bh.shape[0]):
        h = bh[b]
        if loz > h + tol:
            continue
        if hix < bbox[b, 0] - tol or lox > bbox[b, 2] + tol:
            continue
        if hiy < bbox[b, 1] - tol or loy > bbox[b, 3] + tol:
            continue
        s0, n = bstart[b], bcount[b]
        for e in range(s0, s0 + n):
            ax, ay = ex0[e], ey0[e]
            fx, fy = ex1[e] - ax, ey1[e] - ay
            den = dx * fy - dy * fx
            if abs(den) <= 1e-15 * (abs(dx * fy) + abs(dy * fx)) or den == 0.0:
                continue
            wx, wy = ax - px, ay - py
            t = (wx * fy - wy * fx) / den
            if t <= tt or t >= 1.0 - tt:
                continue
            u = (wx * dy - wy * dx) / den
            ue = tol / math.sqrt(fx * fx + fy * fy)
            if u < -ue or u > 1.0 + ue:
                continue
            if pz + t * dz <= h + tol:
                return True
        if dz != 0.0:
            t = (h - pz) / dz
            if tt < t < 1.0 - tt:
                ins, d = _poly_status(px + t * dx, py + t * dy, ex0, ey0, ex1, ey1, s0, n)
                if ins or d <= tol:
                    return True
        # both endpoints on the shell, interior chord: no face crossing in (0, 1)
        mz = pz + 0.5 * dz
        if mz < h - tol:
            ins, d = _poly_status(px + 0.5 * dx, py + 0.5 * dy, ex0, ey0, ex1, ey1, s0, n)
            if ins and d > tol:
                return True
    return False


@njit(cache=True)
def clear_pairs(P, Q, ex0, ey0, ex1, ey1, bstart, bcount, bh, bbox, tol):
    n = P.shape[0]
    out = np.empty(n, dtype=np.bool_)
    for i in range(n):
        out[i] = not blocked(P[i, 0], P[i, 1], P[i, 2], Q[i, 0], Q[i, 1], Q[i, 2],
                             ex0, ey0, ex1, ey1, bstart, bcount, bh, bbox, tol)
    return out


@njit(cache=True)
def clear_matrix(A, B, ex0, ey0, ex1, ey1, bstart, bcount, bh, bbox, tol):
    na, nb = A.shape[0], B.shape[0]
    out = np.empty((na, nb), dtype=np.bool_)
    for i in range(na):
        for j in range(nb):
            out[i, j] = not blocked(A[i, 0], A[i, 1], A[i, 2], B[j, 0], B[j, 1], B[j, 2],
                                    ex0, ey0, ex1, ey1, bstart, bcount, bh, bbox, tol)
    return out
