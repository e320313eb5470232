"""Passive flat-plate reflectors: orientation by the mirror law, facet
lattices, per-facet plate-scattering gain and the sparse gain tensor used by
the reflector placement problem."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .scenario import GridSet, Role

log = logging.getLogger(__name__)

CANONICAL_NORMAL = np.array([0.0, 0.0, 1.0])
GAIN_FLOOR = 1e-18
_GRAZING = 1e-9


class DegenerateGeometry(ValueError):
    """Raised for grazing incidence or an orientation that cannot exist."""


class FarFieldWarning(UserWarning):
    pass


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DegenerateGeometry("zero-length direction")
    return v / n


def reflect_dir(i_hat, n_hat) -> np.ndarray:
    """Mirror the propagation direction ``i_hat`` off a plane with normal ``n_hat``.

    Works on single vectors or stacks of shape (..., 3).
    """
    i_hat = np.asarray(i_hat, dtype=float)
    n_hat = np.asarray(n_hat, dtype=float)
    c = np.sum(i_hat * n_hat, axis=-1, keepdims=True)
    if np.any(np.abs(c) < _GRAZING):
        raise DegenerateGeometry("grazing incidence: incident ray lies in the plate plane")
    return i_hat - 2.0 * c * n_hat


def orient_normal(i_hat, r_hat) -> np.ndarray:
    """Plate normal that mirrors ``i_hat`` into ``r_hat``, facing the incoming ray.

    The returned normal satisfies ``i_hat . n < 0``.
    """
    i_hat = np.asarray(i_hat, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    d = r_hat - i_hat
    L = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(L < 1e-9):
        raise DegenerateGeometry("no finite-tilt plate reflects a ray onto its own path")
    return d / L


# --------------------------------------------------------------------------
# facet lattice

def rodrigues(axis, angle: float) -> np.ndarray:
    """Rotation matrix from the Euler-Rodrigues parameters of (axis, angle)."""
    axis = unit(axis)
    a = math.cos(angle / 2.0)
    b, c, d = axis * math.sin(angle / 2.0)
    aa, bb, cc, dd = a * a, b * b, c * c, d * d
    bc, ad, ac, ab, bd, cd = b * c, a * d, a * c, a * b, b * d, c * d
    return np.array([
        [aa + bb - cc - dd, 2 * (bc - ad), 2 * (bd + ac)],
        [2 * (bc + ad), aa + cc - bb - dd, 2 * (cd - ab)],
        [2 * (bd - ac), 2 * (cd + ab), aa + dd - bb - cc],
    ])


def _align(u, v) -> np.ndarray:
    """Rotation taking unit ``u`` to unit ``v`` about their common perpendicular."""
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(np.clip(u @ v, -1.0, 1.0))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: half-turn about any perpendicular
        perp = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(u, [0.0, 1.0, 0.0])
        return rodrigues(perp, math.pi)
    return rodrigues(axis, math.atan2(s, c))


def plate_rotation(n_hat) -> np.ndarray:
    """Rotation taking the canonical plate frame to one with normal ``n_hat``.

    The first lattice axis is then rolled about ``n_hat`` until it is
    horizontal, so plate edges stay level.
    """
    n_hat = unit(n_hat)
    R = _align(CANONICAL_NORMAL, n_hat)
    h = np.cross(CANONICAL_NORMAL, n_hat)
    if np.linalg.norm(h) < 1e-12:
        return R
    h = h / np.linalg.norm(h)
    e1 = R[:, 0]
    ang = math.atan2(np.cross(e1, h) @ n_hat, float(np.clip(e1 @ h, -1.0, 1.0)))
    # the centred square lattice is symmetric under half-turns about the normal
    if abs(ang) > math.pi / 2:
        ang -= math.copysign(math.pi, ang)
    if abs(ang) < 1e-15:
        return R
    return rodrigues(n_hat, ang) @ R


def lattice_offsets(side: float, facet: float) -> np.ndarray:
    """Facet centres of a side x side plate in the canonical plane, (R, 3)."""
    if facet <= 0 or side < facet:
        raise ValueError("need side >= facet > 0")
    m = side / facet
    n = int(round(m))
    if abs(m - n) > 1e-9 * max(1.0, m):
        raise ValueError(f"plate side {side} is not a multiple of facet size {facet}")
    t = (np.arange(n) - (n - 1) / 2.0) * facet
    u, v = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([u.ravel(), v.ravel(), np.zeros(n * n)])


@dataclass(frozen=True)
class Reflector:
    center: np.ndarray
    side: float
    facet: float
    normal: np.ndarray
    facets: np.ndarray  # (R, 3)
    rotation: np.ndarray = field(repr=False, default=None)

    @property
    def R(self) -> int:
        return len(self.facets)


def rotate_facets(side: float, facet: float, center, n_hat) -> Reflector:
    """Build the facet lattice, rotate it to face ``n_hat`` and move it to ``center``."""
    center = np.asarray(center, dtype=float)
    n_hat = unit(n_hat)
    rot = plate_rotation(n_hat)
    pts = lattice_offsets(side, facet) @ rot.T + center
    return Reflector(center, float(side), float(facet), n_hat, pts, rot)


# --------------------------------------------------------------------------
# gain

@dataclass(frozen=True)
class GainParams:
    facet: float = 0.1  # a^R, metres
    wavelength: float = 299792458.0 / 28e9
    zeta: float = 2.0
    g_gnb_dbi: float = 21.5
    g_ue_dbi: float = 5.5
    mode: str = "power"  # "power" | "coherent"
    angles: str = "projected"  # "projected" | "normal"

    def __post_init__(self):
        if self.mode not in ("power", "coherent"):
            raise ValueError(f"unknown summation mode {self.mode!r}")
        if self.angles not in ("projected", "normal"):
            raise ValueError(f"unknown angle convention {self.angles!r}")
        if self.facet <= 0 or self.wavelength <= 0:
            raise ValueError("facet size and wavelength must be positive")

    @property
    def antenna_gain(self) -> float:
        return 10.0 ** ((self.g_gnb_dbi + self.g_ue_dbi) / 10.0)


@njit(cache=True)
def _facet_term(gx, gy, gz, fx, fy, fz, nx, ny, nz, tx, ty, tz, k, zeta, projected):
    """Unscaled facet gain cos^2(thI) eta / (d1 d2)^zeta; 0 when shadowed."""
    ix, iy, iz = fx - gx, fy - gy, fz - gz
    d1 = math.sqrt(ix * ix + iy * iy + iz * iz)
    rx, ry, rz = tx - fx, ty - fy, tz - fz
    d2 = math.sqrt(rx * rx + ry * ry + rz * rz)
    ix /= d1
    iy /= d1
    iz /= d1
    rx /= d2
    ry /= d2
    rz /= d2
    ci = ix * nx + iy * ny + iz * nz
    cr = rx * nx + ry * ny + rz * nz
    if ci >= 0.0 or cr <= 0.0:
        return 0.0
    # tangential parts
    ax, ay, az = ix - ci * nx, iy - ci * ny, iz - ci * nz
    bx, by, bz = rx - cr * nx, ry - cr * ny, rz - cr * nz
    si = math.sqrt(ax * ax + ay * ay + az * az)
    sb = math.sqrt(bx * bx + by * by + bz * bz)
    if projected and si > 1e-12:
        sr = (bx * ax + by * ay + bz * az) / si
    else:
        sr = sb
    x = math.pi * k * (sr - si)
    eta = 1.0 if abs(x) < 1e-12 else (math.sin(x) / x) ** 2
    return ci * ci * eta / (d1 * d2) ** zeta


def _checked(p, name):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    return p


def facet_gain(gnb, facet, n_hat, target, params: GainParams, return_flag: bool = False):
    """End-to-end linear gain through one facet.

    ``G_gNB G_UE (a^R)^4 cos^2(thI) eta / ((4 pi)^2 (d1 d2)^zeta)`` with
    ``eta = sinc^2(a^R/lambda (sin thR - sin thI))``. Returns 0 when either
    endpoint is behind the plate; with ``return_flag`` also returns that
    shadow flag.
    """
    g, f, t = _checked(gnb, "gnb"), _checked(facet, "facet"), _checked(target, "target")
    n = unit(_checked(n_hat, "n_hat"))
    if np.linalg.norm(f - g) == 0 or np.linalg.norm(t - f) == 0:
        raise ValueError("zero link distance")
    base = _facet_term(*g, *f, *n, *t, params.facet / params.wavelength, params.zeta,
                       params.angles == "projected")
    gain = params.antenna_gain * params.facet ** 4 / (4.0 * math.pi) ** 2 * base
    if return_flag:
        return gain, base == 0.0
    return gain


def sinc_eta(sin_r, sin_i, facet: float, wavelength: float):
    """Squared-sinc beam factor of one facet."""
    return np.sinc(facet / wavelength * (np.asarray(sin_r) - np.asarray(sin_i))) ** 2


@njit(cache=True)
def _plate_sum(gx, gy, gz, F, nx, ny, nz, tx, ty, tz, k, zeta, projected, coherent):
    acc = 0.0
    for r in range(F.shape[0]):
        v = _facet_term(gx, gy, gz, F[r, 0], F[r, 1], F[r, 2], nx, ny, nz, tx, ty, tz,
                        k, zeta, projected)
        acc += math.sqrt(v) if coherent else v
    return acc * acc if coherent else acc


def reflector_gain(gnb, reflector: Reflector, target, params: GainParams) -> float:
    """Aggregate gain over all facets (power sum, or (sum sqrt g)^2 when coherent)."""
    g, t = _checked(gnb, "gnb"), _checked(target, "target")
    n = reflector.normal
    base = _plate_sum(*g, np.ascontiguousarray(reflector.facets), *n, *t,
                      params.facet / params.wavelength, params.zeta,
                      params.angles == "projected", params.mode == "coherent")
    return params.antenna_gain * params.facet ** 4 / (4.0 * math.pi) ** 2 * base


# --------------------------------------------------------------------------
# candidates and tensor

def pmr_candidates(vgnb: np.ndarray, vosa: np.ndarray, surface: GridSet,
                   band: tuple[float, float]) -> GridSet:
    """Surface samples seen by a placed gNB and by some outage point, within ``band``.

    ``vgnb`` and ``vosa`` are boolean masks over ``surface`` (unions of the
    respective visibility sets).
    """
    z = surface.points[:, 2]
    keep = np.asarray(vgnb, bool) & np.asarray(vosa, bool) & (z >= band[0]) & (z <= band[1])
    if not keep.any():
        warnings.warn("no feasible reflector mounts", RuntimeWarning, stacklevel=2)
    return surface.subset(np.flatnonzero(keep), Role.PMR_CANDIDATE)


@njit(cache=True)
def _slice(gx, gy, gz, F, cls, ncls, nx, ny, nz, T, k, zeta, projected, coherent, out):
    """Per-class facet sums toward every target; out is (ncls, m), cumulative.

    Same terms as :func:`_facet_term`, with the gNB-side quantities of each
    facet computed once and shared by all targets.
    """
    m = T.shape[0]
    for c in range(ncls):
        for j in range(m):
            out[c, j] = 0.0
    square = zeta == 2.0
    pk = math.pi * k
    for r in range(F.shape[0]):
        fx, fy, fz = F[r, 0], F[r, 1], F[r, 2]
        ix, iy, iz = fx - gx, fy - gy, fz - gz
        d1 = math.sqrt(ix * ix + iy * iy + iz * iz)
        ix /= d1
        iy /= d1
        iz /= d1
        ci = ix * nx + iy * ny + iz * nz
        if ci >= 0.0:
            continue  # gNB behind the plate: shadowed for every target
        ax, ay, az = ix - ci * nx, iy - ci * ny, iz - ci * nz
        si = math.sqrt(ax * ax + ay * ay + az * az)
        proj = projected and si > 1e-12
        base = ci * ci / (d1 * d1 if square else d1 ** zeta)
        cr_ = cls[r]
        for j in range(m):
            rx, ry, rz = T[j, 0] - fx, T[j, 1] - fy, T[j, 2] - fz
            d2 = math.sqrt(rx * rx + ry * ry + rz * rz)
            rx /= d2
            ry /= d2
            rz /= d2
            cr = rx * nx + ry * ny + rz * nz
            if cr <= 0.0:
                continue
            if proj:
                sr = (rx * ax + ry * ay + rz * az) / si
            else:
                bx, by, bz = rx - cr * nx, ry - cr * ny, rz - cr * nz
                sr = math.sqrt(bx * bx + by * by + bz * bz)
            x = pk * (sr - si)
            eta = 1.0 if abs(x) < 1e-12 else (math.sin(x) / x) ** 2
            v = base * eta / (d2 * d2 if square else d2 ** zeta)
            out[cr_, j] += math.sqrt(v) if coherent else v
    for j in range(m):
        for c in range(1, ncls):
            out[c, j] += out[c - 1, j]
        if coherent:
            for c in range(ncls):
                out[c, j] = out[c, j] * out[c, j]


def _nested_lattice(sides, facet):
    """Largest lattice plus, per facet, the smallest plate size containing it."""
    sides = sorted(sides)
    big = lattice_offsets(sides[-1], facet)
    half = np.rint(2.0 * big[:, :2] / facet).astype(np.int64)  # odd/even half-units
    cls = np.full(len(big), -1, dtype=np.int64)
    for c in range(len(sides) - 1, -1, -1):
        n = int(round(sides[c] / facet))
        sub = np.rint(2.0 * lattice_offsets(sides[c], facet)[:, :2] / facet).astype(np.int64)
        lut = {tuple(p) for p in sub}
        inside = np.array([tuple(p) in lut for p in half])
        if inside.sum() != n * n:
            return None
        cls[inside] = c
    return big, cls


@dataclass
class GainTensor:
    """Sparse gains keyed by (gNB i, position k, orientation target l, grid j).

    ``triples`` lists the (i, k, l) combinations that carry at least one
    entry; ``entries`` holds rows (triple index, j, gain) sorted by triple
    then j. Indices refer to the gNB list, the candidate set and the outage
    set the tensor was built from.
    """

    triples: np.ndarray  # (T, 3) int
    normals: np.ndarray  # (T, 3)
    t_index: np.ndarray  # (E,) int
    j_index: np.ndarray  # (E,) int
    gain: np.ndarray  # (E,)
    n_targets: int
    side: float
    meta: dict = field(default_factory=dict)

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    def matrix(self):
        """(n_triples, n_targets) CSR matrix of gains."""
        from scipy.sparse import csr_matrix
        return csr_matrix((self.gain, (self.t_index, self.j_index)),
                          shape=(self.n_triples, self.n_targets))

    def lookup(self) -> dict:
        tr = self.triples
        return {(int(tr[t, 0]), int(tr[t, 1]), int(tr[t, 2]), int(j)): float(g)
                for t, j, g in zip(self.t_index, self.j_index, self.gain)}

    def to_csv(self, path) -> None:
        tr = self.triples
        with open(path, "w", newline="\n") as fh:
            fh.write("i,k,l,j,gain\n")
            for t, j, g in zip(self.t_index, self.j_index, self.gain):
                fh.write(f"{tr[t, 0]},{tr[t, 1]},{tr[t, 2]},{j},{g:.17g}\n")


def build_gain_tensor(gnb_locs, candidates: GridSet, outage: GridSet, params: GainParams,
                      cand_vis_outage: np.ndarray, gnb_vis_cand: np.ndarray | None = None,
                      sides=(1.0,), orient_stride: int = 1, orient_targets=None,
                      floor: float = GAIN_FLOOR) -> dict:
    """Gain tensors for one or more plate sizes sharing positions and orientations.

    Parameters
    ----------
    gnb_locs : (I, 3) placed gNB positions.
    candidates : reflector mounting points (plate centres).
    outage : grids to serve.
    cand_vis_outage : (K, O) bool, outage grid visible from plate centre.
    gnb_vis_cand : (I, K) bool, plate centre visible from gNB; all True if None.
    sides : plate side lengths; each must be a multiple of ``params.facet``.
    orient_stride : keep every n-th visible outage grid as an orientation target.
    orient_targets : optional (O,) bool restricting which outage grids may be aimed at.

    Returns
    -------
    dict mapping side -> GainTensor.
    """
    G = np.atleast_2d(np.asarray(gnb_locs, dtype=float))
    C = candidates.points
    T = np.ascontiguousarray(outage.points)
    K, O = len(C), len(T)
    vis = np.asarray(cand_vis_outage, bool).reshape(K, O)
    gv = np.ones((len(G), K), bool) if gnb_vis_cand is None else np.asarray(gnb_vis_cand, bool)
    sides = sorted(float(s) for s in sides)
    nest = _nested_lattice(sides, params.facet)
    if nest is None:
        return {s: build_gain_tensor(G, candidates, outage, params, vis, gv, (s,),
                                     orient_stride, orient_targets, floor)[s] for s in sides}
    lat, cls = nest
    order = np.argsort(cls, kind="stable")
    lat, cls = lat[order], cls[order]
    ncls = len(sides)
    aim_ok = np.ones(O, bool) if orient_targets is None else np.asarray(orient_targets, bool)
    k_ratio = params.facet / params.wavelength
    projected = params.angles == "projected"
    coherent = params.mode == "coherent"
    scale = params.antenna_gain * params.facet ** 4 / (4.0 * math.pi) ** 2

    parts = {s: ([], [], [], [], []) for s in sides}  # triples, normals, t, j, gain
    counts = {s: 0 for s in sides}
    for i, g in enumerate(G):
        for k in range(K):
            if not gv[i, k]:
                continue
            c = C[k]
            seen = np.flatnonzero(vis[k])
            if not len(seen):
                continue
            aims = seen[aim_ok[seen]][::orient_stride]
            Ts = np.ascontiguousarray(T[seen])
            d1 = np.linalg.norm(c - g)
            if d1 < 10.0 * sides[-1]:
                warnings.warn("reflector within 10 plate sides of the gNB; far-field "
                              "assumption is weak", FarFieldWarning, stacklevel=2)
            i_hat = (c - g) / d1
            buf = np.empty((ncls, len(seen)))
            for l in aims:
                try:
                    n = orient_normal(i_hat, unit(T[l] - c))
                except DegenerateGeometry:
                    log.info("skipping degenerate orientation (i=%d, k=%d, l=%d)", i, k, l)
                    continue
                rot = plate_rotation(n)
                F = np.ascontiguousarray(lat @ rot.T + c)
                _slice(g[0], g[1], g[2], F, cls, ncls, n[0], n[1], n[2], Ts, k_ratio,
                       params.zeta, projected, coherent, buf)
                for ci, s in enumerate(sides):
                    row = buf[ci] * scale
                    keep = row >= floor
                    if not keep.any():
                        continue
                    p = parts[s]
                    p[0].append((i, k, l))
                    p[1].append(n)
                    p[2].append(np.full(keep.sum(), counts[s]))
                    p[3].append(seen[keep])
                    p[4].append(row[keep])
                    counts[s] += 1

    out = {}
    meta = {"zeta": params.zeta, "wavelength": params.wavelength, "facet": params.facet,
            "g_gnb_dbi": params.g_gnb_dbi, "g_ue_dbi": params.g_ue_dbi, "mode": params.mode,
            "angles": params.angles, "orient_stride": orient_stride, "floor": floor}
    for s in sides:
        tr, nr, ti, jj, gg = parts[s]
        out[s] = GainTensor(
            np.asarray(tr, dtype=np.int64).reshape(-1, 3),
            np.asarray(nr, dtype=float).reshape(-1, 3),
            np.concatenate(ti) if ti else np.zeros(0, np.int64),
            np.concatenate(jj) if jj else np.zeros(0, np.int64),
            np.concatenate(gg) if gg else np.zeros(0),
            O, s, dict(meta, side=s))
    return out
