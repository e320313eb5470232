"""Direct, specular (image method) and diffuse first-order visibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scenario import Face, GridSet, Scenario, points_in_polygon

TOL = 1e-9  # metres; plane-crossing and on-face tolerance


@dataclass(frozen=True)
class OcclusionIndex:
    """Building edges and roofs packed for the compiled segment test.

    Segments are culled per building by 2D bounding box and height before any
    face is examined.
    """

    ex0: np.ndarray
    ey0: np.ndarray
    ex1: np.ndarray
    ey1: np.ndarray
    bstart: np.ndarray
    bcount: np.ndarray
    heights: np.ndarray
    bbox: np.ndarray
    tol: float = TOL

    @classmethod
    def from_scenario(cls, s: Scenario, tol: float = TOL) -> "OcclusionIndex":
        a, b, start, count, h, bb = [], [], [], [], [], []
        for bld in s.buildings:
            fp = bld.footprint
            start.append(len(a))
            count.append(len(fp))
            a.extend(fp)
            b.extend(np.roll(fp, -1, axis=0))
            h.append(bld.height)
            bb.append([*fp.min(axis=0), *fp.max(axis=0)])
        a = np.asarray(a, float).reshape(-1, 2)
        b = np.asarray(b, float).reshape(-1, 2)
        return cls(np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]),
                   np.ascontiguousarray(b[:, 0]), np.ascontiguousarray(b[:, 1]),
                   np.asarray(start, np.int64), np.asarray(count, np.int64),
                   np.asarray(h, float), np.asarray(bb, float).reshape(-1, 4), tol)

    def _args(self):
        return (self.ex0, self.ey0, self.ex1, self.ey1, self.bstart, self.bcount,
                self.heights, self.bbox, self.tol)

    def segment_clear(self, p, q) -> bool:
        p, q = np.asarray(p, float), np.asarray(q, float)
        return not _kernels.blocked(p[0], p[1], p[2], q[0], q[1], q[2], *self._args())

    def clear_pairs(self, P, Q) -> np.ndarray:
        P = np.ascontiguousarray(P, dtype=float).reshape(-1, 3)
        Q = np.ascontiguousarray(Q, dtype=float).reshape(-1, 3)
        return _kernels.clear_pairs(P, Q, *self._args())

    def clear_matrix(self, A, B) -> np.ndarray:
        A = np.ascontiguousarray(A, dtype=float).reshape(-1, 3)
        B = np.ascontiguousarray(B, dtype=float).reshape(-1, 3)
        return _kernels.clear_matrix(A, B, *self._args())


def segment_clear(p, q, occ: OcclusionIndex) -> bool:
    return occ.segment_clear(p, q)


@dataclass(frozen=True)
class VisibilityIndex:
    source: np.ndarray
    direct: np.ndarray  # bool (M,)
    specular: np.ndarray
    diffuse: np.ndarray
    witness_face: np.ndarray  # int (M,), -1 where no specular path
    witness_point: np.ndarray  # (M, 3), nan where no specular path

    def classes(self, mode: str = "diffuse") -> np.ndarray:
        """0 blocked, 1 indirect, 2 direct."""
        indirect = {"direct": np.zeros_like(self.direct), "specular": self.specular,
                    "diffuse": self.diffuse}[mode]
        return np.where(self.direct, 2, np.where(indirect, 1, 0)).astype(np.uint8)


def _targets(targets) -> np.ndarray:
    return targets.points if isinstance(targets, GridSet) else np.asarray(targets, float)


def direct_visibility(s, targets, occ: OcclusionIndex) -> np.ndarray:
    return occ.clear_matrix(np.asarray(s, float), _targets(targets))[0]


def face_geometry(scenario: Scenario):
    """Per-face data for in-face tests: the owning footprint, wall endpoints."""
    geo = []
    for f in scenario.faces():
        b = scenario.buildings[f.building]
        if f.kind == "wall":
            a = b.footprint[f.edge]
            c = b.footprint[(f.edge + 1) % len(b.footprint)]
            geo.append((f, a, c, b.height, None))
        else:
            geo.append((f, None, None, b.height, b.footprint))
    return geo


def _on_face(pts: np.ndarray, a, c, height, footprint, tol: float) -> np.ndarray:
    if footprint is not None:
        return points_in_polygon(pts[:, :2], footprint, tol)
    d = c - a
    L = np.hypot(*d)
    u = ((pts[:, 0] - a[0]) * d[0] + (pts[:, 1] - a[1]) * d[1]) / L
    return (u >= -tol) & (u <= L + tol) & (pts[:, 2] >= -tol) & (pts[:, 2] <= height + tol)


def specular_visibility(s, targets, faces, occ: OcclusionIndex, direct=None):
    """One-bounce specular visibility by mirroring ``s`` across each reflective face.

    ``faces`` is the output of :func:`face_geometry`. Returns ``(bits,
    witness_face, witness_point)``; the first face in face order that yields
    a clear Snell-compliant path is recorded as the witness.
    """
    s = np.asarray(s, float)
    T = _targets(targets)
    M = len(T)
    if direct is None:
        direct = direct_visibility(s, T, occ)
    found = np.zeros(M, dtype=bool)
    wface = np.full(M, -1, dtype=np.int64)
    wpt = np.full((M, 3), np.nan)
    tol = occ.tol
    for fi, (f, a, c, height, footprint) in enumerate(faces):
        if not f.reflective:
            continue
        ds = f.normal @ s - f.offset
        if ds <= tol:
            continue
        open_ = ~(direct | found)
        if not open_.any():
            break
        idx = np.flatnonzero(open_)
        dt = T[idx] @ f.normal - f.offset
        front = dt > tol
        idx, dt = idx[front], dt[front]
        if not len(idx):
            continue
        image = s - 2.0 * ds * f.normal
        frac = ds / (ds + dt)
        b = image + frac[:, None] * (T[idx] - image)
        inside = _on_face(b, a, c, height, footprint, tol)
        idx, b = idx[inside], b[inside]
        if not len(idx):
            continue
        ok = occ.clear_pairs(np.broadcast_to(s, b.shape), b) & occ.clear_pairs(b, T[idx])
        hit = idx[ok]
        found[hit] = True
        wface[hit] = fi
        wpt[hit] = b[ok]
    return found, wface, wpt


def diffuse_visibility(s, targets, surface: GridSet, occ: OcclusionIndex, direct=None,
                       target_surface=None) -> np.ndarray:
    """Targets outside V(s) sharing at least one visible surface sample with ``s``.

    ``target_surface`` is an optional precomputed (M, B) clear matrix between
    targets and surface samples; pass it when evaluating many sources.
    """
    s = np.asarray(s, float)
    T = _targets(targets)
    if direct is None:
        direct = direct_visibility(s, T, occ)
    if len(surface) == 0:
        return np.zeros(len(T), dtype=bool)
    seen = occ.clear_matrix(s, surface.points)[0]
    if not seen.any():
        return np.zeros(len(T), dtype=bool)
    if target_surface is None:
        shared = occ.clear_matrix(T, surface.points[seen]).any(axis=1)
    else:
        shared = target_surface[:, seen].any(axis=1)
    return shared & ~direct


class VisibilityEngine:
    """Evaluates visibility for many sources against one target set.

    Holds the occlusion index, the face list and, once requested, the
    target-to-surface clear matrix shared by every diffuse query.
    """

    def __init__(self, scenario: Scenario, targets: GridSet, surface: GridSet | None = None,
                 occ: OcclusionIndex | None = None):
        self.scenario = scenario
        self.targets = targets
        self.surface = surface
        self.occ = occ or OcclusionIndex.from_scenario(scenario)
        self.faces = face_geometry(scenario)
        self._ts = None

    @property
    def target_surface(self) -> np.ndarray:
        if self._ts is None:
            self._ts = self.occ.clear_matrix(self.targets.points, self.surface.points)
        return self._ts

    def index(self, s, diffuse: bool = True) -> VisibilityIndex:
        s = np.asarray(s, float)
        T = self.targets.points
        direct = direct_visibility(s, T, self.occ)
        spec, wf, wp = specular_visibility(s, T, self.faces, self.occ, direct)
        if diffuse and self.surface is not None:
            dif = diffuse_visibility(s, T, self.surface, self.occ, direct, self.target_surface)
        else:
            dif = np.zeros(len(T), dtype=bool)
        # a specular bounce point is itself a scatterer visible from both ends
        dif |= spec
        return VisibilityIndex(s, direct, spec, dif, wf, wp)

    def indices(self, sources: GridSet | np.ndarray, diffuse: bool = True):
        pts = _targets(sources)
        return [self.index(p, diffuse) for p in pts]


def stack(indices, kind: str) -> np.ndarray:
    """(N, M) bool matrix of one visibility kind across sources."""
    return np.vstack([getattr(v, kind) for v in indices])


# --------------------------------------------------------------------------
# export

PGM_BLOCKED, PGM_BUILDING, PGM_INDIRECT, PGM_DIRECT = 0, 64, 128, 255


def raster(scenario: Scenario, grid: GridSet, values: np.ndarray, fill: int) -> np.ndarray:
    """Scatter per-point values into a (rows, cols) raster; rows run south to north."""
    img = np.full(scenario.shape, fill, dtype=np.int64)
    img[grid.cell[:, 0], grid.cell[:, 1]] = values
    return img


def write_pgm(path, img: np.ndarray, maxval: int = 255) -> None:
    """Plain (P2) PGM, top row = northmost cells."""
    img = np.asarray(img)[::-1]
    rows, cols = img.shape
    lines = ["P2", f"{cols} {rows}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def visibility_raster(scenario: Scenario, grid: GridSet, vis: VisibilityIndex,
                      mode: str = "diffuse") -> np.ndarray:
    lut = np.array([PGM_BLOCKED, PGM_INDIRECT, PGM_DIRECT])
    return raster(scenario, grid, lut[vis.classes(mode)], PGM_BUILDING)


def write_visibility_csv(path, grid: GridSet, vis: VisibilityIndex, mode: str = "diffuse"):
    names = {0: "blocked", 1: "indirect", 2: "direct"}
    cls = vis.classes(mode)
    with open(path, "w", newline="\n") as fh:
        fh.write("index,x,y,z,class\n")
        for j, (p, c) in enumerate(zip(grid.points, cls)):
            fh.write(f"{j},{p[0]:.3f},{p[1]:.3f},{p[2]:.3f},{names[int(c)]}\n")
