"""3D urban environment: extruded buildings on flat terrain and the point grids
derived from it (service area, gNB candidates, building surfaces)."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from shapely.geometry import Polygon, box

SCHEMA_VERSION = 1
_EPS = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""


class Role(str, enum.Enum):
    SERVICE_AREA = "ServiceArea"
    GNB_CANDIDATE = "GnbCandidate"
    BUILDING_SURFACE = "BuildingSurface"
    PMR_CANDIDATE = "PmrCandidate"
    OUTAGE_AREA = "OutageArea"


@dataclass(frozen=True)
class Building:
    id: str
    footprint: np.ndarray  # (n, 2), counter-clockwise
    height: float
    reflective_walls: tuple[bool, ...] = ()
    reflective_roof: bool = True

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        object.__setattr__(self, "footprint", fp)
        if not self.reflective_walls:
            object.__setattr__(self, "reflective_walls", (True,) * len(fp))

    @property
    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.footprint, self.footprint[:1]]), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @property
    def area(self) -> float:
        x, y = self.footprint[:, 0], self.footprint[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def edges(self):
        """Yield (start, end, outward_normal_2d) for every footprint edge."""
        fp = self.footprint
        for e in range(len(fp)):
            a, b = fp[e], fp[(e + 1) % len(fp)]
            d = b - a
            L = math.hypot(d[0], d[1])
            yield a, b, np.array([d[1] / L, -d[0] / L])


@dataclass(frozen=True)
class Face:
    """One planar building face: a vertical wall above a footprint edge, or a roof."""

    building: int
    kind: str  # "wall" | "roof"
    edge: int  # footprint edge index, -1 for roofs
    normal: np.ndarray  # outward unit normal (3,)
    offset: float  # plane: normal . x == offset
    reflective: bool


@dataclass(frozen=True)
class Scenario:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    buildings: tuple[Building, ...]
    grid_resolution: float = 1.0
    ue_height: float = 1.5
    gnb_mount_offset: float = 0.0
    pmr_height_band: tuple[float, float] = (5.0, 35.0)
    name: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        """Raster shape (rows, cols) of the cell grid covering the bounds."""
        xmin, ymin, xmax, ymax = self.bounds
        r = self.grid_resolution
        return (int(math.floor((ymax - ymin) / r + _EPS)),
                int(math.floor((xmax - xmin) / r + _EPS)))

    def faces(self) -> list[Face]:
        """All building faces: per building its walls in edge order, then its roof."""
        out = []
        for bi, b in enumerate(self.buildings):
            for e, (a, _, n2) in enumerate(b.edges()):
                n = np.array([n2[0], n2[1], 0.0])
                out.append(Face(bi, "wall", e, n, float(n2 @ a), b.reflective_walls[e]))
            out.append(Face(bi, "roof", -1, np.array([0.0, 0.0, 1.0]), b.height,
                            b.reflective_roof))
        return out

    def without_building(self, index: int) -> "Scenario":
        bs = tuple(b for i, b in enumerate(self.buildings) if i != index)
        return Scenario(self.bounds, bs, self.grid_resolution, self.ue_height,
                        self.gnb_mount_offset, self.pmr_height_band, self.name)


@dataclass(frozen=True)
class GridSet:
    role: Role
    points: np.ndarray  # (n, 3)
    resolution: float
    normals: np.ndarray | None = None  # (n, 3) outward unit normals for surface points
    building: np.ndarray | None = None  # (n,) owning building index
    face: np.ndarray | None = None  # (n,) index into Scenario.faces()
    cell: np.ndarray | None = None  # (n, 2) raster (row, col) for area grids

    def __len__(self):
        return len(self.points)

    def subset(self, index, role: Role | None = None) -> "GridSet":
        index = np.asarray(index)
        pick = lambda a: None if a is None else a[index]
        return GridSet(role or self.role, self.points[index], self.resolution,
                       pick(self.normals), pick(self.building), pick(self.face),
                       pick(self.cell))


def dist3d(p, q) -> float:
    p, q = np.asarray(p, float), np.asarray(q, float)
    return float(np.linalg.norm(p - q))


def dist2d(p, q) -> float:
    p, q = np.asarray(p, float), np.asarray(q, float)
    return float(np.hypot(p[0] - q[0], p[1] - q[1]))


# --------------------------------------------------------------------------
# loading and validation

def _building_from_dict(d: dict, index: int) -> Building:
    bid = str(d.get("id", f"B{index + 1}"))
    try:
        fp = np.asarray(d["footprint"], dtype=float)
        height = float(d["height_m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"building {bid!r}: malformed entry ({exc})") from None
    if fp.ndim != 2 or fp.shape[1] != 2 or len(fp) < 3:
        raise ScenarioError(f"building {bid!r}: footprint needs >= 3 [x, y] vertices")
    if not np.all(np.isfinite(fp)) or not math.isfinite(height):
        raise ScenarioError(f"building {bid!r}: non-finite coordinates")
    if height <= 0:
        raise ScenarioError(f"building {bid!r}: height must be > 0, got {height}")
    if np.allclose(fp[0], fp[-1]):
        fp = fp[:-1]
    poly = Polygon(fp)
    if not poly.is_valid or poly.area <= 0 or len(fp) < 3:
        raise ScenarioError(f"building {bid!r}: footprint is not a simple polygon")
    if not poly.exterior.is_ccw:
        fp = fp[::-1].copy()

    refl = d.get("reflective", True)
    if isinstance(refl, bool):
        walls, roof = (refl,) * len(fp), refl
    else:
        w = refl.get("walls", True)
        walls = (bool(w),) * len(fp) if isinstance(w, bool) else tuple(bool(v) for v in w)
        roof = bool(refl.get("roof", True))
        if len(walls) != len(fp):
            raise ScenarioError(f"building {bid!r}: reflective.walls needs {len(fp)} flags")
    return Building(bid, fp, height, walls, roof)


def scenario_from_dict(d: dict) -> Scenario:
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}")
    try:
        bd = d["bounds"]
        if isinstance(bd, dict):
            bounds = tuple(float(bd[k]) for k in ("xmin", "ymin", "xmax", "ymax"))
        else:
            bounds = tuple(float(v) for v in np.asarray(bd, dtype=float).ravel())
        res = float(d.get("resolution_m", 1.0))
        ue = float(d.get("ue_height_m", 1.5))
        off = float(d.get("gnb_mount_offset_m", 0.0))
        band = tuple(float(v) for v in d.get("pmr_height_band_m", (5.0, 35.0)))
        raw_buildings = list(d.get("buildings", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from None
    if len(bounds) != 4 or bounds[2] <= bounds[0] or bounds[3] <= bounds[1]:
        raise ScenarioError(f"bounds must be [xmin, ymin, xmax, ymax], got {bounds}")
    if res <= 0:
        raise ScenarioError("resolution_m must be > 0")
    if len(band) != 2 or not (0 < band[0] < band[1]):
        raise ScenarioError(f"pmr_height_band_m must satisfy 0 < low < high, got {band}")
    if off < 0:
        raise ScenarioError("gnb_mount_offset_m must be >= 0")

    buildings = tuple(_building_from_dict(b, i) for i, b in enumerate(raw_buildings))
    region = box(*bounds)
    polys = [Polygon(b.footprint) for b in buildings]
    for b, p in zip(buildings, polys):
        if not region.buffer(1e-9).contains(p):
            raise ScenarioError(f"building {b.id!r} lies outside the scenario bounds")
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if polys[i].intersection(polys[j]).area > 1e-9:
                raise ScenarioError(
                    f"buildings {buildings[i].id!r} and {buildings[j].id!r} overlap")
    ids = [b.id for b in buildings]
    if len(set(ids)) != len(ids):
        raise ScenarioError("building ids must be unique")
    return Scenario(bounds, buildings, res, ue, off, band, str(d.get("name", "")))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    if not isinstance(d, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return scenario_from_dict(d)


def scenario_to_dict(s: Scenario) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "bounds": list(s.bounds),
        "resolution_m": s.grid_resolution,
        "ue_height_m": s.ue_height,
        "gnb_mount_offset_m": s.gnb_mount_offset,
        "pmr_height_band_m": list(s.pmr_height_band),
        "buildings": [],
    }
    for b in s.buildings:
        entry = {"id": b.id, "footprint": b.footprint.tolist(), "height_m": b.height}
        if not all(b.reflective_walls) or not b.reflective_roof:
            entry["reflective"] = {"walls": list(b.reflective_walls), "roof": b.reflective_roof}
        out["buildings"].append(entry)
    return out


def reference_scenario() -> Scenario:
    """The shipped six-building evaluation scenario."""
    text = resources.files("mmwplan.data").joinpath("reference_scenario.json").read_text()
    return scenario_from_dict(json.loads(text))


# --------------------------------------------------------------------------
# grids

def points_in_polygon(xy: np.ndarray, poly: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Even-odd test; points within ``tol`` of the boundary count as inside."""
    xy = np.atleast_2d(xy)
    x, y = xy[:, 0:1], xy[:, 1:2]
    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = ax + (y - ay) * (bx - ax) / (by - ay)
    inside = (np.count_nonzero(straddle & (x < xc), axis=1) % 2) == 1
    if tol > 0:
        ex, ey = bx - ax, by - ay
        L2 = ex * ex + ey * ey
        u = np.clip(((x - ax) * ex + (y - ay) * ey) / L2, 0.0, 1.0)
        d2 = (x - ax - u * ex) ** 2 + (y - ay - u * ey) ** 2
        inside |= (d2 <= tol * tol).any(axis=1)
    return inside


def generate_service_grid(s: Scenario) -> GridSet:
    xmin, ymin, _, _ = s.bounds
    r = s.grid_resolution
    rows, cols = s.shape
    iy, ix = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    iy, ix = iy.ravel(), ix.ravel()  # row-major: sorted by (y, x)
    xy = np.column_stack([xmin + (ix + 0.5) * r, ymin + (iy + 0.5) * r])
    keep = np.ones(len(xy), dtype=bool)
    for b in s.buildings:
        keep &= ~points_in_polygon(xy, b.footprint)
    pts = np.column_stack([xy[keep], np.full(keep.sum(), s.ue_height)])
    return GridSet(Role.SERVICE_AREA, pts, r, cell=np.column_stack([iy[keep], ix[keep]]))


def _perimeter_samples(fp: np.ndarray, spacing: float) -> np.ndarray:
    closed = np.vstack([fp, fp[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(math.floor(cum[-1] / spacing + _EPS))
    s = np.arange(n) * spacing
    e = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[e]) / seg[e]
    return closed[e] + t[:, None] * (closed[e + 1] - closed[e])


def generate_gnb_candidates(s: Scenario) -> GridSet:
    if not s.buildings:
        raise ScenarioError("no mounting surfaces: scenario has no buildings")
    pts, owner = [], []
    for bi, b in enumerate(s.buildings):
        xy = _perimeter_samples(b.footprint, s.grid_resolution)
        pts.append(np.column_stack([xy, np.full(len(xy), b.height + s.gnb_mount_offset)]))
        owner.append(np.full(len(xy), bi))
    return GridSet(Role.GNB_CANDIDATE, np.vstack(pts), s.grid_resolution,
                   building=np.concatenate(owner))


def _centered_ticks(length: float, spacing: float) -> np.ndarray:
    n = int(math.floor(length / spacing + _EPS))
    start = 0.5 * (length - n * spacing)
    return start + (np.arange(n) + 0.5) * spacing


def generate_building_surface_grid(s: Scenario, facet: float) -> GridSet:
    """Tile every wall and roof at spacing ``facet``; points carry outward normals."""
    if facet <= 0:
        raise ScenarioError("facet must be > 0")
    pts, nrm, owner, face_ids = [], [], [], []
    fid = 0
    for bi, b in enumerate(s.buildings):
        zs = _centered_ticks(b.height, facet)
        for a, c, n2 in b.edges():
            L = float(np.hypot(*(c - a)))
            us = _centered_ticks(L, facet)
            if len(us) and len(zs):
                u, z = np.meshgrid(us, zs, indexing="ij")
                xy = a + np.outer(u.ravel() / L, c - a)
                pts.append(np.column_stack([xy, z.ravel()]))
                nrm.append(np.tile([n2[0], n2[1], 0.0], (u.size, 1)))
                owner.append(np.full(u.size, bi))
                face_ids.append(np.full(u.size, fid))
            fid += 1
        lo, hi = b.footprint.min(axis=0), b.footprint.max(axis=0)
        xs = lo[0] + _centered_ticks(hi[0] - lo[0], facet)
        ys = lo[1] + _centered_ticks(hi[1] - lo[1], facet)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        xy = np.column_stack([gx.ravel(), gy.ravel()])
        if len(xy):
            xy = xy[points_in_polygon(xy, b.footprint)]
        if len(xy):
            pts.append(np.column_stack([xy, np.full(len(xy), b.height)]))
            nrm.append(np.tile([0.0, 0.0, 1.0], (len(xy), 1)))
            owner.append(np.full(len(xy), bi))
            face_ids.append(np.full(len(xy), fid))
        fid += 1
    if not pts:
        raise ScenarioError(f"facet {facet} m exceeds every face dimension")
    return GridSet(Role.BUILDING_SURFACE, np.vstack(pts), facet, np.vstack(nrm),
                   np.concatenate(owner), np.concatenate(face_ids))
