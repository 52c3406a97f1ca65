"""Scene database construction.

A raw scene is a terrain grid plus polygonal footprints (buildings,
vegetation patches, water surfaces). ``reconstruct`` filters the footprints
under a level-of-detail criterion, meshes everything into triangles,
extracts diffracting wedges and builds the BVH used by the tracer.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import BVH, MIN_AREA, Wedge, triangle_areas, triangle_normals

DB_FORMAT = "uavrt-scene-db/1"
WEDGE_MIN_ANGLE = math.radians(1.0)
WATER_OFFSET = 0.01  # m, water surface above the local terrain


class SceneError(ValueError):
    pass


class ParseError(SceneError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<text>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class Category(str, Enum):
    TERRAIN = "terrain"
    BUILDING = "building"
    VEGETATION = "vegetation"
    WATER = "water"


DEFAULT_CATEGORY_MATERIAL = {
    Category.TERRAIN: "wet_soil",
    Category.BUILDING: "concrete",
    Category.VEGETATION: "foliage",
    Category.WATER: "water",
}


@dataclass(frozen=True)
class Material:
    name: str
    eps_r: float
    reflective: bool = True
    foliage: bool = False

    def __post_init__(self):
        if not self.eps_r > 1:
            raise SceneError(f"material {self.name!r}: eps_r must exceed 1, got {self.eps_r}")


DEFAULT_MATERIALS = {
    "concrete": Material("concrete", 5.31),
    "wet_soil": Material("wet_soil", 15.0),
    "foliage": Material("foliage", 1.1, reflective=False, foliage=True),
    "water": Material("water", 20.0),
}


@dataclass(frozen=True)
class LodCriteria:
    min_building_height: float = 0.0
    include_vegetation: bool = True
    include_water: bool = True
    label: str = ""

    def __post_init__(self):
        if self.min_building_height < 0:
            raise SceneError("min building height must be >= 0")

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "min_building_height": self.min_building_height,
            "include_vegetation": self.include_vegetation,
            "include_water": self.include_water,
        }


DATABASE_I = LodCriteria(20.0, False, False, "DB-I")
DATABASE_II = LodCriteria(5.0, False, False, "DB-II")
DATABASE_III = LodCriteria(0.0, True, True, "DB-III")
STANDARD_CRITERIA = (DATABASE_I, DATABASE_II, DATABASE_III)


# --------------------------------------------------------------------------
# terrain


@dataclass(frozen=True)
class DemGrid:
    """Regular elevation grid; sample ``[i, j]`` sits at
    ``(origin_x + j * cell_size, origin_y + i * cell_size)``."""

    origin_x: float
    origin_y: float
    cell_size: float
    elevations: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.elevations, dtype=float)
        if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
            raise SceneError("DEM needs at least 2 rows and 2 columns")
        if not self.cell_size > 0:
            raise SceneError("DEM cell size must be positive")
        if not np.all(np.isfinite(z)):
            raise SceneError("DEM elevations must be finite")
        object.__setattr__(self, "elevations", z)

    @property
    def rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def cols(self) -> int:
        return self.elevations.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + (self.cols - 1) * self.cell_size,
            self.origin_y + (self.rows - 1) * self.cell_size,
        )

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.extent
        return x0 <= x <= x1 and y0 <= y <= y1

    def elevation_at(self, x: float, y: float) -> float:
        """Height of the triangulated surface (same diagonal as the mesh)."""
        if not self.contains(x, y):
            raise SceneError(f"point ({x}, {y}) outside the terrain grid")
        u = (x - self.origin_x) / self.cell_size
        v = (y - self.origin_y) / self.cell_size
        j = min(int(u), self.cols - 2)
        i = min(int(v), self.rows - 2)
        fu, fv = u - j, v - i
        z = self.elevations
        z00, z01, z11, z10 = z[i, j], z[i, j + 1], z[i + 1, j + 1], z[i + 1, j]
        if fu >= fv:  # lower-right triangle (LL, LR, UR)
            return float(z00 + fu * (z01 - z00) + fv * (z11 - z01))
        return float(z00 + fv * (z10 - z00) + fu * (z11 - z10))


def load_dem(source) -> DemGrid:
    """Parse a DEM text grid.

    Header ``rows cols cell_size origin_x origin_y`` then ``rows`` lines of
    ``cols`` elevations. Blank lines and ``#`` comments are skipped.
    """
    text, name = _read_source(source)
    lines = [
        (no, ln.split("#", 1)[0].split())
        for no, ln in enumerate(text.splitlines(), start=1)
    ]
    lines = [(no, toks) for no, toks in lines if toks]
    if not lines:
        raise ParseError("empty DEM file", None, name)
    no, head = lines[0]
    if len(head) != 5:
        raise ParseError("header must be 'rows cols cell_size origin_x origin_y'", no, name)
    try:
        rows, cols = int(head[0]), int(head[1])
        cell, ox, oy = float(head[2]), float(head[3]), float(head[4])
    except ValueError as exc:
        raise ParseError(f"bad header value ({exc})", no, name) from None
    if rows < 2 or cols < 2:
        raise ParseError("DEM needs at least 2 rows and 2 columns", no, name)
    body = lines[1:]
    if len(body) != rows:
        raise ParseError(f"expected {rows} data rows, found {len(body)}", no, name)
    z = np.empty((rows, cols))
    for r, (no, toks) in enumerate(body):
        if len(toks) != cols:
            raise ParseError(f"row {r} has {len(toks)} values, expected {cols}", no, name)
        try:
            z[r] = [float(t) for t in toks]
        except ValueError:
            raise ParseError(f"row {r} has a non-numeric value", no, name) from None
    try:
        return DemGrid(ox, oy, cell, z)
    except SceneError as exc:
        raise ParseError(str(exc), no, name) from None


def dump_dem(dem: DemGrid) -> str:
    out = io.StringIO()
    out.write(f"{dem.rows} {dem.cols} {dem.cell_size!r} {dem.origin_x!r} {dem.origin_y!r}\n")
    for row in dem.elevations:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def triangulate_terrain(dem: DemGrid) -> tuple[np.ndarray, np.ndarray]:
    """Two triangles per cell split along the lower-left/upper-right diagonal.

    Returns ``(vertices, faces)`` with counter-clockwise (upward) winding.
    """
    rows, cols = dem.rows, dem.cols
    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    vertices = np.column_stack(
        [
            dem.origin_x + jj.ravel() * dem.cell_size,
            dem.origin_y + ii.ravel() * dem.cell_size,
            dem.elevations.ravel(),
        ]
    )
    idx = np.arange(rows * cols).reshape(rows, cols)
    ll = idx[:-1, :-1].ravel()
    lr = idx[:-1, 1:].ravel()
    ur = idx[1:, 1:].ravel()
    ul = idx[1:, :-1].ravel()
    faces = np.empty((2 * ll.size, 3), dtype=np.int64)
    faces[0::2] = np.column_stack([ll, lr, ur])
    faces[1::2] = np.column_stack([ll, ur, ul])
    return vertices, faces


# --------------------------------------------------------------------------
# footprints


@dataclass(frozen=True)
class BuildingFootprint:
    polygon: np.ndarray  # (k, 2), metres
    height: float
    category: Category = Category.BUILDING
    material: str = ""

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float)
        cat = Category(self.category)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise SceneError("footprint needs at least 3 (x, y) vertices")
        if cat in (Category.BUILDING, Category.VEGETATION) and not self.height > 0:
            raise SceneError(f"{cat.value} footprint height must be positive")
        if abs(_signed_area(poly)) <= MIN_AREA:
            raise SceneError("footprint has zero area")
        if not _is_simple(poly):
            raise SceneError("footprint polygon self-intersects")
        if _signed_area(poly) < 0:
            poly = poly[::-1].copy()
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "category", cat)
        object.__setattr__(self, "material", self.material or DEFAULT_CATEGORY_MATERIAL[cat])


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _cross2(q1, q2, p1), _cross2(q1, q2, p2)
    d3, d4 = _cross2(p1, p2, q1), _cross2(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    # touching or collinear overlap

    def on_seg(a, b, c, d):
        return d == 0 and min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2) or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4)


def _is_simple(poly: np.ndarray) -> bool:
    k = len(poly)
    for i in range(k):
        a1, a2 = poly[i], poly[(i + 1) % k]
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or j == (i + 1) % k:
                continue
            if _segments_cross(a1, a2, poly[j], poly[(j + 1) % k]):
                return False
    return True


def triangulate_polygon(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear clipping for a simple counter-clockwise polygon."""
    remaining = list(range(len(poly)))
    tris = []
    guard = 0
    while len(remaining) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise SceneError("ear clipping failed; polygon is not simple")
        m = len(remaining)
        for k in range(m):
            i, j, l = remaining[k - 1], remaining[k], remaining[(k + 1) % m]
            a, b, c = poly[i], poly[j], poly[l]
            if _cross2(a, b, c) <= 0:
                continue
            if any(
                _cross2(a, b, poly[p]) >= 0 and _cross2(b, c, poly[p]) >= 0 and _cross2(c, a, poly[p]) >= 0
                for p in remaining
                if p not in (i, j, l)
            ):
                continue
            tris.append((i, j, l))
            del remaining[k]
            break
    tris.append(tuple(remaining))
    return tris


@dataclass
class MeshPart:
    vertices: np.ndarray
    faces: np.ndarray
    category: Category
    material: str
    height: float = 0.0


def extrude_building(footprint: BuildingFootprint, dem: DemGrid) -> MeshPart:
    """Prism from the lowest terrain point under the footprint to base + height.

    Walls are two triangles per polygon edge with outward normals; the flat
    roof is ear-clipped. There is no floor. Water footprints become a single
    flat surface just above the terrain.
    """
    poly = footprint.polygon
    for x, y in poly:
        if not dem.contains(x, y):
            raise SceneError(f"footprint vertex ({x}, {y}) lies outside the terrain")
    base = min(dem.elevation_at(x, y) for x, y in poly)
    k = len(poly)
    roof_tris = triangulate_polygon(poly)
    if footprint.category is Category.WATER:
        verts = np.column_stack([poly, np.full(k, base + WATER_OFFSET)])
        return MeshPart(verts, np.array(roof_tris, dtype=np.int64), footprint.category, footprint.material)
    top = base + footprint.height
    verts = np.vstack(
        [np.column_stack([poly, np.full(k, base)]), np.column_stack([poly, np.full(k, top)])]
    )
    faces = []
    for i in range(k):
        j = (i + 1) % k
        faces.append((i, j, k + j))
        faces.append((i, k + j, k + i))
    faces.extend((k + a, k + b, k + c) for a, b, c in roof_tris)
    return MeshPart(verts, np.array(faces, dtype=np.int64), footprint.category, footprint.material, footprint.height)


def find_wedges(vertices, faces, eligible) -> list[tuple[int, int, int, int, float]]:
    """Convex edges shared by two eligible faces whose normals differ by > 1 deg.

    Returns ``(va, vb, face0, facen, n)`` with ``face0 < facen``.
    """
    normals = triangle_normals(vertices, faces)
    edges: dict[tuple[int, int], list[int]] = {}
    for fi, tri in enumerate(faces):
        if not eligible[fi]:
            continue
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges.setdefault((min(a, b), max(a, b)), []).append(fi)
    out = []
    for (va, vb), fs in sorted(edges.items()):
        if len(fs) != 2:
            continue
        f0, fn = sorted(fs)
        cosang = float(np.clip(np.dot(normals[f0], normals[fn]), -1.0, 1.0))
        ang = math.acos(cosang)
        if ang <= WEDGE_MIN_ANGLE:
            continue
        other = [v for v in faces[fn] if v not in (va, vb)][0]
        if np.dot(normals[f0], vertices[other] - vertices[va]) > 0:
            continue  # concave edge
        n = 1.0 + ang / math.pi
        if not 1.0 <= n <= 2.0:
            continue
        out.append((va, vb, f0, fn, n))
    return out


# --------------------------------------------------------------------------
# raw scene and database


@dataclass
class RawScene:
    dem: DemGrid
    footprints: list[BuildingFootprint]
    materials: dict[str, Material] = field(default_factory=lambda: dict(DEFAULT_MATERIALS))


class SceneDatabase:
    """Triangle mesh with per-face material, category and object ids, plus
    wedges and a lazily built BVH. Treat as immutable once built."""

    def __init__(
        self,
        vertices,
        faces,
        face_material,
        face_category,
        face_object,
        materials: Sequence[Material],
        wedges: Sequence[tuple[int, int, int, int, float]],
        provenance: Optional[dict] = None,
    ):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.face_material = np.asarray(face_material, dtype=np.int64)
        self.face_category = list(face_category)
        self.face_object = np.asarray(face_object, dtype=np.int64)
        self.materials = list(materials)
        self.wedge_records = [tuple(w) for w in wedges]
        self.provenance = dict(provenance or {})
        if np.any(self.face_material < 0) or np.any(self.face_material >= len(self.materials)):
            raise SceneError("facet references an unknown material")

    # derived per-face arrays, read-only after first use
    @cached_property
    def normals(self) -> np.ndarray:
        return triangle_normals(self.vertices, self.faces)

    @cached_property
    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.faces)

    @cached_property
    def eps_r(self) -> np.ndarray:
        return np.array([self.materials[m].eps_r for m in self.face_material])

    @cached_property
    def reflective(self) -> np.ndarray:
        return np.array([self.materials[m].reflective for m in self.face_material], dtype=bool)

    @cached_property
    def foliage(self) -> np.ndarray:
        return np.array([self.materials[m].foliage for m in self.face_material], dtype=bool)

    @cached_property
    def bvh(self) -> BVH:
        return BVH(self.vertices, self.faces)

    @cached_property
    def wedges(self) -> list[Wedge]:
        return [
            Wedge(self.vertices[a], self.vertices[b], f0, fn, n, int(self.face_material[f0]))
            for a, b, f0, fn, n in self.wedge_records
        ]

    @cached_property
    def wedge_frames(self) -> dict:
        """Per-wedge arrays: start, unit edge, length, n, 0-face normal and
        the in-face direction ``t0`` pointing from the edge into the 0-face."""
        m = len(self.wedge_records)
        out = {k: np.zeros((m, 3)) for k in ("p0", "e", "n0", "t0", "nn")}
        out["length"] = np.zeros(m)
        out["n"] = np.zeros(m)
        out["face0"] = np.zeros(m, dtype=np.int64)
        out["facen"] = np.zeros(m, dtype=np.int64)
        for i, (a, b, f0, fn, n) in enumerate(self.wedge_records):
            p0, p1 = self.vertices[a], self.vertices[b]
            e = p1 - p0
            length = np.linalg.norm(e)
            e = e / length
            third = [v for v in self.faces[f0] if v not in (a, b)][0]
            t0 = self.vertices[third] - p0
            t0 = t0 - np.dot(t0, e) * e
            out["p0"][i], out["e"][i], out["length"][i], out["n"][i] = p0, e, length, n
            out["n0"][i] = self.normals[f0]
            out["nn"][i] = self.normals[fn]
            out["t0"][i] = t0 / np.linalg.norm(t0)
            out["face0"][i], out["facen"][i] = f0, fn
        return out

    @property
    def facet_count(self) -> int:
        return len(self.faces)

    @property
    def wedge_count(self) -> int:
        return len(self.wedge_records)

    def category_count(self, category: Category) -> int:
        objs = {int(o) for o, c in zip(self.face_object, self.face_category) if c == category.value}
        return len(objs)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "format": DB_FORMAT,
            "provenance": self.provenance,
            "materials": [
                {"name": m.name, "eps_r": m.eps_r, "reflective": m.reflective, "foliage": m.foliage}
                for m in self.materials
            ],
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "face_material": self.face_material.tolist(),
            "face_category": self.face_category,
            "face_object": self.face_object.tolist(),
            "wedges": [[int(a), int(b), int(f0), int(fn), float(n)] for a, b, f0, fn, n in self.wedge_records],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SceneDatabase":
        doc = json.loads(text)
        if doc.get("format") != DB_FORMAT:
            raise SceneError(f"not a scene database (format {doc.get('format')!r})")
        return cls(
            np.array(doc["vertices"], dtype=float).reshape(-1, 3),
            doc["faces"],
            doc["face_material"],
            doc["face_category"],
            doc["face_object"],
            [Material(**m) for m in doc["materials"]],
            [(a, b, f0, fn, n) for a, b, f0, fn, n in doc["wedges"]],
            doc["provenance"],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SceneDatabase":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def select_footprints(footprints: Iterable[BuildingFootprint], criteria: LodCriteria) -> list[BuildingFootprint]:
    kept = []
    for fp in footprints:
        if fp.category is Category.BUILDING:
            if fp.height >= criteria.min_building_height:
                kept.append(fp)
        elif fp.category is Category.VEGETATION:
            if criteria.include_vegetation:
                kept.append(fp)
        elif fp.category is Category.WATER:
            if criteria.include_water:
                kept.append(fp)
    return kept


def reconstruct(raw: RawScene, criteria: LodCriteria) -> SceneDatabase:
    """Build the database for one level of detail.

    Terrain is always present; buildings are kept when at least
    ``min_building_height`` tall; vegetation and water follow the flags.
    Object id 0 is the terrain; footprint ``i`` of the raw scene is object
    ``i + 1`` so ids stay stable across levels of detail.
    """
    tv, tf = triangulate_terrain(raw.dem)
    parts = [(0, MeshPart(tv, tf, Category.TERRAIN, DEFAULT_CATEGORY_MATERIAL[Category.TERRAIN]))]
    kept = {id(fp) for fp in select_footprints(raw.footprints, criteria)}
    for i, fp in enumerate(raw.footprints):
        if id(fp) in kept:
            parts.append((i + 1, extrude_building(fp, raw.dem)))
    db = assemble(parts, raw.materials)
    db.provenance = {
        "criteria": criteria.as_dict(),
        "facet_count": db.facet_count,
        "wedge_count": db.wedge_count,
        "building_count": sum(1 for _, p in parts if p.category is Category.BUILDING),
        "vegetation_count": sum(1 for _, p in parts if p.category is Category.VEGETATION),
        "water_count": sum(1 for _, p in parts if p.category is Category.WATER),
    }
    return db


def assemble(parts: Sequence[tuple[int, MeshPart]], table: dict) -> SceneDatabase:
    """Merge ``(object id, mesh)`` parts into one database, detecting wedges
    within each non-vegetation part."""
    verts, faces, cats, objs, mat_names, wedges = [], [], [], [], [], []
    offset = face_offset = 0
    for obj, part in parts:
        nf = len(part.faces)
        verts.append(np.asarray(part.vertices, dtype=float).reshape(-1, 3))
        faces.append(np.asarray(part.faces, dtype=np.int64).reshape(-1, 3) + offset)
        cats.extend([part.category.value] * nf)
        objs.extend([obj] * nf)
        mat_names.extend([part.material] * nf)
        if part.category is not Category.VEGETATION and nf:
            for a, b, f0, fn, n in find_wedges(part.vertices, part.faces, np.ones(nf, dtype=bool)):
                wedges.append((a + offset, b + offset, f0 + face_offset, fn + face_offset, n))
        offset += len(part.vertices)
        face_offset += nf
    if not verts:
        verts, faces = [np.zeros((0, 3))], [np.zeros((0, 3), dtype=np.int64)]
    return assign_materials(np.vstack(verts), np.vstack(faces), mat_names, cats, objs, table, wedges)


def assign_materials(vertices, faces, material_names, categories, objects, table: dict, wedges=()):
    """Resolve per-facet material names against ``table``.

    Only materials actually referenced are stored, in first-use order, so
    the database is independent of table ordering.
    """
    used: dict[str, int] = {}
    face_material = []
    for name in material_names:
        if name not in table:
            raise SceneError(f"no material {name!r} in the material table")
        face_material.append(used.setdefault(name, len(used)))
    mats = [table[name] for name in used]
    return SceneDatabase(vertices, faces, face_material, categories, objects, mats, wedges)


# --------------------------------------------------------------------------
# text formats


def _read_source(source) -> tuple[str, str]:
    if isinstance(source, Path):
        return source.read_text(), str(source)
    if isinstance(source, str) and "\n" not in source and Path(source).exists():
        return Path(source).read_text(), source
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    return str(source), "<text>"


def load_footprints(source) -> list[BuildingFootprint]:
    """One footprint per line: ``category material height x1 y1 x2 y2 ...``."""
    text, name = _read_source(source)
    out = []
    for no, line in enumerate(text.splitlines(), start=1):
        toks = line.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) < 9 or (len(toks) - 3) % 2:
            raise ParseError("expected 'category material height' and >= 3 x y pairs", no, name)
        try:
            cat = Category(toks[0])
        except ValueError:
            raise ParseError(f"unknown category {toks[0]!r}", no, name) from None
        if cat is Category.TERRAIN:
            raise ParseError("terrain comes from the DEM, not the scene file", no, name)
        try:
            height = float(toks[2])
            xy = np.array([float(t) for t in toks[3:]]).reshape(-1, 2)
        except ValueError:
            raise ParseError("non-numeric height or coordinate", no, name) from None
        try:
            out.append(BuildingFootprint(xy, height, cat, toks[1]))
        except SceneError as exc:
            raise ParseError(str(exc), no, name) from None
    return out


def dump_footprints(footprints: Iterable[BuildingFootprint]) -> str:
    lines = ["# category material height x1 y1 x2 y2 ..."]
    for fp in footprints:
        coords = " ".join(repr(float(c)) for c in fp.polygon.ravel())
        lines.append(f"{fp.category.value} {fp.material} {fp.height!r} {coords}")
    return "\n".join(lines) + "\n"


def load_material_table(source) -> dict[str, Material]:
    """Lines ``name epsilon_r flags``; flags is ``-`` or a comma list of
    ``reflective`` / ``foliage``. A missing flags column means reflective."""
    text, name = _read_source(source)
    table = {}
    for no, line in enumerate(text.splitlines(), start=1):
        toks = line.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) not in (2, 3):
            raise ParseError("expected 'name epsilon_r flags'", no, name)
        try:
            eps = float(toks[1])
        except ValueError:
            raise ParseError(f"bad epsilon_r {toks[1]!r}", no, name) from None
        if len(toks) == 2:
            flags = {"reflective"}
        else:
            flags = set() if toks[2] == "-" else set(toks[2].split(","))
        unknown = flags - {"reflective", "foliage"}
        if unknown:
            raise ParseError(f"unknown flags {sorted(unknown)}", no, name)
        try:
            table[toks[0]] = Material(toks[0], eps, "reflective" in flags, "foliage" in flags)
        except SceneError as exc:
            raise ParseError(str(exc), no, name) from None
    return table


def dump_material_table(table: dict[str, Material]) -> str:
    lines = ["# name epsilon_r flags"]
    for m in table.values():
        flags = ",".join(f for f, on in (("reflective", m.reflective), ("foliage", m.foliage)) if on) or "-"
        lines.append(f"{m.name} {m.eps_r!r} {flags}")
    return "\n".join(lines) + "\n"
