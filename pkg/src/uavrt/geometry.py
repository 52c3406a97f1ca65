"""3D geometry primitives: vectors, spherical angles, planes, triangle meshes,
wedges and a bounding-volume hierarchy for ray and segment queries.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. The frame is
right-handed with z up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

EPS_SELF = 1e-6  # m, self-intersection guard on ray/segment endpoints
MIN_AREA = 1e-12  # m^2


class DegenerateGeometryError(ValueError):
    """Raised when an operation is given coincident points or a zero-area plane."""


def vec3(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DegenerateGeometryError("cannot normalize a zero vector")
    return v / norm


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class SphericalAngles:
    """Azimuth in (-pi, pi] and elevation in [-pi/2, pi/2], radians."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (math.isfinite(self.azimuth) and math.isfinite(self.elevation)):
            raise ValueError("angles must be finite")
        if abs(self.elevation) > math.pi / 2 + 1e-12:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")
        object.__setattr__(self, "azimuth", wrap_angle(self.azimuth))
        object.__setattr__(
            self, "elevation", min(max(self.elevation, -math.pi / 2), math.pi / 2)
        )


def spherical_unit_vector(angles: SphericalAngles) -> np.ndarray:
    ce = math.cos(angles.elevation)
    return np.array(
        [
            ce * math.cos(angles.azimuth),
            ce * math.sin(angles.azimuth),
            math.sin(angles.elevation),
        ]
    )


def angles_of_separation(src, dst) -> SphericalAngles:
    """Direction angles of ``dst`` as seen from ``src``.

    Elevation is the arctangent of the vertical offset over the horizontal
    range. Azimuth uses the two-argument arctangent so that all four
    quadrants are recovered. A purely vertical separation has azimuth 0.
    """
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    horiz = math.hypot(d[0], d[1])
    if horiz == 0.0:
        if d[2] == 0.0:
            raise DegenerateGeometryError("coincident points have no direction")
        return SphericalAngles(0.0, math.copysign(math.pi / 2, d[2]))
    return SphericalAngles(math.atan2(d[1], d[0]), math.atan2(d[2], horiz))


def direction_angles(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized azimuth/elevation for an ``(m, 3)`` array of directions."""
    d = np.atleast_2d(d)
    horiz = np.hypot(d[:, 0], d[:, 1])
    az = np.where(horiz > 0.0, np.arctan2(d[:, 1], d[:, 0]), 0.0)
    az = np.where(az == -np.pi, np.pi, az)
    el = np.arctan2(d[:, 2], horiz)
    return az, el


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray  # unit

    @classmethod
    def from_points(cls, a, b, c) -> "Plane":
        a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
        n = np.cross(b - a, c - a)
        if 0.5 * np.linalg.norm(n) <= MIN_AREA:
            raise DegenerateGeometryError("plane points are collinear")
        return cls(a, n / np.linalg.norm(n))

    def signed_distance(self, p) -> float:
        return float(np.dot(np.asarray(p, dtype=float) - self.point, self.normal))


def mirror_point(p, plane: Plane) -> np.ndarray:
    """Reflect ``p`` across ``plane`` (image method)."""
    n = np.asarray(plane.normal, dtype=float)
    nn = np.dot(n, n)
    if nn == 0.0:
        raise DegenerateGeometryError("plane normal is zero")
    p = np.asarray(p, dtype=float)
    return p - 2.0 * np.dot(p - plane.point, n) / nn * n


@dataclass(frozen=True)
class Triangle:
    a: int
    b: int
    c: int
    material: int
    face_id: int


@dataclass(frozen=True)
class Wedge:
    """Straight diffracting edge; exterior angle is ``n * pi``.

    ``face0`` and ``facen`` are the two faces meeting at the edge. The
    exterior region is swept from the 0-face toward the n-face.
    """

    p0: np.ndarray
    p1: np.ndarray
    face0: int
    facen: int
    n: float
    material: int

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


class Hit(NamedTuple):
    face: int
    point: np.ndarray
    distance: float


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)


def triangle_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
    n = np.cross(v1 - v0, v2 - v0)
    return n / np.linalg.norm(n, axis=1)[:, None]


def _cross(a, b):
    # np.cross is slow on small broadcast batches
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _moller_trumbore(orig, dirs, v0, e1, e2):
    """Pairwise ray/triangle test. All inputs broadcast to ``(..., 3)``.

    Returns ``t`` (``inf`` on miss). Rays are not normalized here, so ``t``
    is in units of the direction length.
    """
    pvec = _cross(dirs, e2)
    det = np.einsum("...i,...i->...", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = orig - v0
    u = np.einsum("...i,...i->...", tvec, pvec) * inv
    qvec = _cross(tvec, e1)
    v = np.einsum("...i,...i->...", dirs, qvec) * inv
    t = np.einsum("...i,...i->...", e2, qvec) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return np.where(hit, t, np.inf)


class BVH:
    """Flattened bounding-volume hierarchy over a triangle mesh.

    Built by recursive median split of triangle centroids along the longest
    axis. Queries traverse the tree with whole packets of rays at once.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, leaf_size: int = 4):
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or len(faces) == 0:
            raise ValueError("cannot build a BVH over an empty mesh")
        self.v0 = vertices[faces[:, 0]]
        self.e1 = vertices[faces[:, 1]] - self.v0
        self.e2 = vertices[faces[:, 2]] - self.v0
        tri_min = np.minimum(np.minimum(self.v0, self.v0 + self.e1), self.v0 + self.e2)
        tri_max = np.maximum(np.maximum(self.v0, self.v0 + self.e1), self.v0 + self.e2)
        centroids = (tri_min + tri_max) / 2.0

        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = np.arange(len(faces))
        # (node index, slice start, slice end) of `order`
        stack = [(0, 0, len(faces))]
        lo.append(None), hi.append(None), left.append(-1), right.append(-1)
        start.append(0), count.append(0)
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo[node] = tri_min[idx].min(axis=0)
            hi[node] = tri_max[idx].max(axis=0)
            if e - s <= leaf_size:
                start[node], count[node] = s, e - s
                continue
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            # stable sort keeps builds deterministic for tied centroids
            order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
            mid = (s + e) // 2
            for child_range in ((s, mid), (mid, e)):
                child = len(lo)
                lo.append(None), hi.append(None), left.append(-1), right.append(-1)
                start.append(0), count.append(0)
                if child_range[0] == s:
                    left[node] = child
                else:
                    right[node] = child
                stack.append((child, *child_range))

        self.node_min = np.array(lo)
        self.node_max = np.array(hi)
        self.left = np.array(left)
        self.right = np.array(right)
        self.leaf_start = np.array(start)
        self.leaf_count = np.array(count)
        self.order = order
        self.n_faces = len(faces)

    @property
    def n_nodes(self) -> int:
        return len(self.node_min)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def _slab(self, node, orig, inv, tmin, tmax):
        with np.errstate(invalid="ignore"):
            t0 = (self.node_min[node] - orig) * inv
            t1 = (self.node_max[node] - orig) * inv
        # 0 * inf -> nan for rays lying in a slab plane; treat as inside
        near = np.fmin(t0, t1)
        far = np.fmax(t0, t1)
        near = np.where(np.isnan(near), -np.inf, near).max(axis=1)
        far = np.where(np.isnan(far), np.inf, far).min(axis=1)
        return (near <= far) & (far >= tmin) & (near <= tmax)

    def nearest(self, origins, directions, tmin=EPS_SELF, tmax=np.inf):
        """Nearest hit for each ray with ``tmin < t < tmax``.

        Returns ``(faces, t)``; misses have face ``-1`` and ``t = inf``.
        Ties in ``t`` resolve to the lower face index.
        """
        orig = np.atleast_2d(np.asarray(origins, dtype=float))
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        m = len(orig)
        with np.errstate(divide="ignore"):
            inv = 1.0 / dirs
        best_t = np.full(m, np.inf)
        best_f = np.full(m, -1, dtype=np.int64)
        limit = np.broadcast_to(np.asarray(tmax, dtype=float), (m,)).copy()
        stack = [(0, np.arange(m))]
        while stack:
            node, rays = stack.pop()
            bound = np.minimum(limit[rays], best_t[rays])
            keep = self._slab(node, orig[rays], inv[rays], tmin, bound)
            rays = rays[keep]
            if rays.size == 0:
                continue
            if self.left[node] >= 0:
                stack.append((self.right[node], rays))
                stack.append((self.left[node], rays))
                continue
            tris = self.order[self.leaf_start[node] : self.leaf_start[node] + self.leaf_count[node]]
            t = _moller_trumbore(
                orig[rays, None, :], dirs[rays, None, :],
                self.v0[tris][None], self.e1[tris][None], self.e2[tris][None],
            )
            t = np.where((t > tmin) & (t < limit[rays, None]), t, np.inf)
            for j, f in enumerate(tris):
                tj = t[:, j]
                better = (tj < best_t[rays]) | ((tj == best_t[rays]) & (tj < np.inf) & (f < best_f[rays]))
                best_t[rays[better]] = tj[better]
                best_f[rays[better]] = f
        return best_f, best_t

    def segment_hits(self, starts, ends, eps=EPS_SELF):
        """All faces crossed by each segment, excluding ``eps`` at both ends.

        Returns a list (one entry per segment) of sorted face-index arrays.
        """
        a = np.atleast_2d(np.asarray(starts, dtype=float))
        b = np.atleast_2d(np.asarray(ends, dtype=float))
        d = b - a
        length = np.linalg.norm(d, axis=1)
        m = len(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            dirs = d / length[:, None]
            inv = 1.0 / dirs
        tmax = length - eps
        found_rays, found_faces = [], []
        stack = [(0, np.arange(m))]
        while stack:
            node, rays = stack.pop()
            keep = self._slab(node, a[rays], inv[rays], eps, tmax[rays])
            rays = rays[keep]
            if rays.size == 0:
                continue
            if self.left[node] >= 0:
                stack.append((self.right[node], rays))
                stack.append((self.left[node], rays))
                continue
            tris = self.order[self.leaf_start[node] : self.leaf_start[node] + self.leaf_count[node]]
            t = _moller_trumbore(
                a[rays, None, :], dirs[rays, None, :],
                self.v0[tris][None], self.e1[tris][None], self.e2[tris][None],
            )
            ri, ti = np.nonzero((t > eps) & (t < tmax[rays, None]))
            if ri.size:
                found_rays.append(rays[ri])
                found_faces.append(tris[ti])
        out = [np.empty(0, dtype=np.int64) for _ in range(m)]
        if found_rays:
            rays = np.concatenate(found_rays)
            faces = np.concatenate(found_faces)
            srt = np.lexsort((faces, rays))
            rays, faces = rays[srt], faces[srt]
            bounds = np.searchsorted(rays, np.arange(m + 1))
            for i in range(m):
                out[i] = faces[bounds[i] : bounds[i + 1]]
        return out


def build_bvh(vertices, faces, leaf_size: int = 4) -> BVH:
    return BVH(vertices, faces, leaf_size=leaf_size)


def intersect(bvh: BVH, origin, direction) -> Optional[Hit]:
    """Nearest hit of a single ray beyond the self-intersection guard."""
    direction = np.asarray(direction, dtype=float)
    origin = np.asarray(origin, dtype=float)
    faces, t = bvh.nearest(origin[None], direction[None])
    if faces[0] < 0:
        return None
    dist = float(t[0])
    return Hit(int(faces[0]), origin + dist * direction, dist)
