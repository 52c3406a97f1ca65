"""Deterministic path finding between one transmitter and one receiver.

Every non-direct path has exactly one interaction: a specular reflection
off a facet (image method) or a diffraction at a wedge (the edge point
minimizing total path length). All occlusion tests for one query are sent
to the BVH as a single packet of segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from .geometry import EPS_SELF, SphericalAngles, angles_of_separation
from .scene import SceneDatabase

INSIDE_TOL = 1e-9
ANGLE_TOL = 1e-9


class PathKind(IntEnum):
    LOS = 0
    REFLECTED = 1
    DIFFRACTED = 2

    @property
    def label(self) -> str:
        return {0: "LoS", 1: "Reflected", 2: "Diffracted"}[int(self)]


@dataclass(frozen=True)
class FaceInteraction:
    """Incidence data for one face, used for reflection coefficients."""

    eps_r: float
    theta: float  # incidence angle from the face normal, radians
    tm_weight: float  # share of the vertically polarized field lying in the plane of incidence


@dataclass(frozen=True)
class PropagationPath:
    kind: PathKind
    element: int  # face id (reflection), wedge id (diffraction), -1 for LoS
    tx: np.ndarray
    rx: np.ndarray
    point: Optional[np.ndarray]
    d_rx_s: float
    d_s_tx: float
    d_total: float
    departure: SphericalAngles
    arrival: SphericalAngles
    foliage_crossings: int = 0
    reflection: Optional[FaceInteraction] = None
    # diffraction geometry: exterior angle factor, angles from the 0-face
    wedge_n: float = math.nan
    phi_incident: float = math.nan
    phi_observation: float = math.nan
    face0: Optional[FaceInteraction] = None
    facen: Optional[FaceInteraction] = None

    @property
    def key(self) -> tuple[int, int]:
        return int(self.kind), self.element

    @property
    def ray_id(self) -> str:
        if self.kind is PathKind.LOS:
            return "LOS"
        return f"{'R' if self.kind is PathKind.REFLECTED else 'D'}{self.element}"

    def vertices(self) -> list[np.ndarray]:
        if self.point is None:
            return [self.tx, self.rx]
        return [self.tx, self.point, self.rx]


@dataclass(frozen=True)
class TraceQuery:
    tx: np.ndarray
    rx: np.ndarray
    scene: SceneDatabase
    max_paths: Optional[int] = None
    reflections: bool = True
    diffractions: bool = True

    def __post_init__(self):
        tx = np.asarray(self.tx, dtype=float)
        rx = np.asarray(self.rx, dtype=float)
        if np.linalg.norm(tx - rx) == 0.0:
            raise ValueError("transmitter and receiver coincide")
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "rx", rx)


def vertical_tm_weight(direction: np.ndarray, normal: np.ndarray) -> float:
    """Fraction (power) of a vertically polarized wave travelling along
    ``direction`` whose E-field lies in the plane of incidence of a surface
    with ``normal``. Degenerate geometries fall back on the facet
    orientation: horizontal facets TM, vertical facets TE."""
    d = direction / np.linalg.norm(direction)
    z = np.array([0.0, 0.0, 1.0])
    e_field = z - np.dot(z, d) * d
    te_axis = np.cross(d, normal)
    ne, nt = np.linalg.norm(e_field), np.linalg.norm(te_axis)
    if ne < 1e-12 or nt < 1e-12:
        return 1.0 if abs(normal[2]) > 0.5 else 0.0
    return 1.0 - float(np.dot(e_field / ne, te_axis / nt)) ** 2


def _face_interaction(scene: SceneDatabase, face: int, incoming: np.ndarray) -> FaceInteraction:
    n = scene.normals[face]
    d = incoming / np.linalg.norm(incoming)
    cos_t = min(abs(float(np.dot(d, n))), 1.0)
    theta = min(math.acos(cos_t), math.pi / 2 - 1e-12)
    return FaceInteraction(float(scene.eps_r[face]), theta, vertical_tm_weight(d, n))


@dataclass
class _Candidate:
    kind: PathKind
    element: int
    point: Optional[np.ndarray]
    segments: list[int] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _reflection_candidates(scene: SceneDatabase, tx, rx) -> list[_Candidate]:
    if not scene.facet_count:
        return []
    bvh = scene.bvh
    n = scene.normals
    v0, e1, e2 = bvh.v0, bvh.e1, bvh.e2
    s_tx = np.einsum("ij,ij->i", tx - v0, n)
    s_rx = np.einsum("ij,ij->i", rx - v0, n)
    ok = scene.reflective & (s_tx > INSIDE_TOL) & (s_rx > INSIDE_TOL)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return []
    image = tx - 2.0 * s_tx[idx, None] * n[idx]
    frac = s_tx[idx] / (s_tx[idx] + s_rx[idx])
    p = image + frac[:, None] * (rx - image)
    # barycentric coordinates of p in each triangle
    w = p - v0[idx]
    a11 = np.einsum("ij,ij->i", e1[idx], e1[idx])
    a12 = np.einsum("ij,ij->i", e1[idx], e2[idx])
    a22 = np.einsum("ij,ij->i", e2[idx], e2[idx])
    b1 = np.einsum("ij,ij->i", w, e1[idx])
    b2 = np.einsum("ij,ij->i", w, e2[idx])
    det = a11 * a22 - a12 * a12
    u = (a22 * b1 - a12 * b2) / det
    v = (a11 * b2 - a12 * b1) / det
    inside = (u >= -INSIDE_TOL) & (v >= -INSIDE_TOL) & (u + v <= 1.0 + INSIDE_TOL)
    out = []
    seen: list[np.ndarray] = []
    for face, point in zip(idx[inside], p[inside]):
        # coplanar neighbours sharing an edge yield the same point; keep the first
        if any(np.linalg.norm(point - q) < EPS_SELF for q in seen):
            continue
        seen.append(point)
        out.append(_Candidate(PathKind.REFLECTED, int(face), point))
    return out


def diffraction_points(scene: SceneDatabase, tx, rx):
    """Shortest-path point on every wedge line.

    Unfolding the two rays about the edge axis turns the path length into
    a straight line, so the optimum edge coordinate is the axial
    interpolation weighted by the radial distances. Returns
    ``(s, inside, points)`` with ``s`` measured from ``p0``.
    """
    fr = scene.wedge_frames
    p0, e, length = fr["p0"], fr["e"], fr["length"]
    rel_tx, rel_rx = tx - p0, rx - p0
    a_tx = np.einsum("ij,ij->i", rel_tx, e)
    a_rx = np.einsum("ij,ij->i", rel_rx, e)
    r_tx = np.linalg.norm(rel_tx - a_tx[:, None] * e, axis=1)
    r_rx = np.linalg.norm(rel_rx - a_rx[:, None] * e, axis=1)
    denom = r_tx + r_rx
    with np.errstate(invalid="ignore", divide="ignore"):
        s = a_tx + (a_rx - a_tx) * r_tx / denom
    inside = (r_tx > EPS_SELF) & (r_rx > EPS_SELF) & (s > EPS_SELF) & (s < length - EPS_SELF)
    points = p0 + np.where(np.isfinite(s), s, 0.0)[:, None] * e
    return s, inside, points


def wedge_angle(direction: np.ndarray, e: np.ndarray, t0: np.ndarray, n0: np.ndarray) -> float:
    """Angle of ``direction`` around the edge, from the 0-face through the
    exterior, in ``[0, 2*pi)``."""
    d = direction - np.dot(direction, e) * e
    return math.atan2(float(np.dot(d, n0)), float(np.dot(d, t0))) % (2.0 * math.pi)


def _diffraction_candidates(scene: SceneDatabase, tx, rx) -> list[_Candidate]:
    if not scene.wedge_records:
        return []
    fr = scene.wedge_frames
    _, inside, points = diffraction_points(scene, tx, rx)
    out = []
    for w in np.nonzero(inside)[0]:
        q = points[w]
        e, t0, n0, n = fr["e"][w], fr["t0"][w], fr["n0"][w], fr["n"][w]
        phi_inc = wedge_angle(tx - q, e, t0, n0)
        phi_obs = wedge_angle(rx - q, e, t0, n0)
        limit = n * math.pi + ANGLE_TOL
        # both ends must sit in the exterior region of the wedge
        if phi_inc > limit or phi_obs > limit:
            continue
        out.append(
            _Candidate(
                PathKind.DIFFRACTED, int(w), q,
                extra={"n": float(n), "phi_inc": min(phi_inc, n * math.pi), "phi_obs": min(phi_obs, n * math.pi)},
            )
        )
    return out


def _count_foliage(scene: SceneDatabase, hits: np.ndarray) -> int:
    foliage = hits[scene.foliage[hits]]
    return len(set(scene.face_object[foliage].tolist()))


def trace_all(q: TraceQuery) -> list[PropagationPath]:
    """LoS, single reflections and single diffractions, sorted by (kind, id)."""
    scene, tx, rx = q.scene, q.tx, q.rx
    cands = [_Candidate(PathKind.LOS, -1, None)]
    if q.reflections:
        cands += _reflection_candidates(scene, tx, rx)
    if q.diffractions:
        cands += _diffraction_candidates(scene, tx, rx)

    starts, ends = [], []
    for c in cands:
        for a, b in _legs(c, tx, rx):
            c.segments.append(len(starts))
            starts.append(a)
            ends.append(b)
    if scene.facet_count:
        hits = scene.bvh.segment_hits(np.array(starts), np.array(ends))
    else:
        hits = [np.empty(0, dtype=np.int64)] * len(starts)

    paths = []
    for c in cands:
        seg_hits = np.concatenate([hits[i] for i in c.segments])
        seg_hits = seg_hits[~_in_interaction_planes(scene, c, seg_hits)]
        if (~scene.foliage[seg_hits]).any():
            continue
        foliage = _count_foliage(scene, seg_hits)
        paths.append(_make_path(scene, c, tx, rx, foliage))
    paths.sort(key=lambda p: p.key)
    if q.max_paths is not None:
        paths = paths[: q.max_paths]
    return paths


def trace_los(q: TraceQuery) -> Optional[PropagationPath]:
    paths = trace_all(TraceQuery(q.tx, q.rx, q.scene, reflections=False, diffractions=False))
    return paths[0] if paths else None


def trace_reflections(q: TraceQuery) -> list[PropagationPath]:
    paths = trace_all(TraceQuery(q.tx, q.rx, q.scene, q.max_paths, True, False))
    return [p for p in paths if p.kind is PathKind.REFLECTED]


def trace_diffractions(q: TraceQuery) -> list[PropagationPath]:
    paths = trace_all(TraceQuery(q.tx, q.rx, q.scene, q.max_paths, False, True))
    return [p for p in paths if p.kind is PathKind.DIFFRACTED]


def _legs(c: _Candidate, tx, rx):
    """Occlusion segments. NLoS legs overshoot the interaction point by
    ``2 * EPS_SELF`` so facets touching it still count as blockers."""
    if c.point is None:
        return [(tx, rx)]
    q = c.point
    u1 = (q - tx) / np.linalg.norm(q - tx)
    u2 = (rx - q) / np.linalg.norm(rx - q)
    return [(tx, q + 2 * EPS_SELF * u1), (q - 2 * EPS_SELF * u2, rx)]


def _in_interaction_planes(scene: SceneDatabase, c: _Candidate, faces: np.ndarray) -> np.ndarray:
    """Mask of hit faces lying in the plane of an interacting facet; a leg
    starting or ending on a plane cannot cross it anywhere else."""
    mask = np.zeros(len(faces), dtype=bool)
    if c.point is None or faces.size == 0:
        return mask
    if c.kind is PathKind.REFLECTED:
        own = [c.element]
    else:
        fr = scene.wedge_frames
        own = [int(fr["face0"][c.element]), int(fr["facen"][c.element])]
    nh = scene.normals[faces]
    vh = scene.vertices[scene.faces[faces, 0]]
    for f in own:
        n = scene.normals[f]
        parallel = np.abs(nh @ n) > 1.0 - 1e-9
        on_plane = np.abs((vh - c.point) @ n) < EPS_SELF
        mask |= parallel & on_plane
    return mask


def _make_path(scene: SceneDatabase, c: _Candidate, tx, rx, foliage: int) -> PropagationPath:
    if c.kind is PathKind.LOS:
        d = float(np.linalg.norm(tx - rx))
        return PropagationPath(
            PathKind.LOS, -1, tx, rx, None, d, d, d,
            angles_of_separation(tx, rx), angles_of_separation(rx, tx), foliage,
        )
    q = c.point
    d_s_tx = float(np.linalg.norm(q - tx))
    d_rx_s = float(np.linalg.norm(rx - q))
    common = dict(
        kind=c.kind, element=c.element, tx=tx, rx=rx, point=q,
        d_rx_s=d_rx_s, d_s_tx=d_s_tx, d_total=d_rx_s + d_s_tx,
        departure=angles_of_separation(tx, q), arrival=angles_of_separation(rx, q),
        foliage_crossings=foliage,
    )
    if c.kind is PathKind.REFLECTED:
        return PropagationPath(**common, reflection=_face_interaction(scene, c.element, q - tx))
    fr = scene.wedge_frames
    w = c.element
    return PropagationPath(
        **common,
        wedge_n=c.extra["n"],
        phi_incident=c.extra["phi_inc"],
        phi_observation=c.extra["phi_obs"],
        face0=_face_interaction(scene, int(fr["face0"][w]), q - tx),
        facen=_face_interaction(scene, int(fr["facen"][w]), q - tx),
    )
