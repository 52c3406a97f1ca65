import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavrt.scene import (
    DATABASE_I,
    DATABASE_III,
    DEFAULT_MATERIALS,
    BuildingFootprint,
    Category,
    DemGrid,
    MeshPart,
    RawScene,
    assemble,
    reconstruct,
)
from uavrt.tracer import (
    PathKind,
    TraceQuery,
    trace_all,
    trace_diffractions,
    trace_los,
    trace_reflections,
    vertical_tm_weight,
)

EMPTY = assemble([], DEFAULT_MATERIALS)


def ground(half=200.0, z=0.0):
    v = np.array([[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]])
    return MeshPart(v, np.array([[0, 1, 2], [0, 2, 3]]), Category.TERRAIN, "wet_soil")


def screen(x, y0, y1, z0, z1):
    """Zero-thickness double-sided screen in the plane x = const."""
    v = np.array([[x, y0, z0], [x, y1, z0], [x, y1, z1], [x, y0, z1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3], [0, 2, 1], [0, 3, 2]])
    return MeshPart(v, f, Category.BUILDING, "concrete")


def flat_raw(footprints, half=150.0):
    dem = DemGrid(-half, -half, 2 * half, np.zeros((2, 2)))
    return RawScene(dem, footprints)


def box(x0, y0, x1, y1, h, cat=Category.BUILDING):
    return BuildingFootprint(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]), h, cat)


class TestLos:
    def test_vertical_link_in_empty_scene(self):
        p = trace_los(TraceQuery((0, 0, 75), (0, 0, 2), EMPTY))
        assert p.kind is PathKind.LOS
        assert p.d_total == 73.0
        assert p.arrival.elevation == pytest.approx(math.pi / 2)
        assert p.departure.elevation == pytest.approx(-math.pi / 2)

    def test_wall_blocks(self):
        scene = assemble([(1, screen(5, -10, 10, 0, 20))], DEFAULT_MATERIALS)
        assert trace_los(TraceQuery((0, 0, 10), (10, 0, 10), scene)) is None

    def test_foliage_is_counted_not_blocking(self):
        part = screen(5, -10, 10, 0, 20)
        part.category, part.material = Category.VEGETATION, "foliage"
        scene = assemble([(3, part)], DEFAULT_MATERIALS)
        p = trace_los(TraceQuery((0, 0, 10), (10, 0, 10), scene))
        assert p is not None
        # both sides of the screen belong to one object
        assert p.foliage_crossings == 1

    def test_coincident_endpoints_rejected(self):
        with pytest.raises(ValueError):
            TraceQuery((1, 1, 1), (1, 1, 1), EMPTY)


class TestReflections:
    def test_two_ray_geometry(self):
        scene = assemble([(0, ground())], DEFAULT_MATERIALS)
        (p,) = trace_reflections(TraceQuery((0, 0, 10), (10, 0, 10), scene))
        np.testing.assert_allclose(p.point, (5, 0, 0), atol=1e-12)
        assert p.d_total == pytest.approx(2 * math.sqrt(125), abs=1e-9)
        assert math.degrees(p.reflection.theta) == pytest.approx(26.565051, abs=1e-6)
        assert p.reflection.eps_r == 15.0
        assert p.reflection.tm_weight == pytest.approx(1.0)

    def test_blocking_wall(self):
        scene = assemble([(0, ground()), (1, screen(5, -10, 10, 0, 20))], DEFAULT_MATERIALS)
        assert trace_reflections(TraceQuery((0, 0, 10), (10, 0, 10), scene)) == []

    def test_back_side_does_not_reflect(self):
        scene = assemble([(0, ground())], DEFAULT_MATERIALS)
        assert trace_reflections(TraceQuery((0, 0, -10), (10, 0, -10), scene)) == []

    def test_foliage_never_reflects(self):
        part = ground()
        part.category, part.material = Category.VEGETATION, "foliage"
        scene = assemble([(1, part)], DEFAULT_MATERIALS)
        assert trace_reflections(TraceQuery((0, 0, 10), (10, 0, 10), scene)) == []

    def test_one_path_per_shared_point(self):
        # reflection point on the diagonal shared by the two ground triangles
        scene = assemble([(0, ground())], DEFAULT_MATERIALS)
        paths = trace_reflections(TraceQuery((0, 0, 10), (20, 20, 10), scene))
        assert len(paths) == 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_reflection_law_random_scenes(self, seed):
        rng = np.random.default_rng(seed)
        n = 40
        centers = rng.uniform(-30, 30, size=(n, 1, 3))
        v = (centers + rng.normal(scale=8.0, size=(n, 3, 3))).reshape(-1, 3)
        scene = assemble(
            [(0, MeshPart(v, np.arange(3 * n).reshape(n, 3), Category.BUILDING, "concrete"))],
            DEFAULT_MATERIALS,
        )
        tx, rx = rng.uniform(-60, 60, size=(2, 3))
        for p in trace_reflections(TraceQuery(tx, rx, scene)):
            nrm = scene.normals[p.element]
            din = (p.point - tx) / p.d_s_tx
            dout = (rx - p.point) / p.d_rx_s
            assert abs(np.dot(-din, nrm) - np.dot(dout, nrm)) < 1e-9
            # in, out and normal are coplanar
            assert abs(np.dot(np.cross(din, dout), nrm)) < 1e-9
            assert math.cos(p.reflection.theta) == pytest.approx(np.dot(dout, nrm), abs=1e-9)


class TestVerticalTmWeight:
    def test_ground_is_parallel(self):
        assert vertical_tm_weight(np.array([1.0, 0, -1]), np.array([0, 0, 1.0])) == pytest.approx(1.0)

    def test_wall_horizontal_ray_is_perpendicular(self):
        assert vertical_tm_weight(np.array([1.0, 0.2, 0]), np.array([-1.0, 0, 0])) == pytest.approx(0.0)

    @given(st.tuples(*[st.floats(-1, 1)] * 6))
    def test_range(self, c):
        d, n = np.array(c[:3]), np.array(c[3:])
        if np.linalg.norm(d) < 1e-3 or np.linalg.norm(n) < 1e-3:
            return
        w = vertical_tm_weight(d, n / np.linalg.norm(n))
        assert -1e-12 <= w <= 1 + 1e-12


def _edge_sample_min(tx, rx, p0, p1, samples=1000):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    pts = p0 + t * (p1 - p0)
    return float(np.min(np.linalg.norm(pts - tx, axis=1) + np.linalg.norm(pts - rx, axis=1)))


class TestDiffractions:
    def test_knife_edge_midpoint(self):
        scene = assemble([(1, screen(50, -30, 30, 0, 20))], DEFAULT_MATERIALS)
        paths = trace_diffractions(TraceQuery((0, 0, 10), (100, 0, 10), scene))
        top = [p for p in paths if p.point[2] == pytest.approx(20.0)]
        assert len(top) == 1
        np.testing.assert_allclose(top[0].point, (50, 0, 20), atol=1e-12)
        assert top[0].wedge_n == 2.0
        assert 0 <= top[0].phi_observation <= 2 * math.pi
        assert 0 <= top[0].phi_incident <= 2 * math.pi

    def test_far_wedge_longer_than_los(self):
        scene = assemble([(1, screen(40, 200, 260, 0, 30))], DEFAULT_MATERIALS)
        paths = trace_all(TraceQuery((0, 0, 10), (80, 0, 10), scene))
        los = paths[0]
        assert los.kind is PathKind.LOS
        diffs = [p for p in paths if p.kind is PathKind.DIFFRACTED]
        assert diffs
        assert all(p.d_total > los.d_total for p in diffs)

    def test_building_corner_factor(self):
        raw = flat_raw([box(-10, -10, 10, 10, 15)])
        scene = reconstruct(raw, DATABASE_III)
        paths = trace_diffractions(TraceQuery((-60, 40, 8), (40, -60, 8), scene))
        assert any(p.wedge_n == pytest.approx(1.5) for p in paths)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_optimality_vs_edge_sampling(self, seed):
        rng = np.random.default_rng(seed)
        fps = []
        for _ in range(4):
            x, y = rng.uniform(-80, 60, size=2)
            w, d = rng.uniform(5, 20, size=2)
            fps.append(box(x, y, x + w, y + d, rng.uniform(3, 40)))
        try:
            scene = reconstruct(flat_raw(fps), DATABASE_III)
        except Exception:
            return
        tx = np.array([*rng.uniform(-140, 140, size=2), 75.0])
        rx = np.array([*rng.uniform(-140, 140, size=2), 2.0])
        frames = scene.wedge_frames
        for p in trace_diffractions(TraceQuery(tx, rx, scene)):
            p0 = frames["p0"][p.element]
            p1 = p0 + frames["e"][p.element] * frames["length"][p.element]
            assert p.d_total <= _edge_sample_min(tx, rx, p0, p1) + 1e-6


class TestTraceAll:
    def test_empty_scene(self):
        paths = trace_all(TraceQuery((0, 0, 75), (0, 0, 2), EMPTY))
        assert [p.kind for p in paths] == [PathKind.LOS]

    def test_ground_plane(self):
        scene = assemble([(0, ground())], DEFAULT_MATERIALS)
        paths = trace_all(TraceQuery((0, 0, 10), (10, 0, 10), scene))
        assert [p.kind for p in paths] == [PathKind.LOS, PathKind.REFLECTED]

    def test_max_paths(self):
        scene = assemble([(0, ground())], DEFAULT_MATERIALS)
        assert len(trace_all(TraceQuery((0, 0, 10), (10, 0, 10), scene, max_paths=1))) == 1

    def test_path_length_consistency_and_order(self):
        raw = flat_raw([box(-40, 10, -20, 30, 25), box(20, -30, 35, -5, 12), box(0, 40, 10, 60, 4)])
        scene = reconstruct(raw, DATABASE_III)
        paths = trace_all(TraceQuery((-100, -90, 75), (5, 0, 2), scene))
        assert len(paths) > 3
        assert [p.key for p in paths] == sorted(p.key for p in paths)
        for p in paths:
            verts = p.vertices()
            poly = sum(np.linalg.norm(b - a) for a, b in zip(verts[:-1], verts[1:]))
            assert p.d_total == pytest.approx(poly, abs=1e-9)
            assert p.d_rx_s > 0 and p.d_s_tx > 0

    def test_nested_scene_monotone(self):
        # the extra buildings sit far behind the receiver, away from every existing path
        base = [box(-40, 10, -20, 30, 25), box(20, -30, 35, -5, 12)]
        extra = [box(100, 100, 120, 115, 8), box(110, -130, 130, -110, 4)]
        tx, rx = (-100, -90, 75), (5, 0, 2)
        small = trace_all(TraceQuery(tx, rx, reconstruct(flat_raw(base), DATABASE_III)))
        big = trace_all(TraceQuery(tx, rx, reconstruct(flat_raw(base + extra), DATABASE_III)))
        assert len(big) >= len(small)

    def test_lod_levels_monotone(self):
        fps = [box(-40, 10, -20, 30, 25), box(20, -30, 35, -5, 12), box(-10, -40, 0, -30, 3)]
        tx, rx = (-100, -90, 75), (5, 0, 2)
        n1 = len(trace_all(TraceQuery(tx, rx, reconstruct(flat_raw(fps), DATABASE_I))))
        n3 = len(trace_all(TraceQuery(tx, rx, reconstruct(flat_raw(fps), DATABASE_III))))
        assert n3 >= n1

    def test_deterministic(self):
        raw = flat_raw([box(-40, 10, -20, 30, 25), box(20, -30, 35, -5, 12)])
        a = trace_all(TraceQuery((-100, -90, 75), (5, 0, 2), reconstruct(raw, DATABASE_III)))
        b = trace_all(TraceQuery((-100, -90, 75), (5, 0, 2), reconstruct(raw, DATABASE_III)))
        assert [p.key for p in a] == [p.key for p in b]
        for p, q in zip(a, b):
            assert p.d_total == q.d_total
            assert p.arrival == q.arrival
