"""A synthetic campus for level-of-detail experiments.

Rectangular buildings (3-40 m), vegetation patches and ponds on flat
ground around a receiver at the origin, plus six straight 75 m-altitude
flights. Every object obeys a height cap that grows with its distance
from the receiver, so the direct ray to any point of the flights clears
every roof and canopy, and an open plaza keeps the ground bounce clear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .kinematics import Trajectory, dump_trajectories
from .scene import (
    DEFAULT_MATERIALS,
    BuildingFootprint,
    Category,
    DemGrid,
    RawScene,
    dump_dem,
    dump_footprints,
    dump_material_table,
)

RX_HEIGHT = 2.0
UAV_ALTITUDE = 75.0
UAV_SPEED = 10.0
FLIGHT_DURATION = 100.0
FLIGHT_OFFSET = 60.0  # closest horizontal approach of each flight to the receiver
FLIGHT_LENGTH = 1000.0
N_FLIGHTS = 6
HALF_EXTENT = 700.0
CELL_SIZE = 100.0
PLAZA_RADIUS = 30.0
# direct-ray slope to the farthest flight point, with margin
HEIGHT_SLOPE = 0.13

DEM_FILE = "campus_dem.txt"
FOOTPRINT_FILE = "campus_footprints.txt"
MATERIAL_FILE = "materials.txt"
TRAJECTORY_FILE = "campus_trajectories.ini"
CONFIG_FILE = "campus.ini"

DEFAULT_CONFIG = """\
# Synthetic campus run; every key carries its unit.
[simulation]
frequency_mhz = 28000
bandwidth_mhz = 500
tx_power_dbm = 20
threshold_db = -45
foliage_loss_db = 10
seed = 0
rx_position_m = 0 0 2

[scene]
dem = campus_dem.txt
footprints = campus_footprints.txt
materials = materials.txt
lod = DB-I, DB-II, DB-III

[trajectories]
file = campus_trajectories.ini

[output]
directory = out

[benchmark]
repetitions = 5
"""


@dataclass(frozen=True)
class CampusLayout:
    seed: int = 2020
    n_tall: int = 12  # 20-40 m, kept by every level of detail
    n_mid: int = 12  # 5-20 m
    n_low: int = 18  # 3-5 m sheds, kiosks and pavilions
    n_vegetation: int = 14
    n_water: int = 2


def height_cap(r_near: float) -> float:
    """Tallest object whose nearest point is ``r_near`` from the receiver."""
    return RX_HEIGHT + HEIGHT_SLOPE * r_near


def _nearest_distance(poly: np.ndarray) -> float:
    # the origin lies outside every footprint, so the nearest point is on an edge
    best = math.inf
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        d = b - a
        t = np.clip(-np.dot(a, d) / np.dot(d, d), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(a + t * d)))
    return best


def _rect(cx, cy, w, d, angle) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    pts = np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]])
    rot = np.array([[c, -s], [s, c]])
    return np.round(pts @ rot.T + [cx, cy], 3)


def _overlaps(box, placed, gap):
    lo, hi = box.min(axis=0) - gap, box.max(axis=0) + gap
    return any(np.all(lo <= p.max(axis=0)) and np.all(p.min(axis=0) <= hi) for p in placed)


def synthetic_campus(layout: Optional[CampusLayout] = None) -> RawScene:
    """Deterministic campus for a given layout seed."""
    layout = layout or CampusLayout()
    rng = np.random.default_rng(layout.seed)
    dem = DemGrid(
        -HALF_EXTENT, -HALF_EXTENT, CELL_SIZE,
        np.zeros((int(2 * HALF_EXTENT / CELL_SIZE) + 1,) * 2),
    )
    placed: list[np.ndarray] = []
    footprints: list[BuildingFootprint] = []

    def place(category, count, size_range, height_fn, r_range, material=""):
        made = 0
        tries = 0
        while made < count:
            tries += 1
            if tries > 10_000:
                raise RuntimeError("campus layout failed to place all objects")
            r = rng.uniform(*r_range)
            az = rng.uniform(-math.pi, math.pi)
            w, d = rng.uniform(*size_range, size=2)
            poly = _rect(r * math.cos(az), r * math.sin(az), w, d, rng.uniform(0, math.pi / 2))
            if np.any(np.abs(poly) > HALF_EXTENT - 5) or _overlaps(poly, placed, 8.0):
                continue
            r_near = _nearest_distance(poly)
            if r_near < PLAZA_RADIUS:
                continue
            h = height_fn(r_near)
            if h is None:
                continue
            placed.append(poly)
            footprints.append(BuildingFootprint(poly, h, category, material))
            made += 1

    # three height tiers so every level of detail keeps some buildings
    tiers = [
        (layout.n_tall, (20.0, 40.0), (160.0, 600.0)),
        (layout.n_mid, (5.0, 20.0), (40.0, 500.0)),
        (layout.n_low, (3.0, 5.0), (30.0, 400.0)),
    ]
    for count, (hmin, hmax), r_range in tiers:

        def tier_height(r_near, hmin=hmin, hmax=hmax):
            top = min(hmax, height_cap(r_near))
            if top < hmin:
                return None
            return round(float(rng.uniform(hmin, top)), 2)

        place(Category.BUILDING, count, (15.0, 45.0), tier_height, r_range)

    def canopy(r_near):
        top = min(12.0, height_cap(r_near))
        return None if top < 4.0 else round(float(rng.uniform(4.0, top)), 2)

    place(Category.VEGETATION, layout.n_vegetation, (10.0, 30.0), canopy, (60.0, 500.0))
    place(Category.WATER, layout.n_water, (30.0, 60.0), lambda r: 0.0, (100.0, 500.0))
    return RawScene(dem, footprints)


def campus_trajectories(
    n: int = N_FLIGHTS,
    offset: float = FLIGHT_OFFSET,
    length: float = FLIGHT_LENGTH,
    altitude: float = UAV_ALTITUDE,
    speed: float = UAV_SPEED,
    dt: float = 1.0,
    duration: float = FLIGHT_DURATION,
) -> list[Trajectory]:
    """``n`` straight flights, the base line rotated by ``k * 360/n`` degrees
    about the receiver so every flight sees the same range history."""
    base = np.array([[-length / 2, offset], [length / 2, offset]])
    out = []
    for k in range(n):
        a = 2 * math.pi * k / n
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        xy = np.round(base @ rot.T, 9)
        out.append(Trajectory(np.column_stack([xy, [altitude, altitude]]), speed, dt, duration))
    return out


def bundle_texts(layout: Optional[CampusLayout] = None) -> dict[str, str]:
    """File name to content for the bundled campus data set."""
    raw = synthetic_campus(layout)
    return {
        DEM_FILE: dump_dem(raw.dem),
        FOOTPRINT_FILE: dump_footprints(raw.footprints),
        MATERIAL_FILE: dump_material_table(DEFAULT_MATERIALS),
        TRAJECTORY_FILE: dump_trajectories(campus_trajectories()),
        CONFIG_FILE: DEFAULT_CONFIG,
    }


def write_bundle(outdir) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in bundle_texts().items():
        (out / name).write_text(text, encoding="utf-8")
        written.append(out / name)
    return written


def bundled_path(name: str) -> Path:
    """Location of a bundled campus file inside the installed package."""
    return Path(str(resources.files("uavrt") / "data" / name))
