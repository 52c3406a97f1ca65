"""Channel snapshots along a trajectory.

Each traced path becomes a ``RayRecord`` with power, delay, phase and the
four angles. Powers are handled in the gain domain: the LoS gain is
``-FSPL``, an NLoS ray adds its excess loss (a non-positive dB figure)
and every distinct foliage object crossed costs a fixed penetration loss.
Relative gains are referenced to the received LoS ray (0 dB exactly),
or to free space at the LoS range when the LoS ray is blocked.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .em import (
    C0,
    Polarization,
    WaveContext,
    WedgeDiffractionInput,
    diffracted_field,
    excess_loss_db,
    fspl_db,
    los_field,
    nlos_power_db,
    reflected_field,
    reflection_coefficient,
)
from .geometry import spherical_unit_vector
from .kinematics import KinematicState, Trajectory, sample_trajectory
from .scene import SceneDatabase
from .tracer import FaceInteraction, PathKind, PropagationPath, TraceQuery, trace_all

DEFAULT_THRESHOLD_DB = -45.0
DEFAULT_FOLIAGE_LOSS_DB = 10.0
CSV_COLUMNS = (
    "t", "ray_id", "kind", "rel_power_dB", "rel_delay_ns",
    "aod_az_deg", "aod_el_deg", "aoa_az_deg", "aoa_el_deg", "phase_rad",
)
EMPTY_KIND = "none"  # placeholder row kind for an instant without rays


@dataclass(frozen=True)
class SimulationConfig:
    frequency_mhz: float = 28_000.0
    threshold_db: float = DEFAULT_THRESHOLD_DB
    foliage_loss_db: float = DEFAULT_FOLIAGE_LOSS_DB
    seed: int = 0
    rx: tuple = (0.0, 0.0, 2.0)
    max_paths: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if not self.frequency_mhz > 0:
            raise ValueError("frequency must be positive")
        if not self.threshold_db < 0:
            raise ValueError("threshold must be negative (use -inf to disable)")
        if self.foliage_loss_db < 0:
            raise ValueError("foliage loss must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def wave(self) -> WaveContext:
        return WaveContext(self.frequency_mhz)


@dataclass(frozen=True)
class RayRecord:
    ray_id: str
    kind: PathKind
    attenuation_db: float  # P_l, positive = loss
    rel_gain_db: float  # P_0 - P_l
    delay: float  # s
    rel_delay: float  # s
    phase: float  # rad in [0, 2 pi)
    aod_az: float
    aod_el: float
    aoa_az: float
    aoa_el: float
    foliage_loss_db: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        if self.kind is PathKind.LOS:
            return (0, -1)
        return (int(self.kind), int(self.ray_id[1:]))


@dataclass(frozen=True)
class ChannelSnapshot:
    t: float
    rays: tuple[RayRecord, ...]

    @property
    def count(self) -> int:
        return len(self.rays)

    @property
    def los(self) -> Optional[RayRecord]:
        return self.rays[0] if self.rays and self.rays[0].kind is PathKind.LOS else None


@dataclass
class SimulationRun:
    snapshots: list[ChannelSnapshot]
    scene_provenance: dict = field(default_factory=dict)
    trajectory: dict = field(default_factory=dict)
    trace_seconds: float = 0.0
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        ts = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshots must be in strictly increasing time")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.count for s in self.snapshots], dtype=int)


def blended_coefficient(face: FaceInteraction) -> float:
    """Reflection coefficient for a vertically polarized wave: the parallel
    and perpendicular coefficients weighted by the field's power split."""
    w = face.tm_weight
    r_par = reflection_coefficient(face.eps_r, face.theta, Polarization.PARALLEL)
    r_perp = reflection_coefficient(face.eps_r, face.theta, Polarization.PERPENDICULAR)
    return w * r_par + (1.0 - w) * r_perp


def path_field(path: PropagationPath, ctx: WaveContext) -> complex:
    """Complex field of one path relative to the 1 m reference (no foliage)."""
    if path.kind is PathKind.LOS:
        return los_field(ctx, path.d_total)
    if path.kind is PathKind.REFLECTED:
        r = blended_coefficient(path.reflection)
        return reflected_field(1.0, r, path.d_rx_s, path.d_s_tx, ctx)
    inp = WedgeDiffractionInput(
        path.d_rx_s, path.d_s_tx, path.wedge_n, path.phi_incident, path.phi_observation,
        blended_coefficient(path.face0), blended_coefficient(path.facen),
    )
    return diffracted_field(1.0, inp, ctx)


def coherent_gain_db(paths: Sequence[PropagationPath], ctx: WaveContext, foliage_loss_db: float = 0.0) -> float:
    """Received level of the phasor sum of all paths, dB relative to 1 m."""
    total = 0j
    for p in paths:
        total += path_field(p, ctx) * 10.0 ** (-foliage_loss_db * p.foliage_crossings / 20.0)
    return 20.0 * math.log10(abs(total)) if total != 0 else -math.inf


def _ray_key_entropy(seed: int, stream: int, key: tuple[int, int], birth: int) -> list[int]:
    # element ids are >= -1; shift keeps SeedSequence entropy non-negative
    return [int(seed), int(stream), key[0], key[1] + 1, int(birth)]


def initial_phase(seed: int, stream: int, key: tuple[int, int], birth: int) -> float:
    """psi_l: uniform on [0, 2 pi) from a generator keyed by the ray and its
    birth index, so any evaluation order yields the same draw."""
    rng = np.random.default_rng(_ray_key_entropy(seed, stream, key, birth))
    return float(rng.uniform(0.0, 2.0 * math.pi))


@dataclass(frozen=True)
class _RayGeometry:
    path: PropagationPath
    gain_db: float  # absolute gain relative to 1 m, foliage included
    foliage_db: float


def _ray_gains(paths: Sequence[PropagationPath], d_los: float, cfg: SimulationConfig) -> list[_RayGeometry]:
    ctx = cfg.wave
    p0 = fspl_db(ctx, d_los)
    e_los = los_field(ctx, d_los)
    out = []
    for p in paths:
        fol = cfg.foliage_loss_db * p.foliage_crossings
        if p.kind is PathKind.LOS:
            excess = 0.0
        else:
            excess = excess_loss_db(path_field(p, ctx), e_los)
        out.append(_RayGeometry(p, nlos_power_db(-p0, excess) - fol, fol))
    return out


def synthesize_snapshot(
    paths: Sequence[PropagationPath],
    state: KinematicState,
    cfg: SimulationConfig,
    phases: Optional[dict] = None,
) -> ChannelSnapshot:
    """Unfiltered snapshot for one instant.

    ``phases`` maps ray keys to accumulated phase (Doppler + psi); rays
    missing from it get ``psi`` drawn for birth at this instant.
    """
    phases = phases if phases is not None else {}
    rx = np.asarray(cfg.rx, dtype=float)
    d_los = float(np.linalg.norm(state.position - rx))
    tau0 = d_los / C0
    geo = _ray_gains(paths, d_los, cfg)
    ref = next((g.gain_db for g in geo if g.path.kind is PathKind.LOS), -fspl_db(cfg.wave, d_los))
    rays = []
    for g in geo:
        p = g.path
        tau = p.d_total / C0
        ph = phases.get(p.key)
        if ph is None:
            ph = initial_phase(cfg.seed, 0, p.key, int(round(state.t * 1e6)))
        rel = 0.0 if p.kind is PathKind.LOS else g.gain_db - ref
        rays.append(
            RayRecord(
                p.ray_id, p.kind, -g.gain_db, rel, tau,
                0.0 if p.kind is PathKind.LOS else max(tau - tau0, 0.0),
                ph % (2.0 * math.pi),
                p.departure.azimuth, p.departure.elevation,
                p.arrival.azimuth, p.arrival.elevation,
                g.foliage_db,
            )
        )
    return ChannelSnapshot(state.t, tuple(rays))


def filter_rays(snapshot: ChannelSnapshot, threshold_db: float = DEFAULT_THRESHOLD_DB) -> ChannelSnapshot:
    """Drop NLoS rays weaker than ``threshold_db`` relative to LoS."""
    if not threshold_db < 0:
        raise ValueError("threshold must be negative")
    kept = tuple(r for r in snapshot.rays if r.kind is PathKind.LOS or r.rel_gain_db >= threshold_db)
    return replace(snapshot, rays=kept)


def _trace_states(scene, states, cfg):
    rx = np.asarray(cfg.rx, dtype=float)
    out = []
    for s in states:
        out.append(trace_all(TraceQuery(s.position, rx, scene, cfg.max_paths)))
    return out


def _chunks(seq, n):
    k = max(1, math.ceil(len(seq) / n))
    return [seq[i : i + k] for i in range(0, len(seq), k)]


def trace_trajectory(scene: SceneDatabase, states: Sequence[KinematicState], cfg: SimulationConfig):
    """Paths for every state and the wall-clock time spent tracing."""
    start = time.perf_counter()
    if cfg.workers > 1 and len(states) > 1:
        if scene.facet_count:
            scene.bvh  # build once before pickling to the workers
            scene.wedge_frames
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = pool.map(_trace_states, *zip(*[(scene, c, cfg) for c in _chunks(list(states), cfg.workers)]))
            paths = [p for part in parts for p in part]
    else:
        paths = _trace_states(scene, states, cfg)
    return paths, time.perf_counter() - start


def synthesize_series(
    all_paths: Sequence[Sequence[PropagationPath]],
    states: Sequence[KinematicState],
    cfg: SimulationConfig,
    stream: int = 0,
) -> list[ChannelSnapshot]:
    """Sequential reduction over the traced instants: Doppler phase is
    carried per ray key from its birth and ``psi`` is drawn at each birth."""
    wavelength = cfg.wave.wavelength
    phases: dict = {}
    prev_dirs: dict = {}
    out = []
    for k, (paths, state) in enumerate(zip(all_paths, states)):
        current = {}
        for p in paths:
            if p.key in phases and p.key in prev_dirs:
                # left rectangle: arrival direction at the previous instant, step velocity
                inc = 2.0 * math.pi / wavelength * float(np.dot(state.velocity, prev_dirs[p.key])) * (
                    state.t - states[k - 1].t
                )
                current[p.key] = phases[p.key] + inc
            else:
                current[p.key] = initial_phase(cfg.seed, stream, p.key, k)
        snap = synthesize_snapshot(paths, state, cfg, current)
        out.append(filter_rays(snap, cfg.threshold_db))
        phases = current
        prev_dirs = {p.key: spherical_unit_vector(p.arrival) for p in paths}
    return out


def run_simulation(
    scene: SceneDatabase, trajectory: Trajectory, cfg: SimulationConfig, stream: int = 0, label: str = ""
) -> SimulationRun:
    states = sample_trajectory(trajectory)
    paths, elapsed = trace_trajectory(scene, states, cfg)
    snaps = synthesize_series(paths, states, cfg, stream)
    return SimulationRun(
        snaps,
        dict(scene.provenance),
        trajectory_provenance(trajectory),
        elapsed,
        cfg.seed,
        label,
    )


def run_batch(scene: SceneDatabase, trajectories: Sequence[Trajectory], cfg: SimulationConfig, label: str = "") -> list[SimulationRun]:
    """One run per trajectory; trajectory ``i`` uses random stream ``i``."""
    return [run_simulation(scene, tr, cfg, i, label) for i, tr in enumerate(trajectories)]


def trajectory_provenance(traj: Trajectory) -> dict:
    return {
        "waypoints": traj.waypoints.tolist(),
        "speed_mps": traj.speed,
        "dt_s": traj.dt,
        "duration_s": traj.duration,
    }


# --------------------------------------------------------------------------
# level-of-detail benchmark


@dataclass
class BenchmarkReport:
    labels: list
    seconds: dict  # label -> trace seconds per repetition

    @property
    def repetitions(self) -> int:
        return len(self.seconds[self.labels[0]])

    @property
    def mean(self) -> dict:
        return {lab: float(np.mean(self.seconds[lab])) for lab in self.labels}

    @property
    def std(self) -> dict:
        return {lab: float(np.std(self.seconds[lab], ddof=1)) if self.repetitions > 1 else 0.0 for lab in self.labels}

    @property
    def strictly_ordered(self) -> bool:
        """Mean trace time strictly increasing in label order."""
        m = [self.mean[lab] for lab in self.labels]
        return all(a < b for a, b in zip(m, m[1:]))

    @property
    def ordered_repetitions(self) -> int:
        """Repetitions in which every label was strictly slower than the previous one."""
        return sum(
            all(self.seconds[a][k] < self.seconds[b][k] for a, b in zip(self.labels, self.labels[1:]))
            for k in range(self.repetitions)
        )

    def as_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "repetitions": self.repetitions,
            "seconds": {lab: list(v) for lab, v in self.seconds.items()},
            "mean_s": self.mean,
            "std_s": self.std,
            "strictly_ordered": self.strictly_ordered,
            "ordered_repetitions": self.ordered_repetitions,
        }


def benchmark_trace(
    scenes: Mapping[str, SceneDatabase],
    trajectories: Sequence[Trajectory],
    cfg: SimulationConfig,
    repetitions: int = 5,
) -> BenchmarkReport:
    """Wall-clock tracing time of every trajectory on every database.

    Acceleration structures are built before timing. Databases take
    turns on each trajectory so slow drift in machine load spreads
    evenly over them.
    """
    if len(scenes) < 2:
        raise ValueError("benchmark needs at least two databases")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    states = [sample_trajectory(t) for t in trajectories]
    for db in scenes.values():
        if db.facet_count:
            db.bvh
            db.wedge_frames
    seconds = {lab: [] for lab in scenes}
    for _ in range(repetitions):
        total = dict.fromkeys(scenes, 0.0)
        for st in states:
            for lab, db in scenes.items():
                total[lab] += trace_trajectory(db, st, cfg)[1]
        for lab in scenes:
            seconds[lab].append(total[lab])
    return BenchmarkReport(list(scenes), seconds)


# --------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def snapshots_to_csv(snapshots: Sequence[ChannelSnapshot]) -> str:
    """One row per ray per instant; an instant without rays gets one
    placeholder row of kind ``none`` so the time grid survives."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in snapshots:
        if not s.rays:
            w.writerow([_fmt(s.t), "", EMPTY_KIND] + [""] * 7)
            continue
        for r in s.rays:
            w.writerow(
                [
                    _fmt(s.t), r.ray_id, r.kind.label, _fmt(r.rel_gain_db), _fmt(r.rel_delay * 1e9),
                    _fmt(math.degrees(r.aod_az)), _fmt(math.degrees(r.aod_el)),
                    _fmt(math.degrees(r.aoa_az)), _fmt(math.degrees(r.aoa_el)), _fmt(r.phase),
                ]
            )
    return buf.getvalue()


def write_snapshots_csv(path, snapshots: Sequence[ChannelSnapshot]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(snapshots_to_csv(snapshots))


class SnapshotCsvError(ValueError):
    def __init__(self, message: str, row: Optional[int] = None, source: str = "<csv>"):
        self.row = row
        self.source = source
        where = f"{source}: row {row}: " if row is not None else f"{source}: "
        super().__init__(where + message)


_KINDS = {k.label: k for k in PathKind}


def read_snapshots_csv(source, name: Optional[str] = None) -> list[ChannelSnapshot]:
    """Parse a snapshot CSV back into snapshots. Absolute delays and
    attenuations are not stored, so they come back as NaN."""
    if isinstance(source, (str, os.PathLike)) and name is None and os.path.exists(source):
        name = os.fspath(source)
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        text = source
    name = name or "<csv>"
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise SnapshotCsvError("missing or unexpected header", 1, name)
    grouped: dict[float, list[RayRecord]] = {}
    order: list[float] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise SnapshotCsvError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", row_no, name)
        try:
            t = float(row[0])
            if t not in grouped:
                grouped[t] = []
                order.append(t)
            if row[2] == EMPTY_KIND:
                continue
            kind = _KINDS[row[2]]
            vals = [float(v) for v in row[3:]]
        except (ValueError, KeyError) as exc:
            raise SnapshotCsvError(f"bad value ({exc})", row_no, name) from None
        rel_gain, rel_delay_ns, aod_az, aod_el, aoa_az, aoa_el, phase = vals
        grouped[t].append(
            RayRecord(
                row[1], kind, math.nan, rel_gain, math.nan, rel_delay_ns * 1e-9, phase,
                math.radians(aod_az), math.radians(aod_el), math.radians(aoa_az), math.radians(aoa_el),
            )
        )
    if any(b <= a for a, b in zip(order, order[1:])):
        raise SnapshotCsvError("time column is not strictly increasing", None, name)
    return [ChannelSnapshot(t, tuple(grouped[t])) for t in order]
