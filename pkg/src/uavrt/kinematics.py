"""UAV motion on a waypoint trajectory and the quantities derived from it.

The receiver is the kinematic origin: every position handled here is the
transmitter location relative to the receiver. Positions follow the
recurrence ``L(t) = L(t - dt) + v(t) * dt`` exactly; ``v(t)`` is the chord
velocity of the step, equal to the cruise speed except on steps that
turn a waypoint corner.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .em import C0
from .geometry import SphericalAngles, angles_of_separation


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray  # (k, 3), metres
    speed: float  # m/s
    dt: float = 1.0  # s
    duration: float = 100.0  # s

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3 or len(w) < 2:
            raise TrajectoryError("trajectory needs at least two 3-D waypoints")
        if not np.all(np.isfinite(w)):
            raise TrajectoryError("waypoints must be finite")
        if np.any(np.linalg.norm(np.diff(w, axis=0), axis=1) == 0):
            raise TrajectoryError("consecutive waypoints must differ")
        for name in ("speed", "dt", "duration"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise TrajectoryError(f"{name} must be positive, got {v}")
        object.__setattr__(self, "waypoints", w)

    @property
    def n_states(self) -> int:
        # guard against 100 / 0.1 landing just under an integer
        return int(math.floor(self.duration / self.dt + 1e-9)) + 1

    @property
    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length ``s`` along the polyline, clamped to its ends."""
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if s <= 0:
            return self.waypoints[0].copy()
        if s >= cum[-1]:
            return self.waypoints[-1].copy()
        i = int(np.searchsorted(cum, s, side="right")) - 1
        f = (s - cum[i]) / seg[i]
        return self.waypoints[i] + f * (self.waypoints[i + 1] - self.waypoints[i])


@dataclass(frozen=True)
class KinematicState:
    t: float
    position: np.ndarray  # transmitter, scene coordinates
    velocity: np.ndarray  # velocity of the step ending at t (the first state carries the first step's)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    @property
    def velocity_angles(self) -> SphericalAngles:
        if self.speed == 0.0:
            return SphericalAngles(0.0, 0.0)
        return angles_of_separation(np.zeros(3), self.velocity)


def sample_trajectory(traj: Trajectory) -> list[KinematicState]:
    """States at ``t = k * dt``; the UAV holds its last waypoint once it
    runs out of path."""
    n = traj.n_states
    targets = [traj.point_at(traj.speed * k * traj.dt) for k in range(n)]
    states = []
    pos = targets[0]
    for k in range(n):
        if k == 0:
            v = (targets[1] - targets[0]) / traj.dt if n > 1 else np.zeros(3)
        else:
            v = (targets[k] - pos) / traj.dt
            pos = pos + v * traj.dt
        states.append(KinematicState(k * traj.dt, pos.copy(), v))
    return states


def distance_tx_rx_closed_form(
    prev_distance: float, prev_arrival: SphericalAngles, velocity: np.ndarray, dt: float
) -> float:
    """Receiver-transmitter range after one step, by the law of cosines.

    ``prev_arrival`` is the LoS arrival direction at the receiver (pointing
    to the transmitter) at the previous instant; ``velocity`` is the step
    velocity.
    """
    step = float(np.linalg.norm(velocity)) * dt
    if step == 0.0:
        return prev_distance
    va = angles_of_separation(np.zeros(3), velocity)
    cos_angle = math.cos(prev_arrival.elevation) * math.cos(va.elevation) * math.cos(
        prev_arrival.azimuth - va.azimuth
    ) + math.sin(prev_arrival.elevation) * math.sin(va.elevation)
    sq = prev_distance**2 + step**2 + 2.0 * prev_distance * step * cos_angle
    return math.sqrt(max(sq, 0.0))


def distance_tx_scatterer_closed_form(
    prev_tx: np.ndarray, scatterer: np.ndarray, velocity: np.ndarray, dt: float
) -> float:
    """Scatterer-transmitter range after one step, law of cosines about the
    (time-invariant) scatterer. Positions are relative to the receiver."""
    rel = np.asarray(prev_tx, dtype=float) - np.asarray(scatterer, dtype=float)
    d_prev = float(np.linalg.norm(rel))
    if d_prev == 0.0:
        return float(np.linalg.norm(velocity)) * dt
    return distance_tx_rx_closed_form(d_prev, angles_of_separation(np.zeros(3), rel), velocity, dt)


def distance_tx_scatterer_as_printed(
    prev_tx_distance: float,
    scatterer_distance: float,
    scatterer_arrival: SphericalAngles,
    velocity: np.ndarray,
    dt: float,
) -> float:
    """The printed scalar form: the previous range is taken as the
    difference of receiver distances and the direction as the scatterer's
    arrival direction. Exact only when receiver, scatterer and transmitter
    are collinear with the scatterer in between."""
    return distance_tx_rx_closed_form(
        prev_tx_distance - scatterer_distance, scatterer_arrival, velocity, dt
    )


def doppler_increment(velocity: np.ndarray, arrival_dir: np.ndarray, dt: float, wavelength: float) -> float:
    return 2.0 * math.pi / wavelength * float(np.dot(velocity, arrival_dir)) * dt


def doppler_phase(velocities: Sequence, arrival_dirs: Sequence, dt: float, wavelength: float) -> np.ndarray:
    """Cumulative left-rectangle Doppler phase at every sample.

    Entry ``k`` integrates samples ``0..k-1``; entry 0 is zero.
    """
    v = np.asarray(velocities, dtype=float).reshape(-1, 3)
    r = np.asarray(arrival_dirs, dtype=float).reshape(-1, 3)
    if v.shape != r.shape:
        raise ValueError("velocity and arrival-direction grids differ in length")
    inc = 2.0 * math.pi / wavelength * np.einsum("ij,ij->i", v, r) * dt
    return np.concatenate([[0.0], np.cumsum(inc[:-1])]) if len(inc) else inc


def delay_of(path) -> float:
    """Propagation delay in seconds of a path (or a bare distance)."""
    d = getattr(path, "d_total", path)
    return float(d) / C0


# --------------------------------------------------------------------------
# trajectory files


def parse_trajectories(text: str, name: str = "<trajectories>", dt_override: Optional[float] = None) -> list[Trajectory]:
    """INI sections ``[trajectory <id>]`` with ``waypoints_m`` (``x y z``
    triples separated by ``;``), ``speed_mps``, ``dt_s`` and ``duration_s``,
    taken in file order."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise TrajectoryError(f"{name}: {exc}") from None
    out = []
    for sec in cp.sections():
        if not sec.startswith("trajectory"):
            raise TrajectoryError(f"{name}: unexpected section [{sec}]")
        s = cp[sec]
        try:
            pts = [[float(v) for v in p.replace(",", " ").split()] for p in s["waypoints_m"].split(";") if p.strip()]
            if any(len(p) != 3 for p in pts):
                raise TrajectoryError("waypoints_m needs x y z triples separated by ';'")
            out.append(
                Trajectory(
                    np.array(pts),
                    s.getfloat("speed_mps"),
                    dt_override if dt_override is not None else s.getfloat("dt_s", 1.0),
                    s.getfloat("duration_s"),
                )
            )
        except KeyError as exc:
            raise TrajectoryError(f"{name}: [{sec}] missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise TrajectoryError(f"{name}: [{sec}] {exc}") from None
    if not out:
        raise TrajectoryError(f"{name}: no [trajectory ...] sections")
    return out


def dump_trajectories(trajs: Sequence[Trajectory]) -> str:
    buf = io.StringIO()
    for i, t in enumerate(trajs, start=1):
        buf.write(f"[trajectory {i}]\n")
        buf.write("waypoints_m = " + "; ".join(" ".join(repr(float(v)) for v in p) for p in t.waypoints) + "\n")
        buf.write(f"speed_mps = {t.speed!r}\ndt_s = {t.dt!r}\nduration_s = {t.duration!r}\n\n")
    return buf.getvalue()
