"""Run configuration and trajectory files.

Both are INI files; every key carries its unit in its name. Relative
paths resolve against the directory of the file that names them. The
value ``campus`` selects the bundled synthetic campus: as a config path,
as ``[scene] source`` or as ``[trajectories] file``.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .campus import CONFIG_FILE, DEM_FILE, FOOTPRINT_FILE, MATERIAL_FILE, TRAJECTORY_FILE, bundled_path
from .channel import DEFAULT_FOLIAGE_LOSS_DB, DEFAULT_THRESHOLD_DB, SimulationConfig
from .kinematics import Trajectory, TrajectoryError, parse_trajectories
from .scene import (
    DEFAULT_MATERIALS,
    STANDARD_CRITERIA,
    LodCriteria,
    RawScene,
    SceneDatabase,
    SceneError,
    load_dem,
    load_footprints,
    load_material_table,
    reconstruct,
)

BUNDLED = "campus"
OUTPUT_ENV = "UAVRT_OUTPUT_DIR"
CRITERIA_BY_LABEL = {c.label: c for c in STANDARD_CRITERIA}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit class 3)."""


class InputError(ValueError):
    """A data file could not be read or parsed (exit class 4)."""


def _parser(text: str, name: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return cp


def _read_text(path: Path, what: str) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _floats(value: str, n: int, key: str) -> tuple:
    try:
        vals = tuple(float(v) for v in value.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected {n} numbers, got {value!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


# --------------------------------------------------------------------------
# trajectories


def load_trajectories(ref: str, base: Path, dt_override: Optional[float] = None) -> list[Trajectory]:
    path = bundled_path(TRAJECTORY_FILE) if ref == BUNDLED else base / ref
    try:
        return parse_trajectories(_read_text(path, "trajectory file"), str(path), dt_override)
    except TrajectoryError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# scenes


@dataclass
class SceneSource:
    """Either a prebuilt database file or raw scene files."""

    database: Optional[Path] = None
    dem: Optional[Path] = None
    footprints: Optional[Path] = None
    materials: Optional[Path] = None

    @classmethod
    def bundled(cls) -> "SceneSource":
        return cls(None, bundled_path(DEM_FILE), bundled_path(FOOTPRINT_FILE), bundled_path(MATERIAL_FILE))

    def raw(self) -> RawScene:
        if self.dem is None:
            raise ConfigError("scene needs 'dem' (with 'footprints') or 'database'")
        try:
            dem = load_dem(self.dem)
            fps = load_footprints(self.footprints) if self.footprints else []
            mats = load_material_table(self.materials) if self.materials else dict(DEFAULT_MATERIALS)
        except FileNotFoundError as exc:
            raise InputError(f"missing scene file {exc.filename}") from None
        except OSError as exc:
            raise InputError(f"cannot read scene file {getattr(exc, 'filename', '')}: {exc}") from None
        except SceneError as exc:
            raise InputError(str(exc)) from None
        return RawScene(dem, fps, mats)

    def database_for(self, criteria: LodCriteria) -> SceneDatabase:
        if self.database is not None:
            try:
                return SceneDatabase.load(self.database)
            except OSError as exc:
                raise InputError(f"cannot read scene database {self.database}: {exc}") from None
            except (ValueError, KeyError) as exc:
                raise InputError(f"{self.database}: malformed scene database ({exc})") from None
        try:
            return reconstruct(self.raw(), criteria)
        except SceneError as exc:
            raise InputError(str(exc)) from None


def criteria_from_label(label: str) -> LodCriteria:
    try:
        return CRITERIA_BY_LABEL[label.strip()]
    except KeyError:
        raise ConfigError(f"unknown level of detail {label!r}; choose from {', '.join(CRITERIA_BY_LABEL)}") from None


# --------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    path: Optional[Path]
    digest: str
    simulation: SimulationConfig
    bandwidth_mhz: float
    tx_power_dbm: float
    dt_s: Optional[float]
    scene: SceneSource
    lods: list[LodCriteria]
    trajectories_ref: str
    output_dir: Path
    repetitions: int = 5

    def trajectories(self) -> list[Trajectory]:
        base = self.path.parent if self.path else Path.cwd()
        return load_trajectories(self.trajectories_ref, base, self.dt_s)

    def manifest_fields(self) -> dict:
        sim = self.simulation
        return {
            "config_sha256": self.digest,
            "frequency_mhz": sim.frequency_mhz,
            "bandwidth_mhz": self.bandwidth_mhz,
            "tx_power_dbm": self.tx_power_dbm,
            "threshold_db": sim.threshold_db,
            "foliage_loss_db": sim.foliage_loss_db,
            "seed": sim.seed,
            "rx_position_m": list(sim.rx),
            "lods": [c.label for c in self.lods],
        }


def parse_run_config(text: str, path: Optional[Path] = None, output_base: Optional[Path] = None) -> RunConfig:
    """``output_base`` anchors a relative output directory (default: the
    config file's directory); the ``UAVRT_OUTPUT_DIR`` variable overrides it."""
    name = str(path) if path else "<config>"
    base = path.parent if path else Path.cwd()
    cp = _parser(text, name)
    known = {"simulation", "scene", "trajectories", "output", "benchmark"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{name}: unknown section [{sec}]")
    sim = cp["simulation"] if cp.has_section("simulation") else {}

    def num(sec, key, default, conv=float):
        if key not in sec:
            return default
        try:
            v = conv(sec[key])
        except ValueError:
            raise ConfigError(f"{name}: {key} = {sec[key]!r} is not a number") from None
        if conv is float and math.isnan(v):
            raise ConfigError(f"{name}: {key} is NaN")
        return v

    threshold = sim.get("threshold_db", str(DEFAULT_THRESHOLD_DB)).strip()
    try:
        simulation = SimulationConfig(
            frequency_mhz=num(sim, "frequency_mhz", 28_000.0),
            threshold_db=-math.inf if threshold.lower() in ("off", "none", "-inf") else float(threshold),
            foliage_loss_db=num(sim, "foliage_loss_db", DEFAULT_FOLIAGE_LOSS_DB),
            seed=num(sim, "seed", 0, int),
            rx=_floats(sim["rx_position_m"], 3, "rx_position_m") if "rx_position_m" in sim else (0.0, 0.0, 2.0),
            max_paths=num(sim, "max_paths", None, int),
            workers=num(sim, "workers", os.cpu_count() or 1, int),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    dt = num(sim, "dt_s", None)
    if dt is not None and not dt > 0:
        raise ConfigError(f"{name}: dt_s must be positive")

    if not cp.has_section("scene"):
        raise ConfigError(f"{name}: missing [scene] section")
    sc = cp["scene"]

    def rel(key):
        return (base / sc[key]) if key in sc else None

    if sc.get("source", "").strip() == BUNDLED:
        source = SceneSource.bundled()
    else:
        source = SceneSource(rel("database"), rel("dem"), rel("footprints"), rel("materials"))
    if not (source.database or source.dem):
        raise ConfigError(f"{name}: [scene] needs 'source = campus', 'database' or 'dem'")
    lods = [criteria_from_label(x) for x in sc.get("lod", "DB-III").split(",") if x.strip()]
    if not lods:
        raise ConfigError(f"{name}: [scene] lod is empty")

    if not cp.has_section("trajectories") or "file" not in cp["trajectories"]:
        raise ConfigError(f"{name}: missing [trajectories] file")
    out_dir = cp["output"].get("directory", "out") if cp.has_section("output") else "out"
    out_path = Path(os.environ[OUTPUT_ENV]) if os.environ.get(OUTPUT_ENV) else (output_base or base) / out_dir
    bench = cp["benchmark"] if cp.has_section("benchmark") else {}
    reps = num(bench, "repetitions", 5, int)
    if reps < 1:
        raise ConfigError(f"{name}: repetitions must be >= 1")
    return RunConfig(
        path, hashlib.sha256(text.encode("utf-8")).hexdigest(), simulation,
        num(sim, "bandwidth_mhz", 500.0), num(sim, "tx_power_dbm", 20.0), dt,
        source, lods, cp["trajectories"]["file"].strip(), out_path, reps,
    )


def load_run_config(path) -> RunConfig:
    """Load an INI run configuration; ``campus`` selects the bundled one,
    whose output lands under the working directory."""
    if str(path) == BUNDLED:
        p = bundled_path(CONFIG_FILE)
        return parse_run_config(_read_text(p, "config file"), p, Path.cwd())
    path = Path(path)
    return parse_run_config(_read_text(path, "config file"), path)
