"""Command-line front end: ``uavrt build-scene | simulate | stats | benchmark``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 input parsing,
5 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .channel import (
    SimulationRun,
    SnapshotCsvError,
    benchmark_trace,
    read_snapshots_csv,
    run_simulation,
    trajectory_provenance,
    write_snapshots_csv,
)
from .config import (
    BUNDLED,
    OUTPUT_ENV,
    ConfigError,
    InputError,
    RunConfig,
    SceneSource,
    criteria_from_label,
    load_run_config,
)
from .scene import STANDARD_CRITERIA, SceneError, reconstruct
from .stats import DEFAULT_BINS, StatsError, compare_runs, export_statistics

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_RUNTIME = 5

MANIFEST = "manifest.json"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _json_number(x: float):
    return x if math.isfinite(x) else str(x)


def _output_dir(flag: Optional[str], fallback: Path) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return fallback


def _config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    sim = cfg.simulation
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        changes["threshold_db"] = args.threshold
    if getattr(args, "frequency_mhz", None) is not None:
        changes["frequency_mhz"] = args.frequency_mhz
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    try:
        cfg.simulation = replace(sim, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if getattr(args, "dt_s", None) is not None:
        if not args.dt_s > 0:
            raise ConfigError("--dt-s must be positive")
        cfg.dt_s = args.dt_s
    if getattr(args, "lod", None):
        cfg.lods = [criteria_from_label(x) for x in args.lod]
    if getattr(args, "output_dir", None):
        cfg.output_dir = Path(args.output_dir)
    return cfg


# --------------------------------------------------------------------------
# subcommands


def cmd_build_scene(args) -> int:
    if args.config:
        cfg = _config(args)
        source, lods, out = cfg.scene, cfg.lods, cfg.output_dir
    elif args.campus or args.dem:
        source = SceneSource.bundled() if args.campus else SceneSource(
            None, Path(args.dem), Path(args.footprints) if args.footprints else None,
            Path(args.materials) if args.materials else None,
        )
        lods = [criteria_from_label(x) for x in args.lod] if args.lod else list(STANDARD_CRITERIA)
        out = _output_dir(args.output_dir, Path.cwd() / "scenes")
    else:
        raise _Usage("build-scene needs --config, --campus or --dem")
    if source.database is not None:
        raise ConfigError("build-scene needs raw scene files, not a prebuilt database")
    raw = source.raw()
    out.mkdir(parents=True, exist_ok=True)
    for crit in lods:
        try:
            db = reconstruct(raw, crit)
        except SceneError as exc:
            raise InputError(str(exc)) from None
        path = out / f"scene_{crit.label}.json"
        db.save(path)
        print(f"{crit.label}: {db.facet_count} facets, {db.wedge_count} wedges -> {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    trajectories = cfg.trajectories()
    sim = cfg.simulation
    for crit in cfg.lods:
        db = cfg.scene.database_for(crit)
        label = db.provenance.get("criteria", {}).get("label", crit.label) if cfg.scene.database else crit.label
        out = cfg.output_dir / label if len(cfg.lods) > 1 else cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        files, seconds = [], []
        for i, traj in enumerate(trajectories):
            try:
                run = run_simulation(db, traj, sim, stream=i, label=label)
            except (ValueError, ArithmeticError) as exc:
                raise RuntimeError(f"{label}, trajectory {i + 1}: {exc}") from exc
            name = f"snapshots_{i + 1:02d}.csv"
            write_snapshots_csv(out / name, run.snapshots)
            files.append(name)
            seconds.append(run.trace_seconds)
        manifest = {
            "version": __version__,
            "label": label,
            **cfg.manifest_fields(),
            "threshold_db": _json_number(sim.threshold_db),
            "dt_s": cfg.dt_s,
            "workers": sim.workers,
            "scene_sha256": db.digest(),
            "scene_provenance": db.provenance,
            "trajectories": [trajectory_provenance(t) for t in trajectories],
            "snapshot_files": files,
            "trace_seconds": seconds,
            "trace_seconds_total": sum(seconds),
        }
        _write_json(out / MANIFEST, manifest)
        print(f"{label}: {len(files)} runs, trace {sum(seconds):.2f} s -> {out}")
    return EXIT_OK


def _run_dirs(paths: Sequence[str]) -> list[Path]:
    dirs = []
    for p in map(Path, paths):
        if (p / MANIFEST).is_file():
            dirs.append(p)
            continue
        nested = sorted(d for d in p.iterdir() if (d / MANIFEST).is_file()) if p.is_dir() else []
        if not nested:
            raise InputError(f"{p}: no {MANIFEST} found")
        dirs.extend(nested)
    return dirs


def load_run_directory(path: Path) -> tuple[str, list[SimulationRun]]:
    """Runs recorded by ``simulate`` in one output directory."""
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
        files = manifest["snapshot_files"]
        trajs = manifest["trajectories"]
        seconds = manifest["trace_seconds"]
    except OSError as exc:
        raise InputError(f"cannot read {path / MANIFEST}: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path / MANIFEST}: malformed manifest ({exc})") from None
    label = manifest.get("label") or path.name
    runs = []
    for name, traj, sec in zip(files, trajs, seconds):
        if not (path / name).is_file():
            raise InputError(f"missing snapshot file {path / name}")
        snaps = read_snapshots_csv(path / name)
        runs.append(SimulationRun(snaps, manifest.get("scene_provenance", {}), traj, sec, manifest.get("seed", 0), label))
    return label, runs


def cmd_stats(args) -> int:
    dirs = _run_dirs(args.runs)
    out = _output_dir(args.output_dir, Path.cwd() / "stats")
    by_label: dict = {}
    for d in dirs:
        label, runs = load_run_directory(d)
        if label in by_label:
            label = str(d)
        by_label[label] = runs
    comparison = compare_runs(by_label) if len(by_label) > 1 else None
    for label, runs in by_label.items():
        target = out / Path(label).name if len(by_label) > 1 else out
        summary = export_statistics(target, runs, args.bins)
        median = summary["delay_spread_ns"]["median"]
        spread = "n/a" if median is None else f"{median:.2f} ns"
        print(f"{label}: mean ray count {summary['mean_ray_count']:.3f}, median delay spread {spread} -> {target}")
    if comparison is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(comparison.to_json() + "\n", encoding="utf-8")
        for lab, off in comparison.mean_offsets.items():
            print(f"{comparison.reference} - {lab}: mean ray-count offset {off:+.3f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    if args.repetitions is not None:
        if args.repetitions < 1:
            raise ConfigError("--repetitions must be >= 1")
        cfg.repetitions = args.repetitions
    if cfg.scene.database is not None:
        raise ConfigError("benchmark builds its databases from raw scene files")
    labels = [c.label for c in cfg.lods]
    if len(set(labels)) < 2:
        raise ConfigError("benchmark needs at least two level-of-detail databases")
    raw = cfg.scene.raw()
    try:
        scenes = {c.label: reconstruct(raw, c) for c in cfg.lods}
    except SceneError as exc:
        raise InputError(str(exc)) from None
    report = benchmark_trace(scenes, cfg.trajectories(), cfg.simulation, cfg.repetitions)
    doc = report.as_dict()
    doc["facet_count"] = {lab: db.facet_count for lab, db in scenes.items()}
    doc["config_sha256"] = cfg.digest
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.output_dir / "benchmark.json", doc)
    for lab in report.labels:
        print(f"{lab}: {report.mean[lab]:.3f} ± {report.std[lab]:.3f} s over {report.repetitions} repetitions")
    print("strictly ordered" if report.strictly_ordered else "not strictly ordered")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Usage(Exception):
    pass


def _run_flags(p: argparse.ArgumentParser, positional: bool = True) -> None:
    if positional:
        p.add_argument("config", help=f"INI run configuration, or '{BUNDLED}' for the bundled campus")
    p.add_argument("--lod", action="append", metavar="LABEL", help="level of detail (repeatable): DB-I, DB-II, DB-III")
    p.add_argument("--output-dir", "-o", help=f"output directory (also ${OUTPUT_ENV})")
    p.add_argument("--workers", type=int, help="worker processes for tracing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavrt", description="Ray tracing of UAV air-to-ground mmWave channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-scene", help="reconstruct level-of-detail scene databases")
    p.add_argument("--config", help="take scene files and LODs from a run configuration")
    p.add_argument("--campus", action="store_true", help="use the bundled synthetic campus")
    p.add_argument("--dem", help="DEM text grid")
    p.add_argument("--footprints", help="footprint file")
    p.add_argument("--materials", help="material table")
    _run_flags(p, positional=False)
    p.set_defaults(func=cmd_build_scene)

    p = sub.add_parser("simulate", help="trace and synthesize snapshots along the trajectories")
    _run_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float, metavar="DB", help="relative power threshold (default -45)")
    p.add_argument("--frequency-mhz", type=float)
    p.add_argument("--dt-s", type=float, help="override the trajectory sampling interval")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="statistics over simulate output directories")
    p.add_argument("runs", nargs="+", help="directories holding a manifest.json (or their parent)")
    p.add_argument("--output-dir", "-o", help=f"output directory (also ${OUTPUT_ENV})")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("benchmark", help="time tracing on two or more levels of detail")
    _run_flags(p)
    p.add_argument("--repetitions", type=int)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"uavrt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"uavrt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, SceneError, SnapshotCsvError) as exc:
        print(f"uavrt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StatsError, RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"uavrt: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
