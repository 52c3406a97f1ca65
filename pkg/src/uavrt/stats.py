"""Statistics over simulation runs: ray counts, relative power, delay
spread, angle offsets with lognormal fits and cross-LOD comparison."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .channel import ChannelSnapshot, SimulationRun
from .geometry import wrap_angle
from .tracer import PathKind

DEFAULT_BINS = 50


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mode: str = "count"  # "count" or "pdf"

    def __post_init__(self):
        if self.mode not in ("count", "pdf"):
            raise StatsError(f"unknown histogram mode {self.mode!r}")
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if len(edges) and (len(edges) != len(counts) + 1 or np.any(np.diff(edges) <= 0)):
            raise StatsError("edges must be strictly increasing with one more entry than counts")
        if np.any(counts < 0):
            raise StatsError("histogram counts must be >= 0")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_samples(cls, samples, bins: int = DEFAULT_BINS, range=None, mode: str = "count") -> "Histogram":
        x = np.asarray(samples, dtype=float)
        x = x[np.isfinite(x)]
        if x.size == 0:
            return cls(np.empty(0), np.empty(0), mode)
        counts, edges = np.histogram(x, bins=bins, range=range, density=(mode == "pdf"))
        return cls(edges, counts, mode)

    @property
    def empty(self) -> bool:
        return self.counts.size == 0

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class LognormalFit:
    mu: float
    sigma: float
    count: int
    zeros_excluded: int = 0
    note: str = "fit to |samples| in natural log"


def _weights(gains_db) -> np.ndarray:
    g = np.asarray(gains_db, dtype=float)
    # referencing to the strongest ray keeps the weights offset-invariant
    w = 10.0 ** ((g - np.max(g)) / 10.0)
    return w / w.sum()


def rms_delay_spread_from(gains_db, delays) -> float:
    """Power-weighted standard deviation of delays (two-pass form)."""
    tau = np.asarray(delays, dtype=float)
    if tau.size == 0:
        raise StatsError("delay spread needs at least one ray")
    if tau.size != np.asarray(gains_db).size:
        raise StatsError("gains and delays differ in length")
    w = _weights(gains_db)
    mean = float(np.dot(w, tau))
    return math.sqrt(float(np.dot(w, (tau - mean) ** 2)))


def rms_delay_spread(snapshot: ChannelSnapshot) -> float:
    if not snapshot.rays:
        raise StatsError(f"snapshot at t={snapshot.t} has no rays")
    return rms_delay_spread_from([r.rel_gain_db for r in snapshot.rays], [r.rel_delay for r in snapshot.rays])


def delay_spread_series(run: SimulationRun) -> np.ndarray:
    """Delay spread per instant (seconds); NaN where an instant has no rays."""
    return np.array([rms_delay_spread(s) if s.rays else math.nan for s in run.snapshots])


def _runs(runs) -> list[SimulationRun]:
    return [runs] if isinstance(runs, SimulationRun) else list(runs)


def relative_power_samples(runs) -> np.ndarray:
    return np.array(
        [r.rel_gain_db for run in _runs(runs) for s in run.snapshots for r in s.rays if r.kind is not PathKind.LOS]
    )


def relative_power_distribution(runs, bins: int = DEFAULT_BINS, mode: str = "count") -> Histogram:
    """Pooled NLoS gains relative to LoS over all snapshots and runs."""
    return Histogram.from_samples(relative_power_samples(runs), bins, mode=mode)


@dataclass
class AngleOffsets:
    aaod: list = field(default_factory=list)
    eaod: list = field(default_factory=list)
    aaoa: list = field(default_factory=list)
    eaoa: list = field(default_factory=list)
    skipped_instants: int = 0

    def as_dict(self) -> dict:
        return {"aaod": self.aaod, "eaod": self.eaod, "aaoa": self.aaoa, "eaoa": self.eaoa}


def angle_offsets(runs) -> AngleOffsets:
    """Per-ray angle minus the same-instant LoS angle; azimuth offsets are
    wrapped to (-pi, pi]. Instants without LoS are skipped and counted."""
    out = AngleOffsets()
    for run in _runs(runs):
        for s in run.snapshots:
            los = s.los
            if los is None:
                out.skipped_instants += 1
                continue
            for r in s.rays[1:]:
                out.aaod.append(float(wrap_angle(r.aod_az - los.aod_az)))
                out.eaod.append(r.aod_el - los.aod_el)
                out.aaoa.append(float(wrap_angle(r.aoa_az - los.aoa_az)))
                out.eaoa.append(r.aoa_el - los.aoa_el)
    return out


def fit_lognormal(samples) -> LognormalFit:
    """Maximum-likelihood lognormal fit to the magnitudes of ``samples``.

    Offsets carry a sign while a lognormal lives on the positive axis, so
    absolute values are fitted; exact zeros are dropped and counted.
    """
    x = np.abs(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    zeros = int(np.count_nonzero(x == 0))
    x = x[x > 0]
    if x.size < 2:
        raise StatsError(f"lognormal fit needs at least 2 non-zero samples, got {x.size}")
    logs = np.log(x)
    return LognormalFit(float(np.mean(logs)), float(np.std(logs)), int(x.size), zeros)


@dataclass(frozen=True)
class RayCountSeries:
    times: np.ndarray
    counts: np.ndarray  # (runs, instants)

    @property
    def mean(self) -> np.ndarray:
        return self.counts.mean(axis=0)


def ray_count_series(runs) -> RayCountSeries:
    rs = _runs(runs)
    if not rs:
        raise StatsError("no runs given")
    times = rs[0].times
    for r in rs[1:]:
        if len(r.times) != len(times) or np.any(r.times != times):
            raise StatsError("runs are sampled on different time grids")
    return RayCountSeries(times, np.array([r.counts for r in rs]))


@dataclass
class LodSummary:
    label: str
    trace_seconds: float
    mean_ray_count: float
    mean_delay_spread_ns: float
    mean_count_series: list


@dataclass
class ComparisonReport:
    reference: str
    lods: list[LodSummary]
    count_offsets: dict  # label -> per-instant mean count offset vs the reference
    mean_offsets: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        d = json.loads(text)
        return cls(d["reference"], [LodSummary(**x) for x in d["lods"]], d["count_offsets"], d["mean_offsets"])


def _trajectory_signature(run: SimulationRun):
    return json.dumps(run.trajectory, sort_keys=True), tuple(run.times.tolist())


def compare_runs(runs_by_label: Mapping[str, Sequence[SimulationRun]], reference: Optional[str] = None) -> ComparisonReport:
    """Per-LOD timing, mean ray count and delay spread, and the per-instant
    mean ray-count offset of the reference LOD (default: the last label)
    over each other LOD."""
    labels = list(runs_by_label)
    if len(labels) < 2:
        raise StatsError("comparison needs at least two LOD runs")
    reference = reference or labels[-1]
    if reference not in runs_by_label:
        raise StatsError(f"unknown reference label {reference!r}")
    sigs = {lab: [_trajectory_signature(r) for r in _runs(runs_by_label[lab])] for lab in labels}
    first = sigs[labels[0]]
    for lab in labels[1:]:
        if sigs[lab] != first:
            raise StatsError(f"runs for {lab!r} use different trajectories than {labels[0]!r}")
    lods, means = [], {}
    for lab in labels:
        rs = _runs(runs_by_label[lab])
        series = ray_count_series(rs).mean
        spreads = np.concatenate([delay_spread_series(r) for r in rs])
        spreads = spreads[np.isfinite(spreads)]
        means[lab] = series
        lods.append(
            LodSummary(
                lab,
                float(sum(r.trace_seconds for r in rs)),
                float(series.mean()),
                float(spreads.mean() * 1e9) if spreads.size else math.nan,
                series.tolist(),
            )
        )
    offsets = {lab: (means[reference] - means[lab]).tolist() for lab in labels if lab != reference}
    mean_offsets = {lab: float(np.mean(v)) for lab, v in offsets.items()}
    return ComparisonReport(reference, lods, offsets, mean_offsets)


# --------------------------------------------------------------------------
# export


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def export_statistics(outdir, runs, bins: int = DEFAULT_BINS, comparison: Optional[ComparisonReport] = None) -> dict:
    """Write one CSV per statistic plus ``summary.json``; returns the summary."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rs = _runs(runs)
    counts = ray_count_series(rs)
    _write_csv(
        out / "ray_counts.csv",
        ["t"] + [f"run{i}" for i in range(len(rs))] + ["mean"],
        ([t, *map(int, c), m] for t, c, m in zip(counts.times, counts.counts.T, counts.mean)),
    )
    spreads = [delay_spread_series(r) for r in rs]
    _write_csv(
        out / "delay_spread.csv",
        ["run", "t", "rms_delay_spread_ns"],
        ((i, t, s * 1e9) for i, r in enumerate(rs) for t, s in zip(r.times, spreads[i])),
    )
    hist = relative_power_distribution(rs, bins)
    _write_csv(
        out / "relative_power_hist.csv",
        ["bin_lo_dB", "bin_hi_dB", "count"],
        ((lo, hi, int(c)) for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)),
    )
    offs = angle_offsets(rs)
    _write_csv(
        out / "angle_offsets.csv",
        ["angle", "offset_rad"],
        ((name, v) for name, vals in offs.as_dict().items() for v in vals),
    )
    fits = {}
    for name, vals in offs.as_dict().items():
        try:
            fits[name] = asdict(fit_lognormal(vals))
        except StatsError as exc:
            fits[name] = {"error": str(exc)}
    pooled = np.concatenate([s[np.isfinite(s)] for s in spreads]) if spreads else np.empty(0)
    summary = {
        "runs": len(rs),
        "instants": int(counts.counts.shape[1]),
        "mean_ray_count": float(counts.mean.mean()),
        "delay_spread_ns": {
            "mean": float(pooled.mean() * 1e9) if pooled.size else None,
            "median": float(np.median(pooled) * 1e9) if pooled.size else None,
            "max": float(pooled.max() * 1e9) if pooled.size else None,
            "fraction_below_150ns": float(np.mean(pooled < 150e-9)) if pooled.size else None,
        },
        "relative_power_samples": int(hist.total),
        "angle_offset_lognormal": fits,
        "instants_without_los": offs.skipped_instants,
        "trace_seconds": float(sum(r.trace_seconds for r in rs)),
    }
    if comparison is not None:
        summary["comparison"] = json.loads(comparison.to_json())
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return summary
