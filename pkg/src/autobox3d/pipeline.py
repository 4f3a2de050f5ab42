"""End-to-end auto-labelling: sequence directories in, label files out.

Each reference frame is labelled independently: instances are tracked
over a window of surrounding frames, classified as stationary or
moving, aggregated accordingly, fitted with an oriented box, refined
against a vehicle template, and written as one label file. Runs are
deterministic for a fixed config and input, regardless of worker
count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import canonical as canonical_mod
from .box_fitting import (
    BoxFitConfig,
    estimate_vertical,
    fit_bev_box,
    fit_bev_box_fixed_yaw,
    moving_yaw,
    sanitize_dims,
)
from .canonical import CanonicalConfig
from .errors import AutoboxError, EmptyCloud, ParseError, TooFewPoints, TooShort
from .evaluation import EvalConfig
from .motion import MOVING, MotionConfig, aggregate_stationary, classify_track
from .refinement import RefineConfig, refine_position, resolve_heading
from .scene_io import frame_name, read_sequence, record_from_box, write_labels
from .tracking import TrackerConfig, extract_frame_instances, track_sequence
from .types import Box3D, LabelRecord, Sequence


@dataclass
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    boxfit: BoxFitConfig = field(default_factory=BoxFitConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    canonical: CanonicalConfig = field(default_factory=CanonicalConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    canonical_output: bool = False
    workers: int = 1
    min_points: int = 10
    max_points_per_instance: int = 256
    fit_max_points: int = 1024

    def validate(self) -> None:
        self.tracker.validate()
        self.motion.validate()
        self.boxfit.validate()
        self.refine.validate()
        self.canonical.validate()
        self.eval.validate()
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")
        if self.fit_max_points < 1:
            raise ValueError("fit_max_points must be >= 1")


_SECTIONS = ("tracker", "motion", "boxfit", "refine", "canonical", "eval")
_SCALAR_FIELDS = (
    "canonical_output",
    "workers",
    "min_points",
    "max_points_per_instance",
    "fit_max_points",
)


def _config_entries(cfg: PipelineConfig):
    """Yield (dotted_key, owner_object, field_name) for every setting."""
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            if not f.init:
                continue
            yield f"{section}.{f.name}", sub, f.name
    for name in _SCALAR_FIELDS:
        yield f"pipeline.{name}", cfg, name


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, like, key: str, line_no: int):
    kind = type(like)
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if isinstance(like, (tuple, list)):
            parts = [p for p in (s.strip() for s in text.split(",")) if p]
            return tuple(float(p) for p in parts)
        return text
    except ValueError as e:
        raise ParseError(f"config key {key}: {e}", line=line_no) from e


def save_config(cfg: PipelineConfig, path) -> None:
    """Write every setting as a 'section.field = value' line."""
    lines = ["# auto-labelling pipeline configuration", ""]
    last_section = None
    for key, owner, name in _config_entries(cfg):
        section = key.split(".", 1)[0]
        if section != last_section and last_section is not None:
            lines.append("")
        last_section = section
        lines.append(f"{key} = {_format_value(getattr(owner, name))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path) -> PipelineConfig:
    """Read a flat key-value config; unknown keys are an error.

    Format: one 'section.field = value' per line, '#' lines are
    comments. Every key has a default, so a partial file is fine.
    """
    cfg = PipelineConfig()
    known = {key: (owner, name) for key, owner, name in _config_entries(cfg)}
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=line_no)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ParseError(f"unknown config key {key!r}", line=line_no)
        owner, name = known[key]
        setattr(owner, name, _parse_value(value, getattr(owner, name), key, line_no))
    # re-derive fields that depend on others
    cfg.boxfit.__post_init__()
    cfg.validate()
    return cfg


def _subsample_rows(a: np.ndarray, cap: int) -> np.ndarray:
    if a.shape[0] <= cap:
        return a
    idx = np.linspace(0, a.shape[0] - 1, cap).astype(np.int64)
    return a[idx]


def label_reference_frame(
    sequence: Sequence,
    reference_frame: int,
    cfg: PipelineConfig,
    frame_instances=None,
) -> tuple[list[LabelRecord], dict]:
    """Produce label records for one reference frame plus a stage
    timing dict whose values sum exactly to the frame's wall time."""
    ref = sequence.by_index()[reference_frame]
    width, height = ref.depth.width, ref.depth.height
    stages = {"tracking": 0.0, "classification": 0.0, "fitting": 0.0,
              "refinement": 0.0, "output": 0.0}

    mark = time.perf_counter()
    tracks = track_sequence(
        sequence, reference_frame, cfg.tracker,
        max_points_per_instance=cfg.max_points_per_instance,
        frame_instances=frame_instances,
    )
    now = time.perf_counter()
    stages["tracking"] += now - mark
    mark = now

    jobs = []
    for track in tracks:
        entry = track.entry_for_frame(reference_frame)
        if entry is None or len(entry.points) < cfg.min_points:
            continue
        motion = classify_track(track, cfg.motion)
        if motion == MOVING:
            try:
                traj_yaw = moving_yaw(track, reference_frame)
            except (TooShort, AutoboxError):
                traj_yaw = None
            fit_cloud = entry.points
        else:
            traj_yaw = None
            fit_cloud = aggregate_stationary(track)
        jobs.append((track, entry, traj_yaw, fit_cloud))
    now = time.perf_counter()
    stages["classification"] += now - mark
    mark = now

    records: list[tuple[int, LabelRecord]] = []
    for track, entry, traj_yaw, fit_cloud in jobs:
        try:
            xyz = _subsample_rows(fit_cloud.xyz, cfg.fit_max_points)
            if traj_yaw is None:
                fit = fit_bev_box(xyz, cfg.boxfit)
            else:
                fit = fit_bev_box_fixed_yaw(xyz, traj_yaw, cfg.boxfit)
            y_center, box_height = estimate_vertical(fit_cloud.xyz)
            viewing = math.atan2(fit.center[1], fit.center[0])
            dims = sanitize_dims(fit, box_height, viewing, cfg.boxfit)
            box = Box3D(
                center=np.array([fit.center[0], y_center, fit.center[1]]),
                dims=np.asarray(dims, dtype=np.float64),
                yaw=fit.yaw,
                score=entry.confidence,
                frame=reference_frame,
            )
            now = time.perf_counter()
            stages["fitting"] += now - mark
            mark = now

            box = refine_position(box, xyz, cfg.refine)
            box = resolve_heading(box, xyz, cfg.refine, trajectory_yaw=traj_yaw)
            now = time.perf_counter()
            stages["refinement"] += now - mark
            mark = now
        except (TooFewPoints, TooShort, EmptyCloud):
            now = time.perf_counter()
            stages["fitting"] += now - mark
            mark = now
            continue
        except AutoboxError as e:
            raise type(e)(
                f"{e} (while labelling frame {reference_frame},"
                f" track {track.track_id})"
            ) from e

        if cfg.canonical_output:
            omega = canonical_mod.frame_scale(ref.intrinsics, cfg.canonical)
            box = canonical_mod.to_canonical(box, omega)
        records.append(
            (track.track_id, record_from_box(box, ref.intrinsics, width, height))
        )
    records.sort(key=lambda kv: kv[0])
    out = [rec for _, rec in records]
    now = time.perf_counter()
    stages["output"] += now - mark
    return out, stages


_POOL_STATE: tuple | None = None


def _pool_worker(reference_frame: int):
    sequence, cfg, cache = _POOL_STATE
    records, stages = label_reference_frame(sequence, reference_frame, cfg, cache)
    return reference_frame, records, stages


def autolabel_sequence(
    sequence: Sequence,
    cfg: PipelineConfig,
    reference_frames=None,
) -> tuple[dict[int, list[LabelRecord]], dict]:
    """Label every reference frame of a sequence.

    Returns (labels keyed by frame index, timing report). Instances are
    lifted once per frame and shared across all reference-frame passes;
    the tracking passes themselves are independent per reference frame.
    """
    global _POOL_STATE
    cfg.validate()
    if reference_frames is None:
        reference_frames = sorted(f.index for f in sequence.frames)
    else:
        reference_frames = sorted(reference_frames)

    wall_start = time.perf_counter()
    cache = {
        f.index: extract_frame_instances(f, cfg.max_points_per_instance)
        for f in sequence.frames
    }
    extract_seconds = time.perf_counter() - wall_start

    use_pool = cfg.workers > 1 and hasattr(os, "fork") and len(reference_frames) > 1
    if use_pool:
        _POOL_STATE = (sequence, cfg, cache)
        try:
            ctx = multiprocessing.get_context("fork")
            chunk = max(1, len(reference_frames) // (4 * cfg.workers))
            with ctx.Pool(cfg.workers) as pool:
                results = pool.map(_pool_worker, reference_frames, chunksize=chunk)
        finally:
            _POOL_STATE = None
    else:
        results = [
            (r, *label_reference_frame(sequence, r, cfg, cache))
            for r in reference_frames
        ]

    labels: dict[int, list[LabelRecord]] = {}
    stage_totals: dict[str, float] = {"extraction": extract_seconds}
    per_frame = []
    for ref, records, stages in results:
        labels[ref] = records
        frame_wall = sum(stages.values())
        per_frame.append({"frame": ref, "wall_ms": frame_wall * 1e3,
                          "stages_ms": {k: v * 1e3 for k, v in stages.items()}})
        for k, v in stages.items():
            stage_totals[k] = stage_totals.get(k, 0.0) + v
    wall = time.perf_counter() - wall_start
    n = max(len(reference_frames), 1)
    report = {
        "frames": len(reference_frames),
        "wall_seconds": wall,
        "stage_seconds": stage_totals,
        "mean_ms_per_frame": sum(f["wall_ms"] for f in per_frame) / n,
        "per_frame": per_frame,
    }
    return labels, report


def format_timing(report: dict) -> str:
    lines = [
        f"frames labelled: {report['frames']}",
        f"wall time: {report['wall_seconds']:.3f} s",
        f"mean per frame: {report['mean_ms_per_frame']:.1f} ms",
        "stage totals:",
    ]
    for name, sec in report["stage_seconds"].items():
        lines.append(f"  {name:>14}: {sec:8.3f} s")
    return "\n".join(lines)


def autolabel_dir(sequence_dir, out_dir, cfg: PipelineConfig,
                  reference_frames=None) -> dict:
    """Read a sequence directory, label it, and write one label file
    per reference frame (empty when nothing was labelled) plus a
    timing.json report. Returns the timing report."""
    sequence = read_sequence(sequence_dir)
    labels, report = autolabel_sequence(sequence, cfg, reference_frames)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    for ref in sorted(labels):
        write_labels(labels[ref], out / f"{frame_name(ref)}.txt")
    report["stage_seconds"]["write"] = time.perf_counter() - t0
    slim = {k: v for k, v in report.items() if k != "per_frame"}
    (out / "timing.json").write_text(json.dumps(slim, indent=2) + "\n")
    return report
