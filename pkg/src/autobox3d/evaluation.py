"""Rotated-box IoU (BEV and 3D) and average precision.

BEV IoU intersects the two rectangle footprints exactly by sequential
half-plane clipping; 3D IoU multiplies the footprint intersection by
the vertical overlap (yaw is about the vertical axis, so the 3D
intersection is a prism). AP follows the 40-point interpolated recall
protocol: per frame, predictions match ground truth greedily in
descending score order, each ground-truth box at most once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import FrameSetMismatch
from .geometry import bev_corners
from .types import Box3D

_SLIVER_AREA = 1e-12


@dataclass
class EvalConfig:
    iou_threshold: float = 0.5
    mode: str = "bev"  # "bev" or "3d"
    recall_points: int = 40

    def validate(self) -> None:
        if not (0 < self.iou_threshold <= 1):
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.mode not in ("bev", "3d"):
            raise ValueError(f"mode must be 'bev' or '3d', got {self.mode!r}")
        if self.recall_points < 1:
            raise ValueError("recall_points must be >= 1")


def _clip_polygon(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of a convex polygon on the left of segment a->b."""
    if poly.shape[0] == 0:
        return poly
    d = b - a
    side = d[0] * (poly[:, 1] - a[1]) - d[1] * (poly[:, 0] - a[0])
    out = []
    n = poly.shape[0]
    for i in range(n):
        j = (i + 1) % n
        if side[i] >= 0:
            out.append(poly[i])
            if side[j] < 0:
                t = side[i] / (side[i] - side[j])
                out.append(poly[i] + t * (poly[j] - poly[i]))
        elif side[j] >= 0:
            t = side[i] / (side[i] - side[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    if not out:
        return np.empty((0, 2))
    return np.asarray(out)


def _polygon_area(poly: np.ndarray) -> float:
    if poly.shape[0] < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _footprint(box: Box3D) -> np.ndarray:
    return bev_corners(
        (float(box.center[0]), float(box.center[2])),
        (float(box.dims[0]), float(box.dims[1])),
        float(box.yaw),
    )


def intersection_area(a: Box3D, b: Box3D) -> float:
    """Exact overlap area of the two footprints in the x-z plane."""
    pa = _footprint(a)
    pb = _footprint(b)
    poly = pa
    n = pb.shape[0]
    for i in range(n):
        poly = _clip_polygon(poly, pb[i], pb[(i + 1) % n])
        if poly.shape[0] == 0:
            return 0.0
    area = _polygon_area(poly)
    return area if area > _SLIVER_AREA else 0.0


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    area_a = float(a.dims[0]) * float(a.dims[1])
    area_b = float(b.dims[0]) * float(b.dims[1])
    return inter / (area_a + area_b - inter)


def _vertical_overlap(a: Box3D, b: Box3D) -> float:
    a_lo = float(a.center[1]) - float(a.dims[2]) / 2
    a_hi = float(a.center[1]) + float(a.dims[2]) / 2
    b_lo = float(b.center[1]) - float(b.dims[2]) / 2
    b_hi = float(b.center[1]) + float(b.dims[2]) / 2
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def iou3d(a: Box3D, b: Box3D) -> float:
    inter = intersection_area(a, b) * _vertical_overlap(a, b)
    if inter == 0.0:
        return 0.0
    vol_a = float(np.prod(np.asarray(a.dims, dtype=np.float64)))
    vol_b = float(np.prod(np.asarray(b.dims, dtype=np.float64)))
    return inter / (vol_a + vol_b - inter)


def _box_iou(a: Box3D, b: Box3D, mode: str) -> float:
    return bev_iou(a, b) if mode == "bev" else iou3d(a, b)


def match_frame(predictions: list[Box3D], ground_truth: list[Box3D],
                cfg: EvalConfig) -> list[tuple[float, bool]]:
    """Greedy score-descending matching of one frame.

    Returns (score, is_true_positive) per prediction. A prediction is a
    true positive iff its best-IoU unmatched ground-truth box reaches
    the threshold; that box is then consumed.
    """
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
    taken = [False] * len(ground_truth)
    results = []
    for i in order:
        p = predictions[i]
        best_iou = 0.0
        best_j = -1
        for j, g in enumerate(ground_truth):
            if taken[j]:
                continue
            v = _box_iou(p, g, cfg.mode)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0 and best_iou >= cfg.iou_threshold:
            taken[best_j] = True
            results.append((p.score, True))
        else:
            results.append((p.score, False))
    return results


def average_precision(predictions: dict[int, list[Box3D]],
                      ground_truth: dict[int, list[Box3D]],
                      cfg: EvalConfig,
                      bucket_filter: str | None = None,
                      buckets: dict[int, list[str]] | None = None) -> float:
    """Interpolated AP over all frames.

    predictions/ground_truth map frame id -> boxes. bucket_filter with
    buckets (frame -> per-GT-box tag) restricts ground truth to one
    difficulty bucket; predictions are never filtered.
    """
    cfg.validate()
    scored: list[tuple[float, int, int, bool]] = []
    n_gt = 0
    for frame in sorted(ground_truth.keys()):
        gts = ground_truth[frame]
        if bucket_filter is not None and buckets is not None:
            tags = buckets.get(frame, ["" for _ in gts])
            gts = [g for g, t in zip(gts, tags) if t == bucket_filter]
        n_gt += len(gts)
        preds = predictions.get(frame, [])
        for k, (score, tp) in enumerate(match_frame(preds, gts, cfg)):
            scored.append((score, frame, k, tp))
    if n_gt == 0 or not scored:
        return 0.0
    # deterministic global ordering: score desc, then frame, then rank
    scored.sort(key=lambda r: (-r[0], r[1], r[2]))
    tp = np.cumsum([1 if r[3] else 0 for r in scored])
    fp = np.cumsum([0 if r[3] else 1 for r in scored])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    # interpolation: maximum precision at any recall >= r
    ap = 0.0
    for k in range(1, cfg.recall_points + 1):
        r = k / cfg.recall_points
        mask = recall >= r - 1e-12
        p = float(precision[mask].max()) if mask.any() else 0.0
        ap += p
    return ap / cfg.recall_points


def evaluate_label_dirs(pred_dir, gt_dir, thresholds=(0.5, 0.3)) -> dict:
    """AP report for two directories of label files with matching frame
    sets. Returns a dict ready for JSON serialization."""
    from pathlib import Path

    from .scene_io import read_labels

    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred_files = {p.stem: p for p in sorted(pred_dir.glob("*.txt"))}
    gt_files = {p.stem: p for p in sorted(gt_dir.glob("*.txt"))}
    if set(pred_files) != set(gt_files):
        only_pred = sorted(set(pred_files) - set(gt_files))[:3]
        only_gt = sorted(set(gt_files) - set(pred_files))[:3]
        raise FrameSetMismatch(
            f"label directories disagree: only-pred {only_pred}, only-gt {only_gt}"
        )
    predictions: dict[int, list[Box3D]] = {}
    ground_truth: dict[int, list[Box3D]] = {}
    for stem in sorted(gt_files):
        frame = int(stem)
        predictions[frame] = [r.to_box3d(frame) for r in read_labels(pred_files[stem])]
        ground_truth[frame] = [r.to_box3d(frame) for r in read_labels(gt_files[stem])]
    report = {
        "protocol": "interpolated AP, 40 recall points",
        "frames": len(gt_files),
        "ground_truth_boxes": sum(len(v) for v in ground_truth.values()),
        "predictions": sum(len(v) for v in predictions.values()),
        "metrics": {},
    }
    for thr in thresholds:
        for mode in ("bev", "3d"):
            cfg = EvalConfig(iou_threshold=thr, mode=mode)
            ap = average_precision(predictions, ground_truth, cfg)
            report["metrics"][f"ap_{mode}@{thr:g}"] = round(ap, 6)
    return report


def format_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
