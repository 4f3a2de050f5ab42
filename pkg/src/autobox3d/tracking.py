"""Frame-to-frame instance association in world coordinates.

Tracks are built per reference frame over a window of surrounding
frames. Association is mutual nearest neighbor between predicted track
locations and detected instance locations, gated by a hard distance
threshold. There is no re-identification: a track that misses a frame
is finished, and later detections of the same object open a new track.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCloud
from .geometry import camera_to_world, lift_pixels, world_to_camera
from .types import PointCloud, Sequence


@dataclass
class TrackerConfig:
    frames_before: int = 50
    frames_after: int = 50
    gate_distance: float = 3.0

    def validate(self) -> None:
        if self.frames_before < 0 or self.frames_after < 0:
            raise ValueError("frame window extents must be >= 0")
        if self.gate_distance <= 0:
            raise ValueError("gate_distance must be positive")


@dataclass
class TrackEntry:
    frame: int
    location: np.ndarray
    points: PointCloud
    confidence: float = 1.0
    instance_id: int = 0


@dataclass
class InstanceTrack:
    track_id: int
    entries: list[TrackEntry] = field(default_factory=list)
    motion: str = "unset"

    def __len__(self) -> int:
        return len(self.entries)

    def frames(self) -> list[int]:
        return [e.frame for e in self.entries]

    def entry_for_frame(self, frame: int) -> TrackEntry | None:
        for e in self.entries:
            if e.frame == frame:
                return e
        return None

    def locations(self) -> np.ndarray:
        return np.stack([e.location for e in self.entries])


@dataclass
class FrameInstance:
    """One detected instance in one frame, with its world-space points."""

    instance_id: int
    confidence: float
    world_points: PointCloud

    @functools.cached_property
    def location(self) -> np.ndarray:
        return instance_location(self.world_points)


def instance_location(points: PointCloud) -> np.ndarray:
    """Coordinate-wise median of the cloud; robust to stray points."""
    if len(points) == 0:
        raise EmptyCloud("cannot locate an empty point cloud")
    return np.median(points.xyz, axis=0)


def predict_location(track: InstanceTrack, next_frame: int | None = None) -> np.ndarray:
    """Constant-velocity prediction: last location plus the mean of the
    last up-to-3 location deltas. A single-entry track predicts no
    motion."""
    locs = track.locations()
    if locs.shape[0] == 1:
        return locs[-1].copy()
    deltas = np.diff(locs[-4:], axis=0)
    return locs[-1] + deltas.mean(axis=0)


def associate_frame(
    tracks: list[InstanceTrack],
    detections: list[tuple[int, np.ndarray]],
    cfg: TrackerConfig,
    next_frame: int | None = None,
) -> dict[int, int]:
    """Match open tracks against one frame's detections.

    detections is a list of (detection_key, world_location). Returns a
    dict mapping detection list position -> track list position for
    every mutual-nearest-neighbor pair closer than the gate. Distance
    ties prefer the earlier (smaller-id) track, and symmetrically the
    earlier detection.
    """
    if not tracks or not detections:
        return {}
    pred = np.stack([predict_location(t, next_frame) for t in tracks])
    det = np.stack([loc for _, loc in detections])
    dist = np.linalg.norm(pred[:, None, :] - det[None, :, :], axis=2)
    # argmin returns the first index on ties; tracks are ordered by id
    best_track_for_det = dist.argmin(axis=0)
    best_det_for_track = dist.argmin(axis=1)
    matches: dict[int, int] = {}
    for d in range(det.shape[0]):
        t = int(best_track_for_det[d])
        if int(best_det_for_track[t]) != d:
            continue
        if dist[t, d] < cfg.gate_distance:
            matches[d] = t
    return matches


def extract_frame_instances(
    frame, max_points_per_instance: int | None = None
) -> list[FrameInstance]:
    """Lift a frame's depth to 3D and split it by mask instance, in
    world coordinates. Instances with no valid-depth pixels are
    dropped. Subsampling, when requested, is a deterministic stride."""
    if frame.mask is None:
        return []
    depth_values = frame.depth.values
    out = []
    for inst_id in frame.mask.instance_ids():
        u0, v0, u1, v1 = frame.mask.boxes2d.get(
            inst_id, (0, 0, frame.mask.width - 1, frame.mask.height - 1)
        )
        vs, us = np.nonzero(frame.mask.ids[v0:v1 + 1, u0:u1 + 1] == inst_id)
        vs, us = vs + v0, us + u0
        valid = depth_values[vs, us] > 0
        vs, us = vs[valid], us[valid]
        if vs.size == 0:
            continue
        if max_points_per_instance is not None and vs.size > max_points_per_instance:
            stride_idx = np.linspace(0, vs.size - 1, max_points_per_instance).astype(np.int64)
            vs, us = vs[stride_idx], us[stride_idx]
        cam_xyz = lift_pixels(depth_values, frame.intrinsics, vs, us)
        world_xyz = camera_to_world(cam_xyz, frame.pose)
        pts = PointCloud(
            xyz=world_xyz,
            pixels=np.column_stack([us, vs]).astype(np.int32),
            frames=np.full(vs.size, frame.index, dtype=np.int32),
        )
        out.append(
            FrameInstance(
                instance_id=inst_id,
                confidence=frame.mask.confidences[inst_id],
                world_points=pts,
            )
        )
    return out


def track_sequence(
    sequence: Sequence,
    reference_frame: int,
    cfg: TrackerConfig,
    max_points_per_instance: int | None = None,
    frame_instances: dict[int, list[FrameInstance]] | None = None,
) -> list[InstanceTrack]:
    """Track instances over [reference-n, reference+m] (clipped to the
    sequence) and return all tracks with their point sets and locations
    expressed in the reference frame's camera coordinates.

    frame_instances may supply pre-extracted per-frame instances (in
    world coordinates) to avoid repeated lifting when labelling many
    reference frames of one sequence.
    """
    cfg.validate()
    by_index = sequence.by_index()
    indices = [f.index for f in sequence.frames]
    if reference_frame not in by_index:
        raise KeyError(f"reference frame {reference_frame} not in sequence")
    lo = reference_frame - cfg.frames_before
    hi = reference_frame + cfg.frames_after
    window = [i for i in indices if lo <= i <= hi]

    tracks: list[InstanceTrack] = []
    open_tracks: list[InstanceTrack] = []
    next_id = 0
    for idx in window:
        if frame_instances is not None:
            instances = frame_instances.get(idx, [])
        else:
            instances = extract_frame_instances(by_index[idx], max_points_per_instance)
        detections = [(k, inst.location) for k, inst in enumerate(instances)]
        matches = associate_frame(open_tracks, detections, cfg, idx)
        still_open: list[InstanceTrack] = []
        for d, inst in enumerate(instances):
            entry = TrackEntry(
                frame=idx,
                location=detections[d][1],
                points=inst.world_points,
                confidence=inst.confidence,
                instance_id=inst.instance_id,
            )
            if d in matches:
                track = open_tracks[matches[d]]
                track.entries.append(entry)
                still_open.append(track)
            else:
                track = InstanceTrack(track_id=next_id, entries=[entry])
                next_id += 1
                tracks.append(track)
                still_open.append(track)
        # tracks with no detection this frame are finished (no re-id)
        still_open.sort(key=lambda t: t.track_id)
        open_tracks = still_open

    ref_pose = by_index[reference_frame].pose
    for track in tracks:
        for entry in track.entries:
            entry.points = PointCloud(
                xyz=world_to_camera(entry.points.xyz, ref_pose),
                pixels=entry.points.pixels,
                frames=entry.points.frames,
            )
            entry.location = world_to_camera(entry.location[None, :], ref_pose)[0]
    return tracks
