"""Core data types shared across the pipeline.

Coordinate conventions used everywhere in this package:
  camera frame   x right, y down, z forward (metric, meters)
  world frame    same axis orientation as the camera of an identity pose
  yaw            rotation about the vertical (y) axis, measured from +x
                 toward +z; heading vector of yaw t is (cos t, 0, sin t)
  BEV            the x-z plane

Box3D.center is the geometric (mid-height) center of the box, not the
bottom-face center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")


@dataclass
class EgoPose:
    """Rigid transform from this frame's camera coordinates to world."""

    rotation: np.ndarray  # (3,3)
    translation: np.ndarray  # (3,)
    frame: int = 0

    def validate(self, tol=1e-9):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if abs(np.linalg.det(r) - 1.0) > tol or np.abs(r @ r.T - np.eye(3)).max() > tol:
            raise ValueError("rotation is not orthonormal with unit determinant")


@dataclass
class DepthMap:
    """Dense metric depth, one float per pixel; 0 marks an invalid pixel."""

    values: np.ndarray  # (height, width) float32

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def validate(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"depth values must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or (v < 0).any():
            raise ValueError("depth values must be finite and non-negative")


@dataclass
class InstanceMaskFrame:
    """Per-pixel instance ids (0 = background) plus per-id metadata.

    boxes2d maps id -> (u_min, v_min, u_max, v_max) in pixels, recomputed
    from the id raster so it always encloses every pixel of the id.
    """

    ids: np.ndarray  # (height, width) uint16
    confidences: dict[int, float] = field(default_factory=dict)
    boxes2d: dict[int, tuple[int, int, int, int]] = field(default_factory=dict)

    @property
    def height(self):
        return self.ids.shape[0]

    @property
    def width(self):
        return self.ids.shape[1]

    @classmethod
    def from_ids(cls, ids, confidences):
        ids = np.ascontiguousarray(ids, dtype=np.uint16)
        boxes = {}
        for inst in np.unique(ids):
            inst = int(inst)
            if inst == 0:
                continue
            vs, us = np.nonzero(ids == inst)
            boxes[inst] = (int(us.min()), int(vs.min()), int(us.max()), int(vs.max()))
        conf = {int(k): float(v) for k, v in confidences.items()}
        for inst in boxes:
            if inst not in conf:
                raise ValueError(f"instance {inst} present in raster but has no confidence entry")
        return cls(ids=ids, confidences=conf, boxes2d=boxes)

    def instance_ids(self):
        return sorted(self.boxes2d)


@dataclass
class PointCloud:
    """N metric 3-D points with optional per-point provenance.

    pixels carries the (u, v) pixel of origin for clouds lifted from a
    depth map; frames carries the source frame index for aggregated
    clouds. Either may be None when the provenance does not apply.
    """

    xyz: np.ndarray  # (N,3) float64
    pixels: np.ndarray | None = None  # (N,2) int32, (u,v)
    frames: np.ndarray | None = None  # (N,) int32

    def __len__(self):
        return self.xyz.shape[0]

    @classmethod
    def from_xyz(cls, xyz):
        return cls(xyz=np.atleast_2d(np.asarray(xyz, dtype=np.float64)))


@dataclass
class Box3D:
    """7-DOF oriented box: mid-height center, (length, width, height), yaw."""

    center: np.ndarray  # (3,) x,y,z meters
    dims: np.ndarray  # (3,) l,w,h meters
    yaw: float
    score: float = 1.0
    frame: int | str | None = None
    criterion: float | None = None  # fitting loss at the accepted pose, if any

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.dims = np.asarray(self.dims, dtype=np.float64)

    def validate(self):
        if not (self.dims > 0).all():
            raise ValueError(f"dims must be positive, got {self.dims}")
        if not (-np.pi <= self.yaw < np.pi):
            raise ValueError(f"yaw must lie in [-pi, pi), got {self.yaw}")


@dataclass
class LabelRecord:
    """One object label line (KITTI field order and units).

    y is the CENTER height of the box in camera coordinates, see module
    docstring; alpha is the observation angle yaw - atan2(z, x), wrapped.
    """

    cls: str
    truncation: float
    occlusion: int
    alpha: float
    box2d: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    yaw: float
    score: float = 1.0

    def validate(self):
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise ValueError(f"dims must be positive, got {(self.h, self.w, self.l)}")
        if not (-np.pi <= self.yaw < np.pi):
            raise ValueError(f"yaw must lie in [-pi, pi), got {self.yaw}")

    def to_box3d(self, frame=None):
        return Box3D(
            center=np.array([self.x, self.y, self.z]),
            dims=np.array([self.l, self.w, self.h]),
            yaw=self.yaw,
            score=self.score,
            frame=frame,
        )


@dataclass
class Frame:
    index: int
    depth: DepthMap
    mask: InstanceMaskFrame | None
    intrinsics: CameraIntrinsics
    pose: EgoPose


@dataclass
class Sequence:
    frames: list[Frame]

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def by_index(self):
        return {f.index: f for f in self.frames}
