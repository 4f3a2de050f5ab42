"""Canonical-focal-length label space.

Labels from cameras with different focal lengths are mutually
inconsistent for a monocular 3D model: the same image crop corresponds
to different metric depths. Rescaling each label's position by
omega = canonical_focal / frame_focal puts all labels at the depth they
would have under one shared focal length, while dims and yaw stay
metric. The transform is exactly invertible per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveFocal
from .types import Box3D, CameraIntrinsics


@dataclass
class CanonicalConfig:
    canonical_focal: float = 750.0

    def validate(self) -> None:
        if self.canonical_focal <= 0:
            raise NonPositiveFocal(f"canonical focal must be > 0, got {self.canonical_focal}")


def scale_factor(frame_focal: float, cfg: CanonicalConfig) -> float:
    """omega = canonical focal / frame focal."""
    cfg.validate()
    if frame_focal <= 0:
        raise NonPositiveFocal(f"frame focal must be > 0, got {frame_focal}")
    return cfg.canonical_focal / frame_focal


def frame_scale(intrinsics: CameraIntrinsics, cfg: CanonicalConfig) -> float:
    """omega for a full calibration: the geometric mean of fx and fy
    stands in for the single focal length."""
    return scale_factor(math.sqrt(intrinsics.fx * intrinsics.fy), cfg)


def _scaled(box: Box3D, factor: float) -> Box3D:
    return Box3D(
        center=np.asarray(box.center, dtype=np.float64) * factor,
        dims=box.dims,
        yaw=box.yaw,
        score=box.score,
        frame=box.frame,
        criterion=box.criterion,
    )


def to_canonical(box: Box3D, omega: float) -> Box3D:
    """Scale position by omega; dims and yaw pass through unchanged."""
    if omega <= 0:
        raise NonPositiveFocal(f"omega must be > 0, got {omega}")
    return _scaled(box, omega)


def from_canonical(box: Box3D, omega: float) -> Box3D:
    """Inverse of to_canonical for the same omega."""
    if omega <= 0:
        raise NonPositiveFocal(f"omega must be > 0, got {omega}")
    return _scaled(box, 1.0 / omega)


def effective_focal(base_focal: float, resize_ratio: float = 1.0,
                    augment_scale: float = 1.0) -> float:
    """Focal length as perceived after image-space resizing and scale
    augmentation; omega must be computed from this value when labels
    accompany transformed images."""
    if base_focal <= 0 or resize_ratio <= 0 or augment_scale <= 0:
        raise NonPositiveFocal("focal and scale factors must all be > 0")
    return base_focal * resize_ratio * augment_scale
