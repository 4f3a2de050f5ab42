"""Position refinement and heading disambiguation against a vehicle
template.

A generic two-box car silhouette is surface-sampled, scaled to the
fitted dimensions, and posed at the candidate box. The fitting loss is
the mean sigmoid-saturated distance from each observed point to its
nearest template point, minus the 0.5 floor, so coincident clouds score
zero and every outlier contributes strictly less than 0.5. Position is
refined by exhaustive search over an (x, z) shift grid around the
candidate center, and the heading ambiguity between yaw and yaw+pi is
settled by the same loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import EmptyCloud
from .geometry import heading_rotation, wrap_angle
from .types import Box3D


@dataclass
class RefineConfig:
    max_shift: float = 2.0
    grid_step: float = 0.1
    loss_alpha: float = 10.0
    max_points: int = 128
    with_cabin: bool = True

    def validate(self) -> None:
        if self.max_shift <= 0 or self.grid_step <= 0:
            raise ValueError("max_shift and grid_step must be positive")
        if self.loss_alpha <= 0:
            raise ValueError("loss_alpha must be positive")


@dataclass
class VehicleTemplate:
    """Surface point samples of a canonical car: length along +x,
    width along +z, ground plane at y=0, roof at y=-height; extents
    exactly equal to dims."""

    points: np.ndarray
    dims: tuple[float, float, float]

    def __len__(self) -> int:
        return self.points.shape[0]


def _box_surface_points(center, size, per_face: int) -> np.ndarray:
    """Deterministic grid sampling of the six faces of an axis-aligned
    box; per_face points per face, arranged sqrt-by-sqrt."""
    n = max(int(math.ceil(math.sqrt(per_face))), 2)
    u = np.linspace(-0.5, 0.5, n)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    uu = uu.ravel()
    vv = vv.ravel()
    half = np.asarray(size, dtype=np.float64) / 2.0
    c = np.asarray(center, dtype=np.float64)
    faces = []
    for axis in range(3):
        a1, a2 = [a for a in range(3) if a != axis]
        for side in (-1.0, 1.0):
            pts = np.empty((uu.size, 3))
            pts[:, axis] = c[axis] + side * half[axis]
            pts[:, a1] = c[a1] + uu * size[a1]
            pts[:, a2] = c[a2] + vv * size[a2]
            faces.append(pts)
    return np.concatenate(faces, axis=0)


@lru_cache(maxsize=64)
def _template_cached(dims: tuple[float, float, float], with_cabin: bool,
                     min_points: int) -> VehicleTemplate:
    # canonical body: unit box footprint, body 0.6 of height, cabin box
    # 0.55 x 0.9 footprint and the top 0.4 of height, shifted 0.05
    # rearward; sampled then rescaled so extents match dims exactly
    per_face = max(int(math.ceil(min_points / (12 if with_cabin else 6))), 16)
    body = _box_surface_points((0.0, -0.3, 0.0), (1.0, 0.6, 1.0), per_face)
    parts = [body]
    if with_cabin:
        cabin = _box_surface_points((-0.05, -0.8, 0.0), (0.55, 0.4, 0.9), per_face)
        parts.append(cabin)
    pts = np.concatenate(parts, axis=0)
    # normalize exact extents to [-0.5,0.5] x [-1,0] x [-0.5,0.5]
    mins = pts.min(axis=0)
    maxs = pts.max(axis=0)
    span = np.where(maxs - mins > 0, maxs - mins, 1.0)
    pts = (pts - mins) / span
    pts[:, 0] -= 0.5
    pts[:, 1] -= 1.0
    pts[:, 2] -= 0.5
    scaled = pts * np.asarray(dims, dtype=np.float64)[None, :]
    return VehicleTemplate(points=np.ascontiguousarray(scaled), dims=dims)


def make_template(dims, with_cabin: bool = True, min_points: int = 2000) -> VehicleTemplate:
    """Two-box car silhouette surface-sampled to at least min_points,
    with axis extents exactly (l, h, w) mapped to (x, y, z)."""
    l, w, h = (float(d) for d in dims)
    if l <= 0 or w <= 0 or h <= 0:
        raise ValueError(f"template dims must be positive, got {dims}")
    return _template_cached((l, h, w), bool(with_cabin), int(min_points))


@lru_cache(maxsize=64)
def _template_search_cached(dims: tuple[float, float, float], with_cabin: bool,
                            alpha: float):
    tmpl = _template_cached(dims, with_cabin, 2000)
    index = kernels.build_template_index(tmpl.points)
    field = kernels.build_bound_field(tmpl.points, alpha)
    return tmpl, index, field


def _observed_in_template_frame(observed_xyz, box: Box3D) -> np.ndarray:
    """Map observed points into the template's canonical frame for a
    box posed at (center, yaw): undo translation (x, z), undo yaw, and
    shift y so the box's ground contact sits at y=0."""
    rot = heading_rotation(box.yaw)
    ground_y = float(box.center[1]) + float(box.dims[2]) / 2.0
    shifted = observed_xyz - np.array([box.center[0], ground_y, box.center[2]])
    return shifted @ rot  # rows times R == R^T applied to columns


def template_fitting_loss(observed, template: VehicleTemplate,
                          pose: tuple[float, float, float], alpha: float) -> float:
    """Loss of the template posed at (x, z, yaw) against the observed
    cloud, with the template ground plane set to the observed 95th
    percentile of y. Mean sigmoid(alpha*nn_distance) - 0.5, in [0, 0.5)."""
    xyz = observed.xyz if hasattr(observed, "xyz") else np.asarray(observed, dtype=np.float64)
    if xyz.shape[0] == 0:
        raise EmptyCloud("template loss of an empty cloud")
    x, z, yaw = pose
    ground_y = float(np.percentile(xyz[:, 1], 95))
    rot = heading_rotation(yaw)
    local = (xyz - np.array([x, ground_y, z])) @ rot
    index = kernels.build_template_index(template.points)
    cap = kernels.saturation_cap(alpha)
    d = index.nn_distances(np.ascontiguousarray(local), cap)
    return float(np.mean(1.0 / (1.0 + np.exp(-alpha * d))) - 0.5)


def _subsample(xyz: np.ndarray, cap: int | None) -> np.ndarray:
    if cap is None or xyz.shape[0] <= cap:
        return xyz
    idx = np.linspace(0, xyz.shape[0] - 1, cap).astype(np.int64)
    return xyz[idx]


def refine_position(box: Box3D, observed, cfg: RefineConfig) -> Box3D:
    """Exhaustive shift search around the box center in its own yaw
    frame: steps of grid_step out to +-max_shift along the box axes,
    yaw and dims fixed. Ties keep the smallest x offset, then z.

    Shifting the box by +delta is evaluated as shifting the observed
    points by -delta in the template frame, which is the same loss.
    """
    cfg.validate()
    xyz = observed.xyz if hasattr(observed, "xyz") else np.asarray(observed, dtype=np.float64)
    if xyz.shape[0] == 0:
        raise EmptyCloud("cannot refine against an empty cloud")
    xyz = _subsample(np.asarray(xyz, dtype=np.float64), cfg.max_points)

    dims_key = (float(box.dims[0]), float(box.dims[2]), float(box.dims[1]))
    _, index, field = _template_search_cached(dims_key, cfg.with_cabin, cfg.loss_alpha)

    local = np.ascontiguousarray(_observed_in_template_frame(xyz, box))
    n_steps = int(round(cfg.max_shift / cfg.grid_step))
    steps = np.arange(-n_steps, n_steps + 1) * cfg.grid_step
    # a +dx shift of the box along its length axis moves observed
    # points by -dx along template x; same for width. Query offsets are
    # therefore the step values themselves in template coordinates.
    cap = kernels.saturation_cap(cfg.loss_alpha)
    g, loss = kernels.template_argmin(
        index, local, steps, steps, (1.0, 0.0), (0.0, 1.0),
        cfg.loss_alpha, cap, field,
    )
    i, j = divmod(int(g), steps.shape[0])
    du, dv = float(steps[i]), float(steps[j])
    # map the template-frame shift back to camera coordinates
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = c * du - s * dv
    dz = s * du + c * dv
    center = np.array([box.center[0] + dx, box.center[1], box.center[2] + dz])
    return Box3D(
        center=center,
        dims=box.dims,
        yaw=box.yaw,
        score=box.score,
        frame=box.frame,
        criterion=float(loss),
    )


def resolve_heading(box: Box3D, observed, cfg: RefineConfig,
                    trajectory_yaw: float | None = None) -> Box3D:
    """Choose between yaw and yaw+pi by template loss; exact ties keep
    the incoming yaw. When a trajectory yaw is supplied (moving
    objects) and the loss choice contradicts it by more than a quarter
    turn, the trajectory direction wins."""
    cfg.validate()
    xyz = observed.xyz if hasattr(observed, "xyz") else np.asarray(observed, dtype=np.float64)
    if xyz.shape[0] == 0:
        raise EmptyCloud("cannot resolve heading against an empty cloud")
    xyz = _subsample(np.asarray(xyz, dtype=np.float64), cfg.max_points)

    dims_key = (float(box.dims[0]), float(box.dims[2]), float(box.dims[1]))
    _, index, _ = _template_search_cached(dims_key, cfg.with_cabin, cfg.loss_alpha)
    cap = kernels.saturation_cap(cfg.loss_alpha)

    losses = []
    for yaw in (box.yaw, box.yaw + math.pi):
        trial = Box3D(center=box.center, dims=box.dims, yaw=wrap_angle(yaw),
                      score=box.score, frame=box.frame)
        local = np.ascontiguousarray(_observed_in_template_frame(xyz, trial))
        d = index.nn_distances(local, cap)
        losses.append(float(np.mean(1.0 / (1.0 + np.exp(-cfg.loss_alpha * d))) - 0.5))
    yaw = box.yaw if losses[0] <= losses[1] + 1e-12 else box.yaw + math.pi
    yaw = wrap_angle(yaw)
    if trajectory_yaw is not None and abs(wrap_angle(yaw - trajectory_yaw)) > math.pi / 2:
        # the trajectory direction is physically authoritative for a
        # moving object; flip to the other hypothesis on the same axis
        yaw = wrap_angle(yaw + math.pi)
    return Box3D(
        center=box.center,
        dims=box.dims,
        yaw=yaw,
        score=box.score,
        frame=box.frame,
        criterion=float(min(losses)),
    )
