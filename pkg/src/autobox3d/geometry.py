"""Pinhole lifting/projection and rigid transforms between frames.

Pixel coordinates address pixel centers: integer (u, v) is the center of
the pixel in column u, row v, which makes lift/project exactly inverse.
"""

from __future__ import annotations

import numpy as np

from .errors import NonPositiveDepth, UnknownInstanceId
from .types import CameraIntrinsics, DepthMap, EgoPose, InstanceMaskFrame, PointCloud


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def heading_rotation(yaw: float) -> np.ndarray:
    """Rotation about the vertical (y) axis taking +x toward +z by yaw."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def heading_vector(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw), 0.0, np.sin(yaw)])


def lift_pixels(depth_values, k: CameraIntrinsics, vs, us) -> np.ndarray:
    """Back-project selected pixels of a depth raster to camera-frame xyz."""
    d = np.asarray(depth_values, dtype=np.float64)[vs, us]
    x = d * (np.asarray(us, dtype=np.float64) - k.cx) / k.fx
    y = d * (np.asarray(vs, dtype=np.float64) - k.cy) / k.fy
    return np.column_stack([x, y, d])


def lift_depth(depth: DepthMap, k: CameraIntrinsics) -> PointCloud:
    """Back-project every valid (depth > 0) pixel; carries pixel of origin."""
    vs, us = np.nonzero(depth.values > 0)
    xyz = lift_pixels(depth.values, k, vs, us)
    pixels = np.column_stack([us, vs]).astype(np.int32)
    return PointCloud(xyz=xyz, pixels=pixels)


def project(p, k: CameraIntrinsics):
    """Project one camera-frame point to pixel coordinates."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if z <= 0:
        raise NonPositiveDepth(f"cannot project point with z={z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def project_points(xyz, k: CameraIntrinsics):
    """Vector form of project; returns (uv array, validity mask).

    Rows with z <= 0 are marked invalid instead of raising; their uv is
    filled with NaN.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    z = xyz[:, 2]
    valid = z > 0
    uv = np.full((xyz.shape[0], 2), np.nan)
    uv[valid, 0] = k.fx * xyz[valid, 0] / z[valid] + k.cx
    uv[valid, 1] = k.fy * xyz[valid, 1] / z[valid] + k.cy
    return uv, valid


def transform_xyz(xyz, from_pose: EgoPose, to_pose: EgoPose) -> np.ndarray:
    """Re-express points given in from_pose coordinates in to_pose coordinates."""
    xyz = np.asarray(xyz, dtype=np.float64)
    world = xyz @ from_pose.rotation.T + from_pose.translation
    return (world - to_pose.translation) @ to_pose.rotation


def transform_points(cloud: PointCloud, from_pose: EgoPose, to_pose: EgoPose) -> PointCloud:
    return PointCloud(
        xyz=transform_xyz(cloud.xyz, from_pose, to_pose),
        pixels=cloud.pixels,
        frames=cloud.frames,
    )


def camera_to_world(xyz, pose: EgoPose) -> np.ndarray:
    return np.asarray(xyz, dtype=np.float64) @ pose.rotation.T + pose.translation


def world_to_camera(xyz, pose: EgoPose) -> np.ndarray:
    return (np.asarray(xyz, dtype=np.float64) - pose.translation) @ pose.rotation


def extract_instance_points(cloud: PointCloud, mask: InstanceMaskFrame, instance_id: int) -> PointCloud:
    """Select the lifted points whose origin pixel carries the given id."""
    if instance_id not in mask.boxes2d:
        raise UnknownInstanceId(f"instance id {instance_id} not present in mask")
    if cloud.pixels is None:
        raise ValueError("cloud has no pixel provenance; lift it with lift_depth")
    sel = mask.ids[cloud.pixels[:, 1], cloud.pixels[:, 0]] == instance_id
    return PointCloud(
        xyz=cloud.xyz[sel],
        pixels=cloud.pixels[sel],
        frames=None if cloud.frames is None else cloud.frames[sel],
    )


def box_corners(center, dims, yaw) -> np.ndarray:
    """The 8 corners of an oriented box, (8,3); y is the vertical axis."""
    l, w, h = float(dims[0]), float(dims[1]), float(dims[2])
    sx = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * (l / 2.0)
    sy = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * (h / 2.0)
    sz = np.array([1, -1, 1, -1, 1, -1, 1, -1]) * (w / 2.0)
    local = np.column_stack([sx, sy, sz])
    return local @ heading_rotation(yaw).T + np.asarray(center, dtype=np.float64)


def bev_corners(center_xz, dims_lw, yaw) -> np.ndarray:
    """Counter-clockwise footprint corners of an oriented box, (4,2) in (x,z)."""
    c, s = np.cos(yaw), np.sin(yaw)
    u = np.array([c, s])
    v = np.array([-s, c])
    cx = np.asarray(center_xz, dtype=np.float64)
    hl, hw = dims_lw[0] / 2.0, dims_lw[1] / 2.0
    return np.array([cx + hl * u + hw * v, cx - hl * u + hw * v, cx - hl * u - hw * v, cx + hl * u - hw * v])
