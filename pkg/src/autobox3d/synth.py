"""Synthetic scene oracle: sequences with exactly known ground truth.

Scenes contain box-silhouette cars (the same two-box shape the
refinement template uses), optional occluder boxes, a flat ground
plane, and an ego camera following a waypoint polyline at fixed speed.
Depth and instance masks are produced by analytic per-pixel ray
casting, so every instance pixel's true depth is the exact ray-box hit
distance. Depth noise is generated by a counter-based per-pixel hash of
(seed, frame, pixel, draw), making output independent of evaluation
order or thread count.

World frame: y points down, ground plane at y = 0, camera at
y = -camera_height. Frame rate is fixed at 10 Hz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, IoFailure
from .geometry import wrap_angle
from .scene_io import (
    frame_name,
    record_from_box,
    write_depth,
    write_intrinsics,
    write_labels,
    write_mask,
    write_pose,
)
from .types import (
    Box3D,
    CameraIntrinsics,
    DepthMap,
    EgoPose,
    Frame,
    InstanceMaskFrame,
    Sequence,
)

FRAME_RATE_HZ = 10.0
FRAME_DT = 1.0 / FRAME_RATE_HZ

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass
class OccluderSpec:
    position: tuple[float, float]
    yaw: float
    dims: tuple[float, float, float]  # (l, w, h), ground-seated


@dataclass
class CarSpec:
    dims: tuple[float, float, float]  # (l, w, h)
    position: tuple[float, float]  # world (x, z) at frame 0
    yaw: float  # world heading at frame 0
    speed: float = 0.0  # m/s along current heading
    yaw_rate: float = 0.0  # rad/frame
    confidence: float = 1.0
    occluder: OccluderSpec | None = None


@dataclass
class SceneSpec:
    seed: int = 0
    frames: int = 11
    width: int = 1242
    height: int = 375
    intrinsics: CameraIntrinsics | None = None
    camera_height: float = 1.55
    ego_waypoints: tuple = ((0.0, 0.0), (0.0, 100.0))
    ego_speed: float = 1.0
    cars: tuple = ()
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        if self.intrinsics is None:
            self.intrinsics = CameraIntrinsics(
                fx=750.0, fy=750.0, cx=self.width / 2.0, cy=self.height / 2.0
            )

    def validate(self) -> None:
        if self.frames < 1:
            raise InvalidSpec("frames", f"must be >= 1, got {self.frames}")
        if self.width < 1 or self.height < 1:
            raise InvalidSpec("image", f"bad size {self.width}x{self.height}")
        if self.intrinsics.fx <= 0 or self.intrinsics.fy <= 0:
            raise InvalidSpec("intrinsics", "focal lengths must be positive")
        if self.camera_height <= 0:
            raise InvalidSpec("camera_height", f"must be > 0, got {self.camera_height}")
        if len(self.ego_waypoints) < 2:
            raise InvalidSpec("ego.waypoints", "need at least 2 waypoints")
        if self.ego_speed < 0:
            raise InvalidSpec("ego.speed", f"must be >= 0, got {self.ego_speed}")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise.sigma", f"must be >= 0, got {self.noise_sigma}")
        if not (0 <= self.outlier_fraction <= 1):
            raise InvalidSpec(
                "noise.outlier_fraction", f"must be in [0,1], got {self.outlier_fraction}"
            )
        for k, car in enumerate(self.cars):
            if any(d <= 0 for d in car.dims):
                raise InvalidSpec(f"cars[{k}].dims", f"must be positive, got {car.dims}")
            if not (0 < car.confidence <= 1):
                raise InvalidSpec(
                    f"cars[{k}].confidence", f"must be in (0,1], got {car.confidence}"
                )
            if car.speed < 0:
                raise InvalidSpec(f"cars[{k}].speed", f"must be >= 0, got {car.speed}")
            if car.occluder is not None and any(d <= 0 for d in car.occluder.dims):
                raise InvalidSpec(
                    f"cars[{k}].occluder.dims", f"must be positive, got {car.occluder.dims}"
                )


def load_scene_spec(path) -> SceneSpec:
    """Parse a JSON scene spec file; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise IoFailure(f"cannot read scene spec {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidSpec("<root>", f"not valid JSON: {e}") from e
    return scene_spec_from_dict(raw)


def _require_number(obj, key, field_name):
    v = obj.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise InvalidSpec(field_name, f"expected a number, got {v!r}")
    return float(v)


def scene_spec_from_dict(raw: dict) -> SceneSpec:
    known = {"seed", "frames", "image", "intrinsics", "camera_height", "ego", "cars", "noise"}
    unknown = set(raw) - known
    if unknown:
        raise InvalidSpec(sorted(unknown)[0], "unknown field")
    image = raw.get("image", {})
    width = int(image.get("width", 1242))
    height = int(image.get("height", 375))
    intr = None
    if "intrinsics" in raw:
        d = raw["intrinsics"]
        intr = CameraIntrinsics(
            fx=_require_number(d, "fx", "intrinsics.fx"),
            fy=_require_number(d, "fy", "intrinsics.fy"),
            cx=_require_number(d, "cx", "intrinsics.cx"),
            cy=_require_number(d, "cy", "intrinsics.cy"),
        )
    ego = raw.get("ego", {})
    waypoints = tuple(tuple(float(c) for c in w) for w in ego.get("waypoints", ((0, 0), (0, 100))))
    for w in waypoints:
        if len(w) != 2:
            raise InvalidSpec("ego.waypoints", f"waypoints are (x,z) pairs, got {w}")
    cars = []
    for k, c in enumerate(raw.get("cars", ())):
        occ = None
        if "occluder" in c and c["occluder"] is not None:
            o = c["occluder"]
            occ = OccluderSpec(
                position=tuple(float(v) for v in o.get("position", (0, 0))),
                yaw=float(o.get("yaw", 0.0)),
                dims=tuple(float(v) for v in o.get("dims", (1, 1, 1))),
            )
        dims = c.get("dims", (3.89, 1.62, 1.53))
        if len(dims) != 3:
            raise InvalidSpec(f"cars[{k}].dims", f"expected (l,w,h), got {dims}")
        pos = c.get("position", (0, 10))
        if len(pos) != 2:
            raise InvalidSpec(f"cars[{k}].position", f"expected (x,z), got {pos}")
        cars.append(
            CarSpec(
                dims=tuple(float(v) for v in dims),
                position=tuple(float(v) for v in pos),
                yaw=float(c.get("yaw", 0.0)),
                speed=float(c.get("speed", 0.0)),
                yaw_rate=float(c.get("yaw_rate", 0.0)),
                confidence=float(c.get("confidence", 1.0)),
                occluder=occ,
            )
        )
    noise = raw.get("noise", {})
    spec = SceneSpec(
        seed=int(raw.get("seed", 0)),
        frames=int(raw.get("frames", 11)),
        width=width,
        height=height,
        intrinsics=intr,
        camera_height=float(raw.get("camera_height", 1.55)),
        ego_waypoints=waypoints,
        ego_speed=float(ego.get("speed", 1.0)),
        cars=tuple(cars),
        noise_sigma=float(noise.get("sigma", 0.0)),
        outlier_fraction=float(noise.get("outlier_fraction", 0.0)),
    )
    spec.validate()
    return spec


@dataclass
class SceneBundle:
    spec: SceneSpec
    intrinsics: CameraIntrinsics
    poses: list[EgoPose]
    depths: list[DepthMap]
    masks: list[InstanceMaskFrame]
    gt_boxes: dict[int, list[Box3D]] = field(default_factory=dict)

    def to_sequence(self) -> Sequence:
        frames = [
            Frame(
                index=i,
                depth=self.depths[i],
                mask=self.masks[i],
                intrinsics=self.intrinsics,
                pose=self.poses[i],
            )
            for i in range(len(self.depths))
        ]
        return Sequence(frames=frames)


# --- deterministic counter-based noise -------------------------------

def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x + _GOLDEN) & _M64
    z = x
    z ^= z >> np.uint64(30)
    z = (z * _MIX1) & _M64
    z ^= z >> np.uint64(27)
    z = (z * _MIX2) & _M64
    z ^= z >> np.uint64(31)
    return z


def _hash_uniform(seed: int, frame: int, pixel: np.ndarray, draw: int) -> np.ndarray:
    """U(0,1) doubles, one per pixel index, pure in all arguments."""
    h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.zeros(1, np.uint64))[0]
    h = _mix64(np.asarray(h ^ np.uint64(frame), dtype=np.uint64).reshape(1))[0]
    draw_salt = np.uint64((draw * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    px = pixel.astype(np.uint64) ^ draw_salt
    vals = _mix64(px + h)
    # 53-bit mantissa, offset by half an ulp so 0 is never produced
    return (vals >> np.uint64(11)).astype(np.float64) * (2.0 ** -53) + 2.0 ** -54


def _hash_normal(seed: int, frame: int, pixel: np.ndarray, draw: int) -> np.ndarray:
    u1 = _hash_uniform(seed, frame, pixel, draw)
    u2 = _hash_uniform(seed, frame, pixel, draw + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


# --- kinematics -------------------------------------------------------

def ego_states(spec: SceneSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-frame (position_xz, heading_unit_xz) along the waypoint
    polyline at ego_speed; past the last waypoint the ego continues
    straight."""
    wp = np.asarray(spec.ego_waypoints, dtype=np.float64)
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 1e-12
    seg = seg[keep]
    seg_len = seg_len[keep]
    if seg.shape[0] == 0:
        raise InvalidSpec("ego.waypoints", "waypoints are all coincident")
    seg_dir = seg / seg_len[:, None]
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    starts = wp[:-1][keep]
    states = []
    for k in range(spec.frames):
        s = spec.ego_speed * FRAME_DT * k
        if s >= cum[-1]:
            pos = starts[-1] + seg_dir[-1] * (s - cum[-2])
            head = seg_dir[-1]
        else:
            i = int(np.searchsorted(cum, s, side="right") - 1)
            i = min(max(i, 0), seg.shape[0] - 1)
            pos = starts[i] + seg_dir[i] * (s - cum[i])
            head = seg_dir[i]
        states.append((pos, head))
    return states


def car_states(car: CarSpec, frames: int) -> list[tuple[np.ndarray, float]]:
    """Per-frame (position_xz, yaw) by stepwise integration at 10 Hz."""
    pos = np.asarray(car.position, dtype=np.float64).copy()
    yaw = float(car.yaw)
    states = [(pos.copy(), yaw)]
    for _ in range(frames - 1):
        pos = pos + car.speed * FRAME_DT * np.array([math.cos(yaw), math.sin(yaw)])
        yaw = yaw + car.yaw_rate
        states.append((pos.copy(), yaw))
    return states


def _ego_pose(pos_xz: np.ndarray, head_xz: np.ndarray, camera_height: float) -> EgoPose:
    hx, hz = float(head_xz[0]), float(head_xz[1])
    # camera +z looks along the heading, +x right, +y down
    rot = np.array([[hz, 0.0, hx], [0.0, 1.0, 0.0], [-hx, 0.0, hz]])
    t = np.array([pos_xz[0], -camera_height, pos_xz[1]])
    return EgoPose(rotation=rot, translation=t)


# --- rendering --------------------------------------------------------

def _instance_pixels(ids: np.ndarray, windows) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero pixels of the id raster, scanning only the union of the
    car render windows (identical result to a full scan)."""
    if not windows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    u0 = min(w[0] for w in windows)
    u1 = max(w[1] for w in windows)
    v0 = min(w[2] for w in windows)
    v1 = max(w[3] for w in windows)
    vs, us = np.nonzero(ids[v0:v1 + 1, u0:u1 + 1])
    return vs + v0, us + u0

def _car_boxes(dims) -> list[tuple[np.ndarray, np.ndarray]]:
    """AABBs of the two-box car silhouette in its local frame (x along
    heading, y up-negative with ground contact at 0, z across)."""
    l, w, h = dims
    body = (np.array([-l / 2, -0.6 * h, -w / 2]), np.array([l / 2, 0.0, w / 2]))
    cabin = (
        np.array([-0.325 * l, -h, -0.45 * w]),
        np.array([0.225 * l, -0.6 * h, 0.45 * w]),
    )
    return [body, cabin]


def _occluder_boxes(dims) -> list[tuple[np.ndarray, np.ndarray]]:
    l, w, h = dims
    return [(np.array([-l / 2, -h, -w / 2]), np.array([l / 2, 0.0, w / 2]))]


def _yaw_rot(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


# corner index = ix*4 + iy*2 + iz; edges join indices differing in one bit
_BOX_EDGES = tuple(
    (a, a | bit) for a in range(8) for bit in (1, 2, 4) if not a & bit
)


def _hull_corners(boxes) -> np.ndarray:
    """Corners of the overall local-frame AABB enclosing all boxes."""
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    return np.array(
        [
            [(lo, hi)[ix][0], (lo, hi)[iy][1], (lo, hi)[iz][2]]
            for ix in (0, 1)
            for iy in (0, 1)
            for iz in (0, 1)
        ]
    ), lo, hi


def _pixel_window(boxes, rot, pos_xz, pose: EgoPose, intr: CameraIntrinsics,
                  width: int, height: int, znear: float = 0.05):
    """Image-space bounding window of the posed boxes, with box edges
    clipped against the near plane so a partially-behind object still
    gets a tight window. None when nothing projects into the image."""
    corners_local, lo, hi = _hull_corners(boxes)
    t_world = np.array([pos_xz[0], 0.0, pos_xz[1]])
    origin_local = rot.T @ (pose.translation - t_world)
    if np.all(origin_local >= lo) and np.all(origin_local <= hi):
        return 0, width - 1, 0, height - 1  # camera inside the hull
    cam = (corners_local @ rot.T + t_world - pose.translation) @ pose.rotation
    z = cam[:, 2]
    if np.all(z <= znear):
        return None
    us: list[float] = []
    vs: list[float] = []
    for a, b in _BOX_EDGES:
        pa, pb = cam[a], cam[b]
        if pa[2] <= znear and pb[2] <= znear:
            continue
        if pa[2] < znear or pb[2] < znear:
            t = (znear - pa[2]) / (pb[2] - pa[2])
            pc = pa + t * (pb - pa)
            if pa[2] < znear:
                pa = pc
            else:
                pb = pc
        for p in (pa, pb):
            us.append(intr.fx * p[0] / p[2] + intr.cx)
            vs.append(intr.fy * p[1] / p[2] + intr.cy)
    if not us:
        return None
    u0 = max(int(math.floor(min(us))) - 1, 0)
    u1 = min(int(math.ceil(max(us))) + 1, width - 1)
    v0 = max(int(math.floor(min(vs))) - 1, 0)
    v1 = min(int(math.ceil(max(vs))) + 1, height - 1)
    if u0 > u1 or v0 > v1:
        return None
    return u0, u1, v0, v1


def _raycast_boxes(boxes, rot, pos_xz, pose, intr, window):
    """Hit distances (camera depth Z) for every pixel in the window
    against the union of local-frame AABBs posed at (rot, pos_xz).
    Returns (depth_array, (u0,v0)) with +inf for misses.

    The ray direction in box coordinates is affine in the pixel grid,
    so each component is built from two 1-D arrays instead of a dense
    (V,U,3) stack; the slab test then runs one axis at a time.
    """
    u0, u1, v0, v1 = window
    xs = (np.arange(u0, u1 + 1, dtype=np.float64) - intr.cx) / intr.fx
    ys = (np.arange(v0, v1 + 1, dtype=np.float64) - intr.cy) / intr.fy
    t_world = np.array([pos_xz[0], 0.0, pos_xz[1]])
    origin_local = rot.T @ (pose.translation - t_world)
    m = rot.T @ pose.rotation  # box <- camera direction map
    shape = (ys.size, xs.size)
    best = np.full(shape, np.inf)
    d_axis = []
    for k in range(3):
        d = m[k, 1] * ys[:, None] + (m[k, 0] * xs + m[k, 2])[None, :]
        d[np.abs(d) < 1e-300] = 1e-300
        d_axis.append(d)
    inv = [1.0 / d for d in d_axis]
    for lo, hi in boxes:
        tmin = None
        tmax = None
        for k in range(3):
            t1 = (lo[k] - origin_local[k]) * inv[k]
            t2 = (hi[k] - origin_local[k]) * inv[k]
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
            if tmin is None:
                tmin, tmax = near, far
            else:
                np.maximum(tmin, near, out=tmin)
                np.minimum(tmax, far, out=tmax)
        hit = (tmax >= tmin) & (tmax > 0.05)
        t = np.where(tmin > 0.05, tmin, tmax)
        np.minimum(best, np.where(hit, t, np.inf), out=best)
    return best, (u0, v0)


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """Render all frames of a scene; deterministic for a given spec."""
    spec.validate()
    intr = spec.intrinsics
    W, H = spec.width, spec.height
    ego = ego_states(spec)
    cars = [car_states(c, spec.frames) for c in spec.cars]

    poses: list[EgoPose] = []
    depths: list[DepthMap] = []
    masks: list[InstanceMaskFrame] = []
    gt: dict[int, list[Box3D]] = {}

    vs_col = np.arange(H, dtype=np.float64)
    # ground plane: rows below the horizon see y=0 at a row-constant
    # depth (the ego never pitches or rolls)
    dy = (vs_col - intr.cy) / intr.fy
    with np.errstate(divide="ignore"):
        zg = np.where(dy > 1e-9, spec.camera_height / dy, np.inf)
    sky_rows = int(np.searchsorted(dy, 1e-9, side="right"))
    for f in range(spec.frames):
        pose = _ego_pose(ego[f][0], ego[f][1], spec.camera_height)
        poses.append(pose)

        ids = np.zeros((H, W), dtype=np.uint16)
        depth = np.repeat(zg[:, None], W, axis=1)

        windows = []
        for k, car in enumerate(spec.cars):
            pos_xz, yaw = cars[k][f]
            rot = _yaw_rot(yaw)
            boxes = _car_boxes(car.dims)
            window = _pixel_window(boxes, rot, pos_xz, pose, intr, W, H)
            if window is None:
                continue
            windows.append(window)
            t_hit, (wu0, wv0) = _raycast_boxes(boxes, rot, pos_xz, pose, intr, window)
            sub_d = depth[wv0:wv0 + t_hit.shape[0], wu0:wu0 + t_hit.shape[1]]
            sub_i = ids[wv0:wv0 + t_hit.shape[0], wu0:wu0 + t_hit.shape[1]]
            closer = t_hit < sub_d
            sub_d[closer] = t_hit[closer]
            sub_i[closer] = k + 1

        for k, car in enumerate(spec.cars):
            if car.occluder is None:
                continue
            occ = car.occluder
            rot = _yaw_rot(occ.yaw)
            boxes = _occluder_boxes(occ.dims)
            window = _pixel_window(boxes, rot, occ.position, pose, intr, W, H)
            if window is None:
                continue
            t_hit, (wu0, wv0) = _raycast_boxes(boxes, rot, occ.position, pose, intr, window)
            sub_d = depth[wv0:wv0 + t_hit.shape[0], wu0:wu0 + t_hit.shape[1]]
            sub_i = ids[wv0:wv0 + t_hit.shape[0], wu0:wu0 + t_hit.shape[1]]
            closer = t_hit < sub_d
            sub_d[closer] = t_hit[closer]
            sub_i[closer] = 0  # occluders are depth-only

        # unresolved sky pixels sit above the horizon rows only
        sky = depth[:sky_rows]
        sky[np.isinf(sky)] = 0.0

        inst_vs, inst_us = _instance_pixels(ids, windows)
        inst_vals = ids[inst_vs, inst_us]

        if inst_vs.size and (spec.noise_sigma > 0 or spec.outlier_fraction > 0):
            flat = inst_vs.astype(np.int64) * W + inst_us
            true_d = depth[inst_vs, inst_us]
            noisy = true_d
            if spec.noise_sigma > 0:
                noisy = true_d + spec.noise_sigma * _hash_normal(spec.seed, f, flat, 1)
            if spec.outlier_fraction > 0:
                u0 = _hash_uniform(spec.seed, f, flat, 0)
                pick = u0 < spec.outlier_fraction
                # conditioned on being picked, u0/fraction is again
                # uniform on (0,1), so one draw serves both decisions
                scale = 0.5 + u0 / spec.outlier_fraction
                noisy = np.where(pick, true_d * scale, noisy)
            depth[inst_vs, inst_us] = np.maximum(noisy, 0.05)

        boxes2d = {}
        for inst in np.unique(inst_vals):
            sel = inst_vals == inst
            boxes2d[int(inst)] = (
                int(inst_us[sel].min()), int(inst_vs[sel].min()),
                int(inst_us[sel].max()), int(inst_vs[sel].max()),
            )
        confidences = {}
        boxes_f = []
        for k, car in enumerate(spec.cars):
            if (k + 1) not in boxes2d:
                continue
            confidences[k + 1] = car.confidence
            pos_xz, yaw = cars[k][f]
            center_w = np.array([pos_xz[0], -car.dims[2] / 2.0, pos_xz[1]])
            center_c = pose.rotation.T @ (center_w - pose.translation)
            hvec = pose.rotation.T @ np.array([math.cos(yaw), 0.0, math.sin(yaw)])
            yaw_c = wrap_angle(math.atan2(hvec[2], hvec[0]))
            boxes_f.append(
                Box3D(
                    center=center_c,
                    dims=car.dims,
                    yaw=float(yaw_c),
                    score=car.confidence,
                    frame=f,
                )
            )
        gt[f] = boxes_f
        depths.append(DepthMap(values=depth))
        masks.append(
            InstanceMaskFrame(ids=ids, confidences=confidences, boxes2d=boxes2d)
        )

    return SceneBundle(
        spec=spec, intrinsics=intr, poses=poses, depths=depths, masks=masks, gt_boxes=gt
    )


def write_bundle(bundle: SceneBundle, directory) -> None:
    """Write a bundle in the sequence directory layout plus a
    labels_gt/ directory; read_sequence() reproduces the frames."""
    root = Path(directory)
    try:
        for sub in ("depth", "masks", "poses", "calib", "labels_gt"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        for f in range(len(bundle.depths)):
            name = frame_name(f)
            write_depth(bundle.depths[f], root / "depth" / f"{name}.sowd")
            write_mask(bundle.masks[f], root / "masks" / f"{name}.sowm")
            write_pose(bundle.poses[f], root / "poses" / f"{name}.txt")
            write_intrinsics(bundle.intrinsics, root / "calib" / f"{name}.txt")
            records = [
                record_from_box(b, bundle.intrinsics, bundle.spec.width, bundle.spec.height)
                for b in bundle.gt_boxes.get(f, [])
            ]
            write_labels(records, root / "labels_gt" / f"{name}.txt")
    except OSError as e:
        raise IoFailure(f"cannot write bundle to {root}: {e}") from e
