"""Readers and writers for all pipeline inputs and label outputs.

Directory layout of a sequence (frame index zero-padded to 6 digits):

    <seq>/depth/000000.sowd     binary depth raster
    <seq>/masks/000000.sowm     binary instance raster + confidence footer
    <seq>/poses/000000.txt      one line, 12 floats, row-major 3x4 [R|t]
    <seq>/calib/000000.txt      one line: fx fy cx cy

Depth file: 16-byte little-endian header (4-byte magic "SOWD",
uint32 width, uint32 height, 4 zero pad bytes) followed by width*height
float32 depths, row-major. Depth 0 marks an invalid pixel.

Mask file: same header with magic "SOWM", then width*height uint16
instance ids (0 = background), then an ASCII footer with one
"id confidence" line per instance.

A frame may have no mask file (zero detections); missing depth, pose or
calibration is an error.
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .errors import (
    DimensionMismatch,
    IoFailure,
    MalformedHeader,
    MissingFile,
    ParseError,
)
from .types import (
    CameraIntrinsics,
    DepthMap,
    EgoPose,
    Frame,
    InstanceMaskFrame,
    LabelRecord,
    Sequence,
)

DEPTH_MAGIC = b"SOWD"
MASK_MAGIC = b"SOWM"
_HEADER = struct.Struct("<4sII4x")

FRAME_DIGITS = 6


def frame_name(index: int) -> str:
    return f"{index:0{FRAME_DIGITS}d}"


def _read_header(raw: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(raw) < _HEADER.size:
        raise MalformedHeader(f"{path}: file shorter than the 16-byte header")
    tag, width, height = _HEADER.unpack_from(raw)
    if tag != magic:
        raise MalformedHeader(f"{path}: bad magic {tag!r}, expected {magic!r}")
    if width == 0 or height == 0:
        raise MalformedHeader(f"{path}: zero raster dimension {width}x{height}")
    return width, height


def write_depth(depth: DepthMap, path) -> None:
    values = np.ascontiguousarray(depth.values, dtype="<f4")
    try:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(DEPTH_MAGIC, depth.width, depth.height))
            f.write(values.tobytes())
    except OSError as e:
        raise IoFailure(f"writing {path}: {e}") from e


def read_depth(path) -> DepthMap:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError as e:
        raise MissingFile(str(path)) from e
    except OSError as e:
        raise IoFailure(f"reading {path}: {e}") from e
    width, height = _read_header(raw, DEPTH_MAGIC, path)
    need = _HEADER.size + 4 * width * height
    if len(raw) != need:
        raise MalformedHeader(f"{path}: expected {need} bytes for {width}x{height}, got {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", count=width * height, offset=_HEADER.size)
    return DepthMap(values=values.reshape(height, width).copy())


def write_mask(mask: InstanceMaskFrame, path) -> None:
    ids = np.ascontiguousarray(mask.ids, dtype="<u2")
    try:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MASK_MAGIC, mask.width, mask.height))
            f.write(ids.tobytes())
            for inst in sorted(mask.confidences):
                f.write(f"{inst} {mask.confidences[inst]:.6f}\n".encode("ascii"))
    except OSError as e:
        raise IoFailure(f"writing {path}: {e}") from e


def read_mask(path) -> InstanceMaskFrame:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError as e:
        raise MissingFile(str(path)) from e
    except OSError as e:
        raise IoFailure(f"reading {path}: {e}") from e
    width, height = _read_header(raw, MASK_MAGIC, path)
    body_end = _HEADER.size + 2 * width * height
    if len(raw) < body_end:
        raise MalformedHeader(f"{path}: raster truncated ({len(raw)} < {body_end} bytes)")
    ids = np.frombuffer(raw, dtype="<u2", count=width * height, offset=_HEADER.size)
    ids = ids.reshape(height, width).copy()
    confidences = {}
    footer = raw[body_end:].decode("ascii", errors="replace")
    for ln, line in enumerate(footer.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}: footer expects 'id confidence', got {line!r}", line=ln)
        try:
            confidences[int(parts[0])] = float(parts[1])
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=ln) from e
    return InstanceMaskFrame.from_ids(ids, confidences)


def write_pose(pose: EgoPose, path) -> None:
    rt = np.hstack([pose.rotation, np.asarray(pose.translation, dtype=np.float64).reshape(3, 1)])
    try:
        with open(path, "w") as f:
            f.write(" ".join(f"{v:.17g}" for v in rt.reshape(-1)) + "\n")
    except OSError as e:
        raise IoFailure(f"writing {path}: {e}") from e


def read_pose(path, frame: int = 0) -> EgoPose:
    try:
        with open(path) as f:
            text = f.read()
    except FileNotFoundError as e:
        raise MissingFile(str(path)) from e
    parts = text.split()
    if len(parts) != 12:
        raise MalformedHeader(f"{path}: pose needs 12 floats, got {len(parts)}")
    try:
        vals = np.array([float(p) for p in parts]).reshape(3, 4)
    except ValueError as e:
        raise MalformedHeader(f"{path}: {e}") from e
    pose = EgoPose(rotation=vals[:, :3], translation=vals[:, 3], frame=frame)
    try:
        pose.validate()
    except ValueError as e:
        raise MalformedHeader(f"{path}: {e}") from e
    return pose


def write_intrinsics(k: CameraIntrinsics, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(f"{k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g}\n")
    except OSError as e:
        raise IoFailure(f"writing {path}: {e}") from e


def read_intrinsics(path) -> CameraIntrinsics:
    try:
        with open(path) as f:
            parts = f.read().split()
    except FileNotFoundError as e:
        raise MissingFile(str(path)) from e
    if len(parts) != 4:
        raise MalformedHeader(f"{path}: calibration needs 4 floats, got {len(parts)}")
    try:
        fx, fy, cx, cy = (float(p) for p in parts)
    except ValueError as e:
        raise MalformedHeader(f"{path}: {e}") from e
    if fx <= 0 or fy <= 0:
        raise MalformedHeader(f"{path}: non-positive focal length")
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)


def read_sequence(directory) -> Sequence:
    """Load a full sequence directory; frames sorted by index."""
    depth_dir = os.path.join(directory, "depth")
    if not os.path.isdir(depth_dir):
        raise MissingFile(f"{depth_dir} (depth directory)")
    indices = []
    for name in os.listdir(depth_dir):
        stem, ext = os.path.splitext(name)
        if ext == ".sowd" and stem.isdigit():
            indices.append(int(stem))
    indices.sort()
    if not indices:
        raise MissingFile(f"{depth_dir}: no depth frames found")

    frames = []
    for idx in indices:
        stem = frame_name(idx)
        depth = read_depth(os.path.join(depth_dir, stem + ".sowd"))
        pose_path = os.path.join(directory, "poses", stem + ".txt")
        if not os.path.isfile(pose_path):
            raise MissingFile(f"pose file for frame {idx}: {pose_path}")
        pose = read_pose(pose_path, frame=idx)
        calib_path = os.path.join(directory, "calib", stem + ".txt")
        if not os.path.isfile(calib_path):
            raise MissingFile(f"calibration file for frame {idx}: {calib_path}")
        intr = read_intrinsics(calib_path)
        mask_path = os.path.join(directory, "masks", stem + ".sowm")
        mask = read_mask(mask_path) if os.path.isfile(mask_path) else None
        if mask is not None and (mask.width != depth.width or mask.height != depth.height):
            raise DimensionMismatch(
                f"frame {idx}: depth {depth.width}x{depth.height} vs mask {mask.width}x{mask.height}"
            )
        frames.append(Frame(index=idx, depth=depth, mask=mask, intrinsics=intr, pose=pose))
    return Sequence(frames=frames)


def record_from_box(box, intrinsics: CameraIntrinsics, width: int, height: int,
                    cls: str = "Car") -> LabelRecord:
    """Turn a 3D box into a label record; the 2D box is the projection
    of its corners clipped to the image."""
    from .geometry import box_corners, project_points, wrap_angle

    corners = box_corners(box.center, box.dims, box.yaw)
    uv, valid = project_points(corners, intrinsics)
    if valid.any():
        us = np.clip(uv[valid, 0], 0, width - 1)
        vs = np.clip(uv[valid, 1], 0, height - 1)
        box2d = (float(us.min()), float(vs.min()), float(us.max()), float(vs.max()))
    else:
        box2d = (0.0, 0.0, 0.0, 0.0)
    alpha = wrap_angle(box.yaw - math.atan2(box.center[2], box.center[0]))
    return LabelRecord(
        cls=cls,
        truncation=0.0,
        occlusion=0,
        alpha=float(alpha),
        box2d=box2d,
        h=float(box.dims[2]),
        w=float(box.dims[1]),
        l=float(box.dims[0]),
        x=float(box.center[0]),
        y=float(box.center[1]),
        z=float(box.center[2]),
        yaw=float(wrap_angle(box.yaw)),
        score=float(box.score),
    )


def write_labels(labels, path) -> None:
    """Write label records, one KITTI-order line each.

    Records are validated first; an out-of-range yaw or non-positive size
    is rejected before anything is written.
    """
    for i, rec in enumerate(labels):
        try:
            rec.validate()
        except ValueError as e:
            raise ValueError(f"label {i}: {e}") from e
    try:
        with open(path, "w") as f:
            for rec in labels:
                f.write(
                    f"{rec.cls} {rec.truncation:.2f} {rec.occlusion:d} {rec.alpha:.6f} "
                    f"{rec.box2d[0]:.2f} {rec.box2d[1]:.2f} {rec.box2d[2]:.2f} {rec.box2d[3]:.2f} "
                    f"{rec.h:.6f} {rec.w:.6f} {rec.l:.6f} "
                    f"{rec.x:.6f} {rec.y:.6f} {rec.z:.6f} {rec.yaw:.6f} {rec.score:.6f}\n"
                )
    except OSError as e:
        raise IoFailure(f"writing {path}: {e}") from e


def read_labels(path) -> list[LabelRecord]:
    """Parse a label file; accepts 15-field (no score) and 16-field lines."""
    try:
        with open(path) as f:
            lines = f.readlines()
    except FileNotFoundError as e:
        raise MissingFile(str(path)) from e
    records = []
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (15, 16):
            raise ParseError(f"{path}: expected 15 or 16 fields, got {len(parts)}", line=ln)
        try:
            vals = [float(p) for p in parts[1:]]
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=ln) from e
        yaw = math.remainder(vals[13], 2.0 * math.pi)
        if yaw >= math.pi:
            yaw -= 2.0 * math.pi
        rec = LabelRecord(
            cls=parts[0],
            truncation=vals[0],
            occlusion=int(vals[1]),
            alpha=vals[2],
            box2d=(vals[3], vals[4], vals[5], vals[6]),
            h=vals[7],
            w=vals[8],
            l=vals[9],
            x=vals[10],
            y=vals[11],
            z=vals[12],
            yaw=yaw,
            score=vals[14] if len(vals) > 14 else 1.0,
        )
        try:
            rec.validate()
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=ln) from e
        records.append(rec)
    return records
