"""Yaw and extent estimation in bird's-eye view.

Stationary objects get a grid search over candidate axis angles scored
by a saturated closeness criterion: points are projected onto the
candidate axis pair, each point measures its distance to the nearer of
the low/high percentile extremes, and a steep sigmoid saturates that
distance so outliers cannot dominate. Moving objects take their yaw
from the track trajectory instead, and only the extents are read off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EmptyCloud, EmptyInput, TooFewPoints, TooShort
from .geometry import wrap_angle
from .tracking import InstanceTrack


@dataclass
class BoxFitConfig:
    alpha: float = 10.0
    angle_step: float = math.pi / 360.0
    percentile_low: float = 0.10
    percentile_high: float = 0.90
    prior_dims: tuple[float, float, float] = (3.89, 1.62, 1.53)
    typical_max_dims: tuple[float, float, float] = (6.5, 2.4, 2.5)
    degenerate_view_tolerance: float = math.radians(10.0)
    min_points: int = 10
    # percentile extents under-cover a uniformly sampled edge by
    # (high - low); divide by this to de-shrink read-out dimensions
    extent_shrink: float = field(init=False, default=0.8)

    def __post_init__(self):
        self.extent_shrink = self.percentile_high - self.percentile_low

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (0 < self.angle_step <= math.pi / 2):
            raise ValueError("angle_step must be in (0, pi/2]")
        if not (0 <= self.percentile_low < self.percentile_high <= 1):
            raise ValueError("percentiles must satisfy 0 <= low < high <= 1")


@dataclass
class BevFit:
    yaw: float
    center: tuple[float, float]
    dims: tuple[float, float]
    criterion_value: float


def saturated_closeness(proj_x, proj_y, alpha: float,
                        percentile_low: float = 0.10,
                        percentile_high: float = 0.90) -> float:
    """Outlier-saturated extremeness score of projected points.

    For each point and each of the two projection axes, the signed
    distance to the nearer of the two percentile extremes is pushed
    through sigmoid(alpha * d); the per-point minimum over the axes is
    summed. Points beyond an extreme have negative distance, so their
    terms vanish instead of rewarding spread.
    """
    px = np.asarray(proj_x, dtype=np.float64).reshape(-1)
    py = np.asarray(proj_y, dtype=np.float64).reshape(-1)
    if px.size == 0 or py.size == 0:
        raise EmptyInput("saturated_closeness needs at least one point")
    if px.size != py.size:
        raise ValueError("projection arrays must have equal length")
    terms = []
    for p in (px, py):
        lo, hi = np.percentile(p, [100 * percentile_low, 100 * percentile_high])
        d_hi = hi - p
        d_lo = p - lo
        d = np.where(np.abs(d_hi) <= np.abs(d_lo), d_hi, d_lo)
        with np.errstate(over="ignore"):
            terms.append(1.0 / (1.0 + np.exp(-alpha * d)))
    return float(np.minimum(terms[0], terms[1]).sum())


def bev_extents_at_yaw(xy: np.ndarray, yaw: float,
                       percentile_low: float = 0.10,
                       percentile_high: float = 0.90):
    """Percentile extents of BEV points along the axis pair at `yaw`.

    Returns (extent_u, extent_v, center_xy) where u is the yaw axis, v
    its perpendicular, extents are raw percentile spans (no shrink
    correction) and the center is the midpoint of the spans mapped back
    to the input frame.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    pu = c * xy[:, 0] + s * xy[:, 1]
    pv = -s * xy[:, 0] + c * xy[:, 1]
    lo_u, hi_u = np.percentile(pu, [100 * percentile_low, 100 * percentile_high])
    lo_v, hi_v = np.percentile(pv, [100 * percentile_low, 100 * percentile_high])
    mu = 0.5 * (lo_u + hi_u)
    mv = 0.5 * (lo_v + hi_v)
    center = (c * mu - s * mv, s * mu + c * mv)
    return float(hi_u - lo_u), float(hi_v - lo_v), center


def fit_bev_box(points, cfg: BoxFitConfig) -> BevFit:
    """Grid-search the axis angle in [0, pi/2) and read extents there.

    The returned yaw is the angle of the longer extent axis, in
    [0, pi); the opposite heading (yaw + pi) is resolved downstream.
    Criterion ties keep the smallest angle.
    """
    cfg.validate()
    xyz = points.xyz if hasattr(points, "xyz") else np.asarray(points, dtype=np.float64)
    if xyz.shape[0] < cfg.min_points:
        raise TooFewPoints(
            f"box fitting needs >= {cfg.min_points} points, got {xyz.shape[0]}"
        )
    xy = np.ascontiguousarray(xyz[:, (0, 2)])
    angles = np.arange(0.0, math.pi / 2, cfg.angle_step)
    losses = kernels.closeness_losses(
        xy, angles, cfg.alpha, cfg.percentile_low, cfg.percentile_high
    )
    k = int(np.argmin(losses))
    theta = float(angles[k])
    ext_u, ext_v, center = bev_extents_at_yaw(
        xy, theta, cfg.percentile_low, cfg.percentile_high
    )
    if ext_u >= ext_v:
        yaw = theta
        dims = (ext_u / cfg.extent_shrink, ext_v / cfg.extent_shrink)
    else:
        yaw = theta + math.pi / 2
        dims = (ext_v / cfg.extent_shrink, ext_u / cfg.extent_shrink)
    return BevFit(yaw=yaw, center=center, dims=dims, criterion_value=float(losses[k]))


def fit_bev_box_fixed_yaw(points, yaw: float, cfg: BoxFitConfig) -> BevFit:
    """Extents and center at a known yaw (moving objects: the trajectory
    already fixes the heading, so no angle search)."""
    cfg.validate()
    xyz = points.xyz if hasattr(points, "xyz") else np.asarray(points, dtype=np.float64)
    if xyz.shape[0] < cfg.min_points:
        raise TooFewPoints(
            f"box fitting needs >= {cfg.min_points} points, got {xyz.shape[0]}"
        )
    xy = np.ascontiguousarray(xyz[:, (0, 2)])
    ext_u, ext_v, center = bev_extents_at_yaw(
        xy, yaw, cfg.percentile_low, cfg.percentile_high
    )
    dims = (ext_u / cfg.extent_shrink, ext_v / cfg.extent_shrink)
    return BevFit(yaw=yaw, center=center, dims=dims, criterion_value=math.nan)


def circular_median(angles) -> float:
    """Median on the circle: the input angle minimizing the summed
    wrapped distance to all others (first minimum on ties). For even
    counts, the circular midpoint of the two lowest-cost candidates."""
    a = np.asarray(angles, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise EmptyInput("circular_median of no angles")
    if a.size == 1:
        return float(wrap_angle(a[0]))
    diff = np.abs(wrap_angle(a[None, :] - a[:, None]))
    costs = diff.sum(axis=1)
    if a.size % 2 == 1:
        return float(wrap_angle(a[int(np.argmin(costs))]))
    i1 = int(np.argmin(costs))
    costs2 = costs.copy()
    costs2[i1] = np.inf
    i2 = int(np.argmin(costs2))
    return float(wrap_angle(a[i1] + 0.5 * wrap_angle(a[i2] - a[i1])))


def moving_yaw(track: InstanceTrack, reference_frame: int) -> float:
    """Trajectory heading at the reference frame: atan2 of adjacent
    location deltas for entries within 5 of the reference entry, fused
    by circular median."""
    if len(track) < 2:
        raise TooShort(
            f"track {track.track_id} has {len(track)} entries, need >= 2 for yaw"
        )
    frames = track.frames()
    if reference_frame in frames:
        i_ref = frames.index(reference_frame)
    else:
        i_ref = int(np.argmin(np.abs(np.asarray(frames) - reference_frame)))
    locs = track.locations()
    k0 = max(0, i_ref - 5)
    k1 = min(len(frames) - 1, i_ref + 5)
    yaws = []
    for k in range(k0, k1):
        d = locs[k + 1] - locs[k]
        yaws.append(math.atan2(d[2], d[0]))
    return circular_median(yaws)


def sanitize_dims(fit: BevFit, height: float, viewing_angle: float,
                  cfg: BoxFitConfig) -> tuple[float, float, float]:
    """Replace implausible or unobservable extents with prior dims.

    Two triggers: any dimension above the typical maximum (merged
    neighboring structure), or a viewing direction within tolerance of
    a quarter-turn multiple relative to the yaw (straight-on views hide
    one of the extents)."""
    dims = (fit.dims[0], fit.dims[1], height)
    if any(d > m for d, m in zip(dims, cfg.typical_max_dims)):
        return cfg.prior_dims
    rel = wrap_angle(fit.yaw - viewing_angle)
    for target in (0.0, math.pi / 2, math.pi, -math.pi / 2):
        if abs(wrap_angle(rel - target)) <= cfg.degenerate_view_tolerance:
            return cfg.prior_dims
    return dims


def estimate_vertical(points) -> tuple[float, float]:
    """Height from the 10/90 percentile span of elevation (de-shrunk by
    0.8 and clamped to [0.5, 3.0] m) and the mid-height center from the
    95th-percentile ground contact."""
    xyz = points.xyz if hasattr(points, "xyz") else np.asarray(points, dtype=np.float64)
    if xyz.shape[0] == 0:
        raise EmptyCloud("cannot size an empty point cloud")
    up = -xyz[:, 1]
    lo, hi = np.percentile(up, [10, 90])
    height = float(np.clip((hi - lo) / 0.8, 0.5, 3.0))
    ground_y = float(np.percentile(xyz[:, 1], 95))
    return ground_y - height / 2.0, height
