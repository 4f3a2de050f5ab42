"""Stationary/moving classification of tracks from location jitter.

The test separates real object motion from apparent motion caused by
depth noise: the mean of adjacent location deltas grows with true
motion while their spread does not, so the ratio of the two is compared
against a threshold, together with a minimum net displacement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooShort
from .tracking import InstanceTrack
from .types import PointCloud

STATIONARY = "stationary"
MOVING = "moving"

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass
class MotionConfig:
    z_threshold: float = 0.2
    min_net_distance: float = 5.0

    def validate(self) -> None:
        if self.z_threshold <= 0 or self.min_net_distance <= 0:
            raise ValueError("motion thresholds must be positive")


@dataclass
class MotionStats:
    mu: np.ndarray
    sigma: np.ndarray
    z_ratio: float
    net_distance: float


def motion_stats(track: InstanceTrack) -> MotionStats:
    """Per-component mean and spread of adjacent location deltas.

    sigma uses the population mean square about mu with a 1/sqrt(2)
    factor (the deltas difference two noisy locations, doubling the
    variance). z_ratio = |mu| / |sigma| with the conventions z=inf for
    zero spread but nonzero mean, z=0 when both vanish.
    """
    if len(track) < 2:
        raise TooShort(f"track {track.track_id} has {len(track)} entries, need >= 2")
    locs = track.locations()
    deltas = np.diff(locs, axis=0)
    mu = deltas.mean(axis=0)
    sigma = _SQRT_HALF * np.sqrt(((mu - deltas) ** 2).mean(axis=0))
    mu_norm = float(np.linalg.norm(mu))
    sigma_norm = float(np.linalg.norm(sigma))
    if sigma_norm == 0.0:
        z = np.inf if mu_norm > 0.0 else 0.0
    else:
        z = mu_norm / sigma_norm
    net = float(np.linalg.norm(locs[-1] - locs[0]))
    return MotionStats(mu=mu, sigma=sigma, z_ratio=float(z), net_distance=net)


def classify(stats: MotionStats, cfg: MotionConfig) -> str:
    """Moving requires both a high delta-mean-to-spread ratio and a
    large enough net displacement; everything else is stationary."""
    if stats.z_ratio > cfg.z_threshold and stats.net_distance > cfg.min_net_distance:
        return MOVING
    return STATIONARY


def classify_track(track: InstanceTrack, cfg: MotionConfig) -> str:
    """Classify and annotate a track; short tracks carry no motion
    evidence and default to stationary."""
    if len(track) < 2:
        track.motion = STATIONARY
    else:
        track.motion = classify(motion_stats(track), cfg)
    return track.motion


def aggregate_stationary(track: InstanceTrack) -> PointCloud:
    """Concatenate all per-frame point sets of a stationary track (the
    entries must already share one coordinate frame). Per-point source
    frame indices are preserved."""
    xyz = np.concatenate([e.points.xyz for e in track.entries], axis=0)
    pixels = None
    if all(e.points.pixels is not None for e in track.entries):
        pixels = np.concatenate([e.points.pixels for e in track.entries], axis=0)
    frames = np.concatenate(
        [
            e.points.frames
            if e.points.frames is not None
            else np.full(len(e.points), e.frame, dtype=np.int32)
            for e in track.entries
        ]
    )
    return PointCloud(xyz=xyz, pixels=pixels, frames=frames)
