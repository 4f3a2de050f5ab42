"""Pure-numpy kernel implementations.

Reference implementations of the two hot loops; autobox3d.kernels picks
these when the compiled extension is unavailable. Results match the
compiled backend to float rounding (same percentile rule, same sigmoid).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_ANGLE_CHUNK = 32


def closeness_losses(xy, angles, alpha, p_lo, p_hi):
    """Saturated-closeness loss of 2-D points for each candidate axis angle.

    For each angle the points are projected onto the rotated axis pair,
    per-axis low/high percentiles are taken, each point keeps the signed
    distance to its nearer percentile extreme, distances pass through
    sigmoid(alpha*d), and the per-point minimum over the two axes is
    summed.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    x, z = xy[:, 0], xy[:, 1]
    out = np.empty(angles.shape[0])
    for s in range(0, angles.shape[0], _ANGLE_CHUNK):
        ang = angles[s : s + _ANGLE_CHUNK]
        c, sn = np.cos(ang)[:, None], np.sin(ang)[:, None]
        pu = c * x[None, :] + sn * z[None, :]
        pv = -sn * x[None, :] + c * z[None, :]
        out[s : s + ang.shape[0]] = _losses_for_projections(pu, pv, alpha, p_lo, p_hi)
    return out


def _losses_for_projections(pu, pv, alpha, p_lo, p_hi):
    lo_u, hi_u = np.percentile(pu, [100.0 * p_lo, 100.0 * p_hi], axis=1)
    lo_v, hi_v = np.percentile(pv, [100.0 * p_lo, 100.0 * p_hi], axis=1)
    du = _nearer_extreme(pu, lo_u[:, None], hi_u[:, None])
    dv = _nearer_extreme(pv, lo_v[:, None], hi_v[:, None])
    term = np.minimum(_sigmoid(alpha * du), _sigmoid(alpha * dv))
    return term.sum(axis=1)


def _nearer_extreme(p, lo, hi):
    """Signed distance to the nearer of the two percentile extremes."""
    d_hi = hi - p
    d_lo = p - lo
    return np.where(np.abs(d_hi) <= np.abs(d_lo), d_hi, d_lo)


def _sigmoid(t):
    # exp overflow for very negative t saturates to 0 exactly, which is
    # the correct limit; silence the spurious warning.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-t))


class TemplateIndex:
    """Exact nearest-neighbor index over a fixed template point set."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self._tree = cKDTree(self.points)

    def nn_distances(self, queries, cap=np.inf):
        """Distance from each query to its nearest template point.

        cap is accepted for interface parity with the compiled index; the
        tree always computes the exact distance, and min(d, cap) equals
        the capped search result bit-for-bit.
        """
        d, _ = self._tree.query(np.ascontiguousarray(queries, dtype=np.float64), k=1)
        return np.minimum(d, cap)


def build_template_index(points) -> TemplateIndex:
    return TemplateIndex(points)


def template_losses(index: TemplateIndex, queries, offsets_xz, alpha, cap):
    """Template-fitting loss for each (x, z) query-shift hypothesis.

    queries: (M,3) observed points already expressed in the template's
    frame for the unshifted pose; offsets_xz: (G,2) shifts SUBTRACTED
    from the query x/z (equivalent to translating the template).
    Returns (G,) mean sigmoid(alpha*nn_distance) - 0.5.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    offsets_xz = np.ascontiguousarray(offsets_xz, dtype=np.float64)
    g, m = offsets_xz.shape[0], queries.shape[0]
    big = np.empty((g, m, 3))
    big[:] = queries[None, :, :]
    big[:, :, 0] -= offsets_xz[:, 0][:, None]
    big[:, :, 2] -= offsets_xz[:, 1][:, None]
    d = index.nn_distances(big.reshape(-1, 3), cap)
    return _sigmoid(alpha * d).reshape(g, m).mean(axis=1) - 0.5
