"""Backend selection for the compute kernels.

The compiled extension (autobox3d._native) is used when importable; the
numpy/scipy implementations in autobox3d._kernels_np are the fallback.
Set AUTOBOX3D_BACKEND=native or =numpy to force one (forcing native
raises if the extension is missing).

Both backends expose:
    closeness_losses(xy, angles, alpha, p_lo, p_hi) -> (A,)
    build_template_index(points) -> index with nn_distances(queries, cap)
    template_losses(index, queries, offsets_xz, alpha, cap) -> (G,)
and this module adds saturation_cap(alpha), an optional precomputed
voxel bound field, and a backend-uniform template_argmin over a regular
shift lattice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels_np

_requested = os.environ.get("AUTOBOX3D_BACKEND", "").strip().lower()
if _requested not in ("", "native", "numpy"):
    raise ImportError(f"AUTOBOX3D_BACKEND must be 'native' or 'numpy', got {_requested!r}")

_native = None
if _requested != "numpy":
    try:
        from . import _native as _native_mod

        _native = _native_mod
    except ImportError:
        if _requested == "native":
            raise

BACKEND = "native" if _native is not None else "numpy"
_impl = _native if _native is not None else _kernels_np

closeness_losses = _impl.closeness_losses
build_template_index = _impl.build_template_index
template_losses = _impl.template_losses


def saturation_cap(alpha: float) -> float:
    """Distance beyond which sigmoid(alpha*d) rounds to exactly 1.0 in
    float64 (exp(-40) is far below half an ulp at 1.0), so capping
    nearest-neighbor searches there cannot change any loss value."""
    return 40.0 / alpha


@dataclass
class BoundField:
    """Voxelized lower bounds on distance-to-template.

    For any point p falling in voxel v, the true nearest-neighbor
    distance satisfies d(p) >= lb[v], hence sigmoid(alpha*d) >= sig[v].
    Points outside the field lie more than saturation_cap(alpha) from
    every template point, so their sigmoid term is exactly 1.0. The
    compiled argmin uses this to discard shift hypotheses without exact
    distance queries; results are unchanged because only hypotheses
    provably worse than the running best are skipped.
    """

    sig: np.ndarray
    lb: np.ndarray
    origin: tuple[float, float, float]
    inv_voxel: float


def build_bound_field(points, alpha: float, voxel: float = 0.25) -> BoundField:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError("template points must be a non-empty (N,3) array")
    cap = saturation_cap(alpha)
    margin = cap + voxel
    mins = pts.min(axis=0) - margin
    maxs = pts.max(axis=0) + margin
    dims = np.ceil((maxs - mins) / voxel).astype(np.int64) + 1
    occ = np.zeros(dims, dtype=bool)
    idx = np.clip(np.floor((pts - mins) / voxel).astype(np.int64), 0, dims - 1)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    # chessboard distance in voxels from each voxel to the nearest
    # occupied one; a point in a voxel at chessboard distance D is at
    # least (D-1)*voxel from every template point
    rings = ndimage.distance_transform_cdt(~occ, metric="chessboard")
    lb = np.maximum(rings.astype(np.float64) - 1.0, 0.0) * voxel
    sig = 1.0 / (1.0 + np.exp(-alpha * lb))
    return BoundField(
        sig=np.ascontiguousarray(sig),
        lb=np.ascontiguousarray(lb),
        origin=(float(mins[0]), float(mins[1]), float(mins[2])),
        inv_voxel=1.0 / voxel,
    )


def lattice_offsets(steps_x, steps_z, basis_x, basis_z) -> np.ndarray:
    """Materialize the (Gx*Gz, 2) shift lattice in row-major order:
    offset(i,j) = steps_x[i]*basis_x + steps_z[j]*basis_z."""
    steps_x = np.asarray(steps_x, dtype=np.float64)
    steps_z = np.asarray(steps_z, dtype=np.float64)
    bx = np.asarray(basis_x, dtype=np.float64)
    bz = np.asarray(basis_z, dtype=np.float64)
    grid = steps_x[:, None, None] * bx[None, None, :] + steps_z[None, :, None] * bz[None, None, :]
    return grid.reshape(-1, 2)


if _native is not None:

    def template_argmin(index, queries, steps_x, steps_z, basis_x, basis_z, alpha, cap, field=None):
        return _native.template_argmin(
            index,
            queries,
            steps_x,
            steps_z,
            float(basis_x[0]),
            float(basis_x[1]),
            float(basis_z[0]),
            float(basis_z[1]),
            alpha,
            cap,
            field,
        )

else:

    def template_argmin(index, queries, steps_x, steps_z, basis_x, basis_z, alpha, cap, field=None):
        losses = template_losses(index, queries, lattice_offsets(steps_x, steps_z, basis_x, basis_z), alpha, cap)
        g = int(np.argmin(losses))
        return g, float(losses[g])


template_argmin.__doc__ = """First minimum of the template loss over a
regular 2-D lattice of (x, z) shifts, returned as (flat row-major index,
loss). Equals argmin over template_losses on the same lattice with
first-wins ties; the compiled backend reaches the same answer through
sound lower bounds (optionally a precomputed BoundField) instead of
exhaustive evaluation."""
