"""Compare the compiled kernel backend against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Both backends are imported side by side (the selection env var only
affects which one the package exports), timed on workloads shaped like
the synthetic acceptance scenes, and checked for agreement.
"""
from __future__ import annotations

import time

import numpy as np

from autobox3d import _kernels_np
from autobox3d import kernels
from autobox3d.refinement import make_template

try:
    from autobox3d import _native
except ImportError:
    _native = None


def timed(fn, *args, repeat=5, **kwargs):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_closeness(rng):
    # one stationary car's aggregated BEV cloud and the full yaw grid
    n = 4096
    yaw = 0.6
    l, w = 3.9, 1.62
    t = rng.uniform(-0.5, 0.5, n)
    side = rng.integers(0, 4, n)
    x = np.where(side < 2, t * l, np.where(side == 2, l / 2, -l / 2))
    y = np.where(side < 2, np.where(side == 0, w / 2, -w / 2), t * w)
    c, s = np.cos(yaw), np.sin(yaw)
    xy = np.column_stack([c * x - s * y, s * x + c * y]) + rng.normal(0, 0.1, (n, 2))
    angles = np.arange(0.0, np.pi / 2, np.pi / 360)

    rows = []
    ref, t_np = timed(_kernels_np.closeness_losses, xy, angles, 10.0, 0.1, 0.9)
    rows.append(("closeness grid (numpy)", t_np, None))
    if _native is not None:
        got, t_na = timed(_native.closeness_losses, xy, angles, 10.0, 0.1, 0.9)
        assert np.allclose(got, ref, atol=1e-9)
        rows.append(("closeness grid (native)", t_na, t_np / t_na))
    return rows


def bench_template(rng):
    # refinement search: 41x41 shift lattice, subsampled observation
    tpl = make_template((3.9, 1.5, 1.62))
    queries = tpl.points[rng.choice(tpl.points.shape[0], 128, replace=False)]
    queries = queries + rng.normal(0, 0.08, queries.shape)
    steps = np.arange(-20, 21) * 0.1
    bx, bz = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    alpha = 10.0
    cap = kernels.saturation_cap(alpha)

    rows = []
    idx_np = _kernels_np.build_template_index(tpl.points)
    (g_np, loss_np), t_np = timed(
        lambda: _kernels_np_argmin(idx_np, queries, steps, bx, bz, alpha, cap)
    )
    rows.append(("template search (numpy)", t_np, None))
    if _native is not None:
        idx_na = _native.build_template_index(tpl.points)
        field = kernels.build_bound_field(tpl.points, alpha)
        (g_na, loss_na), t_na = timed(
            lambda: _native.template_argmin(
                idx_na, queries, steps, steps, 1.0, 0.0, 0.0, 1.0, alpha, cap, field
            )
        )
        assert g_na == g_np and abs(loss_na - loss_np) < 1e-9, (g_na, g_np, loss_na, loss_np)
        rows.append(("template search (native)", t_na, t_np / t_na))
    return rows


def _kernels_np_argmin(index, queries, steps, bx, bz, alpha, cap):
    offsets = kernels.lattice_offsets(steps, steps, bx, bz)
    losses = _kernels_np.template_losses(index, queries, offsets, alpha, cap)
    g = int(np.argmin(losses))
    return g, float(losses[g])


def main() -> int:
    rng = np.random.default_rng(7)
    print(f"active backend: {kernels.BACKEND}")
    if _native is None:
        print("compiled extension not importable, timing the fallback only")
    rows = bench_closeness(rng) + bench_template(rng)
    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'best of 5':>10}  speedup")
    for name, secs, speed in rows:
        extra = f"{speed:6.1f}x" if speed is not None else "      -"
        print(f"{name:<{width}}  {secs * 1e3:8.2f}ms  {extra}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
