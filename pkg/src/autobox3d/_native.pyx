# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled kernels for the two hot loops: the axis-angle closeness scan
and template nearest-neighbor distance grids.

Semantics mirror autobox3d._kernels_np (same percentile rule, same
sigmoid, same tie-breaking); autobox3d.kernels selects the backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, floor, sin, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()


cdef inline double _sigmoid(double t) noexcept nogil:
    return 1.0 / (1.0 + exp(-t))


cdef double _select(double* a, Py_ssize_t lo, Py_ssize_t hi, Py_ssize_t k) noexcept nogil:
    """Quickselect: returns the k-th smallest of a[lo..hi] and leaves the
    range partitioned around it (a[lo..k-1] <= a[k] <= a[k+1..hi])."""
    cdef Py_ssize_t i, j, mid
    cdef double piv, tmp
    while True:
        if hi - lo < 16:
            for i in range(lo + 1, hi + 1):
                piv = a[i]
                j = i - 1
                while j >= lo and a[j] > piv:
                    a[j + 1] = a[j]
                    j -= 1
                a[j + 1] = piv
            return a[k]
        mid = lo + ((hi - lo) >> 1)
        if a[mid] < a[lo]:
            tmp = a[mid]; a[mid] = a[lo]; a[lo] = tmp
        if a[hi] < a[lo]:
            tmp = a[hi]; a[hi] = a[lo]; a[lo] = tmp
        if a[hi] < a[mid]:
            tmp = a[hi]; a[hi] = a[mid]; a[mid] = tmp
        piv = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < piv:
                i += 1
            while a[j] > piv:
                j -= 1
            if i <= j:
                tmp = a[i]; a[i] = a[j]; a[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]


cdef void _percentile_pair(double* buf, Py_ssize_t n, double p_lo, double p_hi,
                           double* lo_out, double* hi_out) noexcept nogil:
    """Both percentiles of buf[0..n-1] (numpy linear interpolation rule).

    buf is scratch and gets reordered. Assumes 0 <= p_lo <= p_hi <= 1.
    """
    cdef double h_lo = p_lo * <double> (n - 1)
    cdef double h_hi = p_hi * <double> (n - 1)
    cdef Py_ssize_t r_lo = <Py_ssize_t> floor(h_lo)
    cdef Py_ssize_t r_hi = <Py_ssize_t> floor(h_hi)
    cdef Py_ssize_t i, j
    cdef double v_lo, v_hi, nxt, piv
    if r_lo > n - 1:
        r_lo = n - 1
    if r_hi > n - 1:
        r_hi = n - 1
    if n < 32:
        for i in range(1, n):
            piv = buf[i]
            j = i - 1
            while j >= 0 and buf[j] > piv:
                buf[j + 1] = buf[j]
                j -= 1
            buf[j + 1] = piv
        if r_lo >= n - 1:
            lo_out[0] = buf[n - 1]
        else:
            lo_out[0] = buf[r_lo] + (buf[r_lo + 1] - buf[r_lo]) * (h_lo - <double> r_lo)
        if r_hi >= n - 1:
            hi_out[0] = buf[n - 1]
        else:
            hi_out[0] = buf[r_hi] + (buf[r_hi + 1] - buf[r_hi]) * (h_hi - <double> r_hi)
        return
    v_hi = _select(buf, 0, n - 1, r_hi)
    if h_hi > <double> r_hi and r_hi + 1 <= n - 1:
        nxt = buf[r_hi + 1]
        for i in range(r_hi + 2, n):
            if buf[i] < nxt:
                nxt = buf[i]
        hi_out[0] = v_hi + (nxt - v_hi) * (h_hi - <double> r_hi)
    else:
        hi_out[0] = v_hi
    if r_lo == r_hi:
        v_lo = v_hi
        if h_lo > <double> r_lo and r_lo + 1 <= n - 1:
            # rank r_lo+1 is the minimum of everything right of r_lo
            nxt = buf[r_lo + 1]
            for i in range(r_lo + 2, n):
                if buf[i] < nxt:
                    nxt = buf[i]
            lo_out[0] = v_lo + (nxt - v_lo) * (h_lo - <double> r_lo)
        else:
            lo_out[0] = v_lo
        return
    v_lo = _select(buf, 0, r_hi - 1, r_lo)
    if h_lo > <double> r_lo:
        # rank r_lo+1 lives in buf[r_lo+1..r_hi] after the partitions
        nxt = buf[r_lo + 1]
        for i in range(r_lo + 2, r_hi + 1):
            if buf[i] < nxt:
                nxt = buf[i]
        lo_out[0] = v_lo + (nxt - v_lo) * (h_lo - <double> r_lo)
    else:
        lo_out[0] = v_lo


def closeness_losses(object xy_in, object angles_in, double alpha, double p_lo, double p_hi):
    """Saturated-closeness loss per candidate axis angle; see _kernels_np."""
    xy_arr = np.ascontiguousarray(xy_in, dtype=np.float64)
    ang_arr = np.ascontiguousarray(angles_in, dtype=np.float64)
    if xy_arr.ndim != 2 or xy_arr.shape[1] != 2:
        raise ValueError("xy must be (N,2)")
    cdef double[:, ::1] xy = xy_arr
    cdef double[::1] angles = ang_arr.reshape(-1)
    cdef Py_ssize_t n = xy.shape[0]
    cdef Py_ssize_t na = angles.shape[0]
    if n == 0:
        raise ValueError("no points")
    out_arr = np.empty(na, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double* pu = <double*> malloc(4 * n * sizeof(double))
    if pu == NULL:
        raise MemoryError()
    cdef double* pv = pu + n
    cdef double* su = pu + 2 * n
    cdef double* sv = pu + 3 * n
    cdef Py_ssize_t ia, i
    cdef double c, s, lo_u, hi_u, lo_v, hi_v, d1, d2, du, dv, tu, tv, acc
    with nogil:
        for ia in range(na):
            c = cos(angles[ia])
            s = sin(angles[ia])
            for i in range(n):
                pu[i] = c * xy[i, 0] + s * xy[i, 1]
                pv[i] = -s * xy[i, 0] + c * xy[i, 1]
            memcpy(su, pu, n * sizeof(double))
            memcpy(sv, pv, n * sizeof(double))
            _percentile_pair(su, n, p_lo, p_hi, &lo_u, &hi_u)
            _percentile_pair(sv, n, p_lo, p_hi, &lo_v, &hi_v)
            acc = 0.0
            for i in range(n):
                d1 = hi_u - pu[i]
                d2 = pu[i] - lo_u
                du = d1 if fabs(d1) <= fabs(d2) else d2
                d1 = hi_v - pv[i]
                d2 = pv[i] - lo_v
                dv = d1 if fabs(d1) <= fabs(d2) else d2
                tu = _sigmoid(alpha * du)
                tv = _sigmoid(alpha * dv)
                acc += tu if tu < tv else tv
            out[ia] = acc
    free(pu)
    return out_arr


cdef class GridIndex:
    """Uniform-grid exact nearest-neighbor index over template points.

    Queries take an upper bound `cap`: the search returns min(nn, cap),
    exact whenever the true distance is below cap, which lets callers
    stop at the sigmoid's float64 saturation distance.
    """

    cdef object pts_arr, starts_arr, order_arr
    cdef double[:, ::1] pts
    cdef int[::1] starts
    cdef int[::1] order
    cdef double ox, oy, oz, x1, y1, z1, cell, inv_cell
    cdef Py_ssize_t nx, ny, nz

    def __init__(self, points, double cells_across=16.0):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("template points must be a non-empty (N,3) array")
        mins = pts.min(axis=0)
        maxs = pts.max(axis=0)
        cell = max(float((maxs - mins).max()) / cells_across, 1e-6)
        dims = np.maximum(np.floor((maxs - mins) / cell).astype(np.int64) + 1, 1)
        idx3 = np.minimum(np.floor((pts - mins) / cell).astype(np.int64), dims - 1)
        idx3 = np.maximum(idx3, 0)
        flat = (idx3[:, 0] * dims[1] + idx3[:, 1]) * dims[2] + idx3[:, 2]
        order = np.argsort(flat, kind="stable").astype(np.int32)
        counts = np.bincount(flat, minlength=int(dims[0] * dims[1] * dims[2]))
        starts = np.zeros(counts.shape[0] + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        self.pts_arr = pts
        self.starts_arr = starts.astype(np.int32)
        self.order_arr = order
        self.pts = self.pts_arr
        self.starts = self.starts_arr
        self.order = self.order_arr
        self.ox, self.oy, self.oz = float(mins[0]), float(mins[1]), float(mins[2])
        self.x1, self.y1, self.z1 = float(maxs[0]), float(maxs[1]), float(maxs[2])
        self.cell = cell
        self.inv_cell = 1.0 / cell
        self.nx, self.ny, self.nz = int(dims[0]), int(dims[1]), int(dims[2])

    @property
    def points(self):
        return self.pts_arr

    cdef Py_ssize_t _clamp_cell(self, double coord, double origin, Py_ssize_t ncells) noexcept nogil:
        cdef double d = floor((coord - origin) * self.inv_cell)
        if d < 0.0:
            return 0
        if d > <double> (ncells - 1):
            return ncells - 1
        return <Py_ssize_t> d

    cdef double _nn(self, double qx, double qy, double qz, double cap) noexcept nogil:
        cdef double dx, dy, dz, kk, sx, sy, sz, bnd, b2
        cdef double best2 = cap * cap
        # per-axis distance from the query to the grid's bounding box
        # (zero on axes where the query is inside)
        dx = self.ox - qx
        if qx - self.x1 > dx:
            dx = qx - self.x1
        if dx < 0.0:
            dx = 0.0
        dy = self.oy - qy
        if qy - self.y1 > dy:
            dy = qy - self.y1
        if dy < 0.0:
            dy = 0.0
        dz = self.oz - qz
        if qz - self.z1 > dz:
            dz = qz - self.z1
        if dz < 0.0:
            dz = 0.0
        if dx * dx + dy * dy + dz * dz >= best2:
            return cap
        cdef Py_ssize_t cx = self._clamp_cell(qx, self.ox, self.nx)
        cdef Py_ssize_t cy = self._clamp_cell(qy, self.oy, self.ny)
        cdef Py_ssize_t cz = self._clamp_cell(qz, self.oz, self.nz)
        cdef Py_ssize_t k = 0
        cdef Py_ssize_t kmax = self.nx + self.ny + self.nz + 2
        while True:
            self._scan_ring(cx, cy, cz, k, qx, qy, qz, &best2)
            # Lower bound for any cell on ring k+1: some axis carries a
            # cell offset of k+1 from the clamped cell, which puts the
            # cell at least k whole cells beyond the query's own cell
            # along that axis, on top of the query's distance to the
            # grid box there. The other two axes each contribute at
            # least their box distance. Minimize over which axis
            # carries the offset.
            kk = <double> k * self.cell
            sx = dx + kk
            sy = dy + kk
            sz = dz + kk
            bnd = sx * sx + dy * dy + dz * dz
            b2 = dx * dx + sy * sy + dz * dz
            if b2 < bnd:
                bnd = b2
            b2 = dx * dx + dy * dy + sz * sz
            if b2 < bnd:
                bnd = b2
            if bnd >= best2:
                break
            k += 1
            if k > kmax:
                break
        return sqrt(best2)

    cdef void _scan_cell(self, Py_ssize_t x, Py_ssize_t y, Py_ssize_t z,
                         double qx, double qy, double qz, double* best2) noexcept nogil:
        cdef Py_ssize_t c0 = (x * self.ny + y) * self.nz + z
        cdef Py_ssize_t t, j
        cdef double ddx, ddy, ddz, d2
        for t in range(self.starts[c0], self.starts[c0 + 1]):
            j = self.order[t]
            ddx = self.pts[j, 0] - qx
            ddy = self.pts[j, 1] - qy
            ddz = self.pts[j, 2] - qz
            d2 = ddx * ddx + ddy * ddy + ddz * ddz
            if d2 < best2[0]:
                best2[0] = d2

    cdef void _scan_ring(self, Py_ssize_t cx, Py_ssize_t cy, Py_ssize_t cz, Py_ssize_t k,
                         double qx, double qy, double qz, double* best2) noexcept nogil:
        cdef Py_ssize_t x, y, z, x0, xe, y0, ye, z0, ze
        cdef bint ex, ey
        x0 = cx - k
        if x0 < 0:
            x0 = 0
        xe = cx + k
        if xe > self.nx - 1:
            xe = self.nx - 1
        y0 = cy - k
        if y0 < 0:
            y0 = 0
        ye = cy + k
        if ye > self.ny - 1:
            ye = self.ny - 1
        for x in range(x0, xe + 1):
            ex = (x == cx - k) or (x == cx + k)
            for y in range(y0, ye + 1):
                ey = (y == cy - k) or (y == cy + k)
                if ex or ey:
                    z0 = cz - k
                    if z0 < 0:
                        z0 = 0
                    ze = cz + k
                    if ze > self.nz - 1:
                        ze = self.nz - 1
                    for z in range(z0, ze + 1):
                        self._scan_cell(x, y, z, qx, qy, qz, best2)
                else:
                    z = cz - k
                    if 0 <= z < self.nz:
                        self._scan_cell(x, y, z, qx, qy, qz, best2)
                    z = cz + k
                    if 0 <= z < self.nz:
                        self._scan_cell(x, y, z, qx, qy, qz, best2)

    def nn_distances(self, queries, double cap=1e30):
        q_arr = np.ascontiguousarray(queries, dtype=np.float64)
        if q_arr.ndim != 2 or q_arr.shape[1] != 3:
            raise ValueError("queries must be (M,3)")
        cdef double[:, ::1] q = q_arr
        cdef Py_ssize_t m = q.shape[0]
        out_arr = np.empty(m, dtype=np.float64)
        cdef double[::1] out = out_arr
        cdef Py_ssize_t i
        with nogil:
            for i in range(m):
                out[i] = self._nn(q[i, 0], q[i, 1], q[i, 2], cap)
        return out_arr


def build_template_index(points):
    return GridIndex(points)


def template_losses(GridIndex index, queries, offsets_xz, double alpha, double cap):
    """Loss per query-shift hypothesis; see _kernels_np.template_losses."""
    q_arr = np.ascontiguousarray(queries, dtype=np.float64)
    off_arr = np.ascontiguousarray(offsets_xz, dtype=np.float64)
    if q_arr.ndim != 2 or q_arr.shape[1] != 3:
        raise ValueError("queries must be (M,3)")
    if off_arr.ndim != 2 or off_arr.shape[1] != 2:
        raise ValueError("offsets must be (G,2)")
    cdef double[:, ::1] q = q_arr
    cdef double[:, ::1] off = off_arr
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t g = off.shape[0]
    if m == 0:
        raise ValueError("no query points")
    out_arr = np.empty(g, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t ig, im
    cdef double acc, d
    with nogil:
        for ig in range(g):
            acc = 0.0
            for im in range(m):
                d = index._nn(q[im, 0] - off[ig, 0], q[im, 1], q[im, 2] - off[ig, 1], cap)
                acc += _sigmoid(alpha * d)
            out[ig] = acc / <double> m - 0.5
    return out_arr


def template_argmin(GridIndex index, queries, steps_x, steps_z,
                    double ax, double az, double bx, double bz,
                    double alpha, double cap, object field=None):
    """First minimum of the template loss over a 2-D lattice of shifts.

    Lattice point (i, j) shifts queries by steps_x[i]*(ax, az) +
    steps_z[j]*(bx, bz) in the (x, z) plane. Returns (flat_index, loss)
    with flat_index = i*len(steps_z)+j, identical to argmin over
    template_losses evaluated in that row-major order with first-wins
    ties.

    The search is exact; it only skips work that provably cannot change
    the answer. Nodes are visited smallest shift first so the incumbent
    tightens early (ties are still resolved to the smallest flat index,
    so visit order cannot change the result), each node's loss is
    lower-bounded via the optional precomputed voxel bound field before
    exact evaluation, and exact accumulation aborts once the remaining
    terms (each bounded below by the same field, or by sigmoid(0)=0.5)
    cannot bring the node under the incumbent.
    """
    q_arr = np.ascontiguousarray(queries, dtype=np.float64)
    sx_arr = np.ascontiguousarray(steps_x, dtype=np.float64).reshape(-1)
    sz_arr = np.ascontiguousarray(steps_z, dtype=np.float64).reshape(-1)
    if q_arr.ndim != 2 or q_arr.shape[1] != 3:
        raise ValueError("queries must be (M,3)")
    cdef double[:, ::1] q = q_arr
    cdef double[::1] sx = sx_arr
    cdef double[::1] sz = sz_arr
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t gx = sx.shape[0]
    cdef Py_ssize_t gz = sz.shape[0]
    if m == 0:
        raise ValueError("no query points")
    if gx == 0 or gz == 0:
        raise ValueError("empty shift lattice")

    cdef bint has_field = field is not None
    cdef double[:, :, ::1] sig_f
    cdef double[:, :, ::1] lb_f
    cdef double f_ox = 0.0, f_oy = 0.0, f_oz = 0.0, f_inv = 0.0
    cdef Py_ssize_t fn0 = 0, fn1 = 0, fn2 = 0
    if has_field:
        sig_f = field.sig
        lb_f = field.lb
        f_ox, f_oy, f_oz = field.origin
        f_inv = field.inv_voxel
        fn0, fn1, fn2 = sig_f.shape[0], sig_f.shape[1], sig_f.shape[2]

    cdef Py_ssize_t icx = int(np.argmin(np.abs(sx_arr)))
    cdef Py_ssize_t icz = int(np.argmin(np.abs(sz_arr)))
    cdef Py_ssize_t gc = icx * gz + icz

    # exact pass over the smallest-shift node; per-point distances seed
    # the evaluation order (far points first maximize early aborts)
    d0_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] d0 = d0_arr
    cdef double offx = sx[icx] * ax + sz[icz] * bx
    cdef double offz = sx[icx] * az + sz[icz] * bz
    cdef Py_ssize_t im, i, j, t, g, u
    cdef double acc = 0.0, d, qx, qy, qz
    with nogil:
        for im in range(m):
            d = index._nn(q[im, 0] - offx, q[im, 1], q[im, 2] - offz, cap)
            d0[im] = d
            acc += _sigmoid(alpha * d)
    cdef double bound0 = acc / <double> m - 0.5
    order_arr = np.argsort(-d0_arr, kind="stable").astype(np.int32)
    cdef int[::1] order = order_arr

    # visit order: smallest shift radius first, flat index breaking ties
    r2 = (sx_arr[:, None] * ax + sz_arr[None, :] * bx) ** 2 \
        + (sx_arr[:, None] * az + sz_arr[None, :] * bz) ** 2
    node_order_arr = np.argsort(r2.reshape(-1), kind="stable").astype(np.int32)
    cdef int[::1] node_order = node_order_arr

    cdef double* sigbuf = <double*> malloc(2 * m * sizeof(double))
    if sigbuf == NULL:
        raise MemoryError()
    cdef double* suffix = sigbuf + m

    cdef double pad = 1e-9
    cdef double best = 1e300
    cdef Py_ssize_t g_best = -1
    cdef double best_eff, need, loss, fxv, fyv, fzv
    cdef bint completed
    with nogil:
        for u in range(gx * gz):
            g = node_order[u]
            i = g / gz
            j = g - i * gz
            best_eff = best if best < bound0 else bound0
            if g == gc:
                loss = bound0
            else:
                offx = sx[i] * ax + sz[j] * bx
                offz = sx[i] * az + sz[j] * bz
                if has_field:
                    # lower-bound pass: voxel sigmoid bounds in exact
                    # evaluation order, kept for the suffix bound below
                    acc = 0.0
                    for t in range(m):
                        im = order[t]
                        qx = q[im, 0] - offx
                        qy = q[im, 1]
                        qz = q[im, 2] - offz
                        fxv = floor((qx - f_ox) * f_inv)
                        fyv = floor((qy - f_oy) * f_inv)
                        fzv = floor((qz - f_oz) * f_inv)
                        if (fxv < 0.0 or fyv < 0.0 or fzv < 0.0 or
                                fxv >= <double> fn0 or fyv >= <double> fn1 or fzv >= <double> fn2):
                            sigbuf[t] = 1.0
                        else:
                            sigbuf[t] = sig_f[<Py_ssize_t> fxv, <Py_ssize_t> fyv, <Py_ssize_t> fzv]
                        acc += sigbuf[t]
                    if acc / <double> m - 0.5 - pad > best_eff:
                        continue
                    suffix[m - 1] = sigbuf[m - 1]
                    for t in range(m - 2, -1, -1):
                        suffix[t] = suffix[t + 1] + sigbuf[t]
                need = (best_eff + 0.5 + pad) * <double> m
                acc = 0.0
                completed = True
                for t in range(m):
                    im = order[t]
                    qx = q[im, 0] - offx
                    qy = q[im, 1]
                    qz = q[im, 2] - offz
                    d = -1.0
                    if has_field:
                        if sigbuf[t] >= 1.0:
                            d = cap
                    if d < 0.0:
                        d = index._nn(qx, qy, qz, cap)
                    acc += _sigmoid(alpha * d)
                    if t + 1 < m:
                        if has_field:
                            if acc + suffix[t + 1] > need:
                                completed = False
                                break
                        elif acc + 0.5 * <double> (m - t - 1) > need:
                            completed = False
                            break
                if not completed:
                    continue
                loss = acc / <double> m - 0.5
            if loss < best or (loss == best and g < g_best):
                best = loss
                g_best = g
    free(sigbuf)
    return g_best, best
