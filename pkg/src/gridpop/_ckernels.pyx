# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels. Same signatures and results as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs, sqrt, INFINITY

cnp.import_array()

cdef cnp.int64_t BIG = 0x7FFFFFFFFFFFFFFF


cdef void _envelope(cnp.int64_t[:] f, cnp.int64_t[:] out,
                    cnp.int64_t[:] v, double[:] z) noexcept nogil:
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t q, p, j
    cdef Py_ssize_t k = -1
    cdef double s
    for q in range(n):
        if f[q] == BIG:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        while True:
            p = v[k]
            s = (<double>((f[q] + q * q) - (f[p] + p * p))) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            out[q] = BIG
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        out[q] = (q - p) * (q - p) + f[p]


def edt_squared(mask):
    cdef cnp.uint8_t[:, :] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t nrows = m.shape[0], ncols = m.shape[1]
    cdef cnp.int64_t[:, :] col = np.empty((nrows, ncols), dtype=np.int64)
    out_arr = np.empty((nrows, ncols), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    cdef cnp.int64_t[:] v = np.zeros(ncols, dtype=np.int64)
    cdef double[:] z = np.empty(ncols + 1, dtype=np.float64)
    cdef Py_ssize_t r, c
    cdef cnp.int64_t d, inf = nrows + ncols + 1
    with nogil:
        for c in range(ncols):
            d = inf
            for r in range(nrows):
                if m[r, c]:
                    d = 0
                elif d < inf:
                    d += 1
                col[r, c] = d
            d = inf
            for r in range(nrows - 1, -1, -1):
                if m[r, c]:
                    d = 0
                elif d < inf:
                    d += 1
                if d < col[r, c]:
                    col[r, c] = d
            for r in range(nrows):
                d = col[r, c]
                col[r, c] = BIG if d >= inf else d * d
        for r in range(nrows):
            _envelope(col[r], out[r], v, z)
    return out_arr


cdef Py_ssize_t _find(cnp.int64_t[:] parent, Py_ssize_t a) noexcept nogil:
    cdef Py_ssize_t root = a, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


cdef void _union(cnp.int64_t[:] parent, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label8(mask):
    cdef cnp.uint8_t[:, :] m = np.ascontiguousarray(np.asarray(mask) != 0, dtype=np.uint8)
    cdef Py_ssize_t nrows = m.shape[0], ncols = m.shape[1]
    labels_arr = np.zeros((nrows, ncols), dtype=np.int32)
    cdef cnp.int32_t[:, :] labels = labels_arr
    cdef cnp.int64_t[:] parent = np.arange(nrows * ncols, dtype=np.int64)
    cdef cnp.int64_t[:] remap = np.zeros(nrows * ncols, dtype=np.int64)
    cdef Py_ssize_t r, c, i, root
    cdef cnp.int64_t n = 0
    with nogil:
        for r in range(nrows):
            for c in range(ncols):
                if not m[r, c]:
                    continue
                i = r * ncols + c
                if c > 0 and m[r, c - 1]:
                    _union(parent, i, i - 1)
                if r > 0:
                    if m[r - 1, c]:
                        _union(parent, i, i - ncols)
                    if c > 0 and m[r - 1, c - 1]:
                        _union(parent, i, i - ncols - 1)
                    if c + 1 < ncols and m[r - 1, c + 1]:
                        _union(parent, i, i - ncols + 1)
        # roots are the minimum flat index of each component, i.e. its first
        # cell in scan order, so numbering roots in scan order is canonical
        for r in range(nrows):
            for c in range(ncols):
                if not m[r, c]:
                    continue
                i = r * ncols + c
                root = _find(parent, i)
                if root == i:
                    n += 1
                    remap[i] = n
                labels[r, c] = <cnp.int32_t>remap[root]
    return labels_arr, int(n)


cdef inline void _cover_range(double lo, double hi, double origin, double size,
                              Py_ssize_t n, Py_ssize_t* a, Py_ssize_t* b) noexcept nogil:
    cdef double fa = ceil((lo - origin) / size - 1.0)
    cdef double fb = floor((hi - origin) / size)
    if fa < 0:
        fa = 0
    if fb > n - 1:
        fb = n - 1
    a[0] = <Py_ssize_t>fa
    b[0] = <Py_ssize_t>fb


def supercover_segments(segments, double x0, double y0, double tile_size,
                        Py_ssize_t nrows, Py_ssize_t ncols):
    cdef double[:, :] segs = np.ascontiguousarray(
        np.asarray(segments, dtype=np.float64).reshape(-1, 4))
    out_arr = np.zeros((nrows, ncols), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef Py_ssize_t s, c, r, c_lo, c_hi, r_lo, r_hi
    cdef double x1, y1, x2, y2, xa, xb, ya, yb, ylo, yhi, slope
    with nogil:
        for s in range(segs.shape[0]):
            x1 = segs[s, 0]; y1 = segs[s, 1]; x2 = segs[s, 2]; y2 = segs[s, 3]
            if x2 < x1 or (x2 == x1 and y2 < y1):
                x1, y1, x2, y2 = x2, y2, x1, y1
            _cover_range(x1, x2, x0, tile_size, ncols, &c_lo, &c_hi)
            for c in range(c_lo, c_hi + 1):
                if x1 == x2:
                    ya = y1
                    yb = y2
                else:
                    xa = x0 + c * tile_size
                    if x1 > xa:
                        xa = x1
                    xb = x0 + (c + 1) * tile_size
                    if x2 < xb:
                        xb = x2
                    if xa > xb:
                        continue
                    slope = (y2 - y1) / (x2 - x1)
                    ya = y1 if xa == x1 else y1 + (xa - x1) * slope
                    yb = y2 if xb == x2 else y1 + (xb - x1) * slope
                if ya <= yb:
                    ylo = ya
                    yhi = yb
                else:
                    ylo = yb
                    yhi = ya
                _cover_range(y0 - yhi, y0 - ylo, 0.0, tile_size, nrows, &r_lo, &r_hi)
                for r in range(r_lo, r_hi + 1):
                    out[r, c] = 1
    return out_arr


def rasterize_discs(points, double radius, double x0, double y0,
                    double cell_size, Py_ssize_t nrows, Py_ssize_t ncols):
    cdef double[:, :] pts = np.ascontiguousarray(
        np.asarray(points, dtype=np.float64).reshape(-1, 2))
    out_arr = np.zeros((nrows, ncols), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef double r2 = radius * radius, px, py, cx, cy
    cdef Py_ssize_t i, r, c, c_lo, c_hi, r_lo, r_hi
    with nogil:
        for i in range(pts.shape[0]):
            px = pts[i, 0]
            py = pts[i, 1]
            c_lo = <Py_ssize_t>floor((px - radius - x0) / cell_size)
            c_hi = <Py_ssize_t>floor((px + radius - x0) / cell_size)
            r_lo = <Py_ssize_t>floor((y0 - py - radius) / cell_size)
            r_hi = <Py_ssize_t>floor((y0 - py + radius) / cell_size)
            if c_lo < 0:
                c_lo = 0
            if r_lo < 0:
                r_lo = 0
            if c_hi > ncols - 1:
                c_hi = ncols - 1
            if r_hi > nrows - 1:
                r_hi = nrows - 1
            for r in range(r_lo, r_hi + 1):
                cy = y0 - (r + 0.5) * cell_size - py
                for c in range(c_lo, c_hi + 1):
                    cx = x0 + (c + 0.5) * cell_size - px
                    if cy * cy + cx * cx <= r2:
                        out[r, c] = 1
    return out_arr


cdef double _residual_loss(const double[:, ::1] X, const double[::1] y, double b,
                           const double[::1] beta, double delta, double[::1] r) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double acc, a, total = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(p):
            acc += X[i, j] * beta[j]
        r[i] = y[i] - b - acc
        a = fabs(r[i])
        if a <= delta:
            total += 0.5 * r[i] * r[i]
        else:
            total += delta * a - 0.5 * delta * delta
    return total / n


cdef double _l1(const double[::1] v) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(v.shape[0]):
        s += fabs(v[j])
    return s


def fista_huber_l1(X, y, double delta, double lam, coef0, double b0, double L,
                   double L_bound, Py_ssize_t max_iter, double tol):
    """Compiled counterpart of ``_pykernels.fista_huber_l1``."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], i, j, it
    cdef double[::1] coef = np.array(coef0, dtype=np.float64)
    cdef double[::1] prev = np.empty(p)
    cdef double[::1] ycoef = np.array(coef0, dtype=np.float64)
    cdef double[::1] zcoef = np.empty(p)
    cdef double[::1] g = np.empty(p)
    cdef double[::1] r = np.empty(n)
    cdef double[::1] rz = np.empty(n)
    cdef double[::1] trace = np.empty(max_iter + 1)
    cdef double b = b0, yb = b0, zb, prev_b, gb, u, thr, ps
    cdef double f_x, F_x, f_y, f_z, F_z, quad, db, dot, sq, decrease
    cdef double t = 1.0, t_next, w
    cdef bint momentum = False, converged = False
    cdef Py_ssize_t m = 1, n_iter = max_iter

    with nogil:
        f_x = _residual_loss(Xv, yv, b, coef, delta, r)
        F_x = f_x + lam * _l1(coef)
        trace[0] = F_x
        it = 0
        while it < max_iter:
            it += 1
            f_y = _residual_loss(Xv, yv, yb, ycoef, delta, r)
            gb = 0.0
            for j in range(p):
                g[j] = 0.0
            for i in range(n):
                ps = r[i]
                if ps > delta:
                    ps = delta
                elif ps < -delta:
                    ps = -delta
                gb -= ps
                for j in range(p):
                    g[j] -= Xv[i, j] * ps
            gb /= n
            for j in range(p):
                g[j] /= n
            while True:
                zb = yb - gb / L
                thr = lam / L
                dot = 0.0
                sq = 0.0
                for j in range(p):
                    u = ycoef[j] - g[j] / L
                    if u > thr:
                        zcoef[j] = u - thr
                    elif u < -thr:
                        zcoef[j] = u + thr
                    else:
                        zcoef[j] = 0.0
                    dot += g[j] * (zcoef[j] - ycoef[j])
                    sq += (zcoef[j] - ycoef[j]) * (zcoef[j] - ycoef[j])
                f_z = _residual_loss(Xv, yv, zb, zcoef, delta, rz)
                db = zb - yb
                quad = f_y + gb * db + dot + 0.5 * L * (db * db + sq)
                if f_z <= quad + 1e-15 * fabs(quad) or L >= L_bound * 4:
                    break
                L *= 2.0
            F_z = f_z + lam * _l1(zcoef)
            if F_z > F_x:
                if not momentum:
                    converged = True
                    n_iter = it
                    break
                t = 1.0
                yb = b
                for j in range(p):
                    ycoef[j] = coef[j]
                momentum = False
                continue
            decrease = F_x - F_z
            prev_b = b
            for j in range(p):
                prev[j] = coef[j]
                coef[j] = zcoef[j]
            b = zb
            trace[m] = F_z
            m += 1
            if decrease <= tol * fabs(F_x) or F_z == 0.0:
                F_x = F_z
                converged = True
                n_iter = it
                break
            F_x = F_z
            t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            w = (t - 1.0) / t_next
            yb = b + w * (b - prev_b)
            for j in range(p):
                ycoef[j] = coef[j] + w * (coef[j] - prev[j])
            momentum = w != 0.0
            t = t_next
    return (np.asarray(coef), b, F_x, np.asarray(trace)[:m].tolist(), n_iter, bool(converged))
