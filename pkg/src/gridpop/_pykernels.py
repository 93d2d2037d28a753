"""Pure-Python/numpy versions of the raster kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``GRIDPOP_PURE_PYTHON=1`` is set. Results match the compiled kernels exactly.
"""
import math

import numpy as np


def _envelope_1d(f):
    # Felzenszwalb-Huttenlocher lower envelope of parabolas, exact in integers
    # as long as the breakpoints are compared as rationals; we keep float
    # breakpoints but evaluate the final distances in int64.
    n = f.shape[0]
    out = np.empty(n, dtype=np.int64)
    big = np.iinfo(np.int64).max
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = -1
    for q in range(n):
        if f[q] == big:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -math.inf
            z[1] = math.inf
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -math.inf
            z[1] = math.inf
            continue
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = math.inf
    if k < 0:
        out[:] = big
        return out
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        out[q] = (q - p) * (q - p) + f[p]
    return out


def edt_squared(mask):
    """Squared Euclidean distance (in cells) from every cell to the nearest
    nonzero cell of ``mask``.

    Two separable passes: a column scan producing 1-D distances, then the
    lower-envelope transform along each row. Cells get ``INT64_MAX`` when the
    mask is empty.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    nrows, ncols = mask.shape
    big = np.iinfo(np.int64).max
    col = np.full((nrows, ncols), big, dtype=np.int64)
    # column pass: vertical distance to nearest feature, vectorized across columns
    inf = nrows + ncols + 1
    down = np.full(ncols, inf, dtype=np.int64)
    g = np.empty((nrows, ncols), dtype=np.int64)
    for r in range(nrows):
        down = np.where(mask[r] != 0, 0, down + 1)
        g[r] = down
    up = np.full(ncols, inf, dtype=np.int64)
    for r in range(nrows - 1, -1, -1):
        up = np.where(mask[r] != 0, 0, up + 1)
        g[r] = np.minimum(g[r], up)
    reach = g < inf
    col[reach] = g[reach] * g[reach]
    out = np.empty_like(col)
    for r in range(nrows):
        out[r] = _envelope_1d(col[r])
    return out


def label8(mask):
    """Label 8-connected components of nonzero cells.

    Returns ``(labels, n)`` with labels ``1..n`` in raster scan order of each
    component's first cell, and 0 for background.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8) != 0
    nrows, ncols = mask.shape
    labels = np.zeros((nrows, ncols), dtype=np.int64)
    if not mask.any():
        return labels.astype(np.int32), 0
    # min-label propagation with pointer jumping on a flat index image
    idx = np.arange(nrows * ncols, dtype=np.int64).reshape(nrows, ncols)
    big = nrows * ncols
    lab = np.where(mask, idx, big)
    pad = np.full((nrows + 2, ncols + 2), big, dtype=np.int64)
    while True:
        pad[1:-1, 1:-1] = lab
        best = lab.copy()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nb = pad[1 + dr:1 + dr + nrows, 1 + dc:1 + dc + ncols]
                np.minimum(best, nb, out=best)
        best = np.where(mask, best, big)
        flat = best.ravel()
        # jump: label -> label of the cell the label points at
        fg = flat < big
        while True:
            nxt = flat.copy()
            nxt[fg] = flat[flat[fg]]
            if np.array_equal(nxt, flat):
                break
            flat = nxt
        best = flat.reshape(nrows, ncols)
        if np.array_equal(best, lab):
            break
        lab = best
    roots = lab[mask]
    uniq, inverse = np.unique(roots, return_inverse=True)
    # unique() sorts by root flat index, which is the scan order of first cells
    labels[mask] = inverse + 1
    return labels.astype(np.int32), int(uniq.size)


def _cover_range(lo, hi, origin, size, n):
    """Indices i in [0, n) whose closed interval [origin + i*size,
    origin + (i+1)*size] meets the closed interval [lo, hi]."""
    a = math.ceil((lo - origin) / size - 1.0)
    b = math.floor((hi - origin) / size)
    return max(a, 0), min(b, n - 1)


def supercover_segments(segments, x0, y0, tile_size, nrows, ncols):
    """Mark every tile whose closed box meets one of the segments.

    ``segments`` is an (m, 4) array of ``x1, y1, x2, y2``. Tile ``(r, c)``
    spans ``[x0 + c*ts, x0 + (c+1)*ts] x [y0 - (r+1)*ts, y0 - r*ts]``.
    """
    out = np.zeros((nrows, ncols), dtype=np.uint8)
    segs = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    for x1, y1, x2, y2 in segs:
        if (x2, y2) < (x1, y1):
            x1, y1, x2, y2 = x2, y2, x1, y1
        c_lo, c_hi = _cover_range(x1, x2, x0, tile_size, ncols)
        for c in range(c_lo, c_hi + 1):
            if x1 == x2:
                ya, yb = y1, y2
            else:
                xa = max(x1, x0 + c * tile_size)
                xb = min(x2, x0 + (c + 1) * tile_size)
                if xa > xb:
                    continue
                slope = (y2 - y1) / (x2 - x1)
                ya = y1 + (xa - x1) * slope if xa != x1 else y1
                yb = y1 + (xb - x1) * slope if xb != x2 else y2
            ylo, yhi = (ya, yb) if ya <= yb else (yb, ya)
            # rows measured downward from y0
            r_lo, r_hi = _cover_range(y0 - yhi, y0 - ylo, 0.0, tile_size, nrows)
            if r_lo <= r_hi:
                out[r_lo:r_hi + 1, c] = 1
    return out


def rasterize_discs(points, radius, x0, y0, cell_size, nrows, ncols):
    """Set every cell whose center lies within ``radius`` of a point."""
    out = np.zeros((nrows, ncols), dtype=np.uint8)
    r2 = radius * radius
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    for px, py in pts:
        c_lo = max(math.floor((px - radius - x0) / cell_size), 0)
        c_hi = min(math.floor((px + radius - x0) / cell_size), ncols - 1)
        r_lo = max(math.floor((y0 - py - radius) / cell_size), 0)
        r_hi = min(math.floor((y0 - py + radius) / cell_size), nrows - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue
        cx = x0 + (np.arange(c_lo, c_hi + 1) + 0.5) * cell_size - px
        cy = y0 - (np.arange(r_lo, r_hi + 1) + 0.5) * cell_size - py
        inside = cy[:, None] ** 2 + cx[None, :] ** 2 <= r2
        out[r_lo:r_hi + 1, c_lo:c_hi + 1] |= inside.astype(np.uint8)
    return out


def fista_huber_l1(X, y, delta, lam, coef0, b0, L, L_bound, max_iter, tol):
    """Monotone accelerated proximal gradient for
    mean(huber(y - b - X beta)) + lam * ||beta||_1.

    Returns ``(coef, b, objective, trace, n_iter, converged)``.
    """
    n = X.shape[0]
    coef = np.array(coef0, dtype=np.float64)
    b = float(b0)

    def smooth(b_, beta):
        r = y - b_ - X @ beta
        a = np.abs(r)
        h = np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)
        return float(np.mean(h)), r

    f_x, _ = smooth(b, coef)
    F_x = f_x + lam * float(np.sum(np.abs(coef)))
    trace = [F_x]
    yb, ycoef = b, coef.copy()
    t = 1.0
    momentum = False
    for it in range(1, max_iter + 1):
        f_y, r_y = smooth(yb, ycoef)
        psi = np.clip(r_y, -delta, delta)
        gb = -float(np.mean(psi))
        gcoef = -(X.T @ psi) / n
        while True:
            zb = yb - gb / L
            u = ycoef - gcoef / L
            zcoef = np.sign(u) * np.maximum(np.abs(u) - lam / L, 0.0)
            f_z, _ = smooth(zb, zcoef)
            db = zb - yb
            dcoef = zcoef - ycoef
            quad = f_y + gb * db + gcoef @ dcoef + 0.5 * L * (db * db + dcoef @ dcoef)
            if f_z <= quad + 1e-15 * abs(quad) or L >= L_bound * 4:
                break
            L *= 2.0
        F_z = f_z + lam * float(np.sum(np.abs(zcoef)))
        if F_z > F_x:
            if not momentum:
                # a plain proximal step cannot improve: numerically converged
                return coef, b, F_x, trace, it, True
            t = 1.0
            yb, ycoef = b, coef.copy()
            momentum = False
            continue
        decrease = F_x - F_z
        prev_b, prev_coef = b, coef
        b, coef, F_x = zb, zcoef, F_z
        trace.append(F_x)
        if decrease <= tol * abs(trace[-2]) or F_x == 0.0:
            return coef, b, F_x, trace, it, True
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        w = (t - 1.0) / t_next
        yb = b + w * (b - prev_b)
        ycoef = coef + w * (coef - prev_coef)
        momentum = w != 0.0
        t = t_next
    return coef, b, F_x, trace, max_iter, False
