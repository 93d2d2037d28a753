"""Independent reference implementations used by the tests."""
import numpy as np

from gridpop.regression import huber


def brute_edt(mask):
    """Squared distance from every cell to the nearest set cell, O(n^2 m)."""
    on = np.argwhere(mask)
    rr, cc = np.indices(mask.shape)
    d = (rr[..., None] - on[:, 0]) ** 2 + (cc[..., None] - on[:, 1]) ** 2
    return d.min(axis=-1)


def _best_on_grid(X, y, delta, lam, b1, b2):
    B = np.stack([b1.ravel(), b2.ravel()], axis=1)
    R = y[None, :] - B @ X.T
    # exact intercept per grid point: bisection on the monotone score
    lo, hi = R.min(axis=1) - 1, R.max(axis=1) + 1
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        s = np.clip(R - mid[:, None], -delta, delta).sum(axis=1)
        lo, hi = np.where(s > 0, mid, lo), np.where(s > 0, hi, mid)
    c = 0.5 * (lo + hi)
    f = huber(R - c[:, None], delta).mean(axis=1) + lam * np.abs(B).sum(axis=1)
    i = int(np.argmin(f))
    return float(f[i]), B[i]


def grid_search_objective(X, y, delta, lam, step=1e-3, coarse=0.05):
    """Minimum objective over beta in [-5, 5]^2: a coarse sweep, then every
    1e-3 step in a window around the coarse optimum."""
    g = np.round(np.arange(-5, 5 + coarse / 2, coarse), 10)
    f, b = _best_on_grid(X, y, delta, lam, *np.meshgrid(g, g))
    fine = np.arange(-1.2 * coarse, 1.2 * coarse + step / 2, step)
    w1 = np.clip(b[0] + fine, -5, 5)
    w2 = np.clip(b[1] + fine, -5, 5)
    f2, _ = _best_on_grid(X, y, delta, lam, *np.meshgrid(w1, w2))
    return min(f, f2)
