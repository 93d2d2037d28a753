"""Huber-loss linear model with an l1 penalty, spatial folds and nested
cross-validation of log population counts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from gridpop import kernels

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.5, 1.0, 1.35, 2.0)
DEFAULT_LAMBDA_FACTORS = (0.0001, 0.001, 0.01, 0.1, 1.0)
DEFAULT_SEED = 17


class ConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = list(trace)


# ---------------------------------------------------------------------------
# Loss pieces
# ---------------------------------------------------------------------------

def huber(r, delta):
    """r^2/2 for |r| <= delta, delta*|r| - delta^2/2 beyond."""
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)


def huber_psi(r, delta):
    """Derivative of :func:`huber`."""
    return np.clip(r, -delta, delta)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def objective(X, y, intercept, coef, delta, lam):
    r = y - intercept - X @ coef
    return float(np.mean(huber(r, delta)) + lam * np.sum(np.abs(coef)))


def huber_intercept(y, delta):
    """Exact minimizer of sum(huber(y - b)) over the scalar b.

    The derivative is piecewise linear in b with breakpoints at y +/- delta,
    so the root is found by locating the bracketing breakpoints and solving
    the linear piece. On a flat stretch the midpoint is returned.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty target")

    def score(b):
        return float(np.sum(huber_psi(y - b, delta)))

    knots = np.unique(np.concatenate([y - delta, y + delta]))
    scores = np.array([score(b) for b in knots])
    # score is non-increasing in b
    zero = np.flatnonzero(scores == 0)
    if zero.size:
        return float(0.5 * (knots[zero[0]] + knots[zero[-1]]))
    j = int(np.searchsorted(-scores, 0.0))
    lo, hi = knots[j - 1], knots[j]
    s_lo, s_hi = scores[j - 1], scores[j]
    return float(lo + s_lo * (hi - lo) / (s_lo - s_hi))


def lambda_max(X, y, delta):
    """Smallest l1 weight at which the all-zero coefficient vector is optimal."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] == 0:
        return 0.0
    b = huber_intercept(y, delta)
    g = X.T @ huber_psi(y - b, delta) / X.shape[0]
    return float(np.max(np.abs(g)))


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

@dataclass
class SolverResult:
    coef: np.ndarray
    intercept: float
    objective: float
    trace: list
    n_iter: int


def fit_huber_l1(X, y, delta, lam, max_iter=10_000, tol=1e-9, coef0=None, intercept0=None):
    """Minimize mean(huber(y - b - X beta)) + lam * ||beta||_1, b unpenalized.

    Accelerated proximal gradient with backtracking on the step size and a
    restart whenever the momentum step would raise the objective, so the
    recorded objective trace never increases. Stops when a plain proximal
    step lowers the objective by less than ``tol`` relative, and raises
    :class:`ConvergenceError` after ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("no training rows")
    if y.shape != (n,):
        raise ValueError("y must have one value per row of X")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    if not delta > 0 or not lam >= 0:
        raise ValueError("need delta > 0 and lam >= 0")

    b_h = huber_intercept(y, delta)
    if p == 0 or lam >= lambda_max(X, y, delta):
        # the zero vector satisfies the optimality conditions
        coef = np.zeros(p)
        f = objective(X, y, b_h, coef, delta, lam)
        return SolverResult(coef, b_h, f, [f], 0)

    coef = np.zeros(p) if coef0 is None else np.asarray(coef0, dtype=np.float64).copy()
    b = b_h if intercept0 is None else float(intercept0)

    # Lipschitz bound of the smooth part's gradient; backtracking starts well below it
    L_bound = (np.linalg.norm(np.column_stack([np.ones(n), X]), 2) ** 2) / n
    L = max(L_bound / 64.0, 1e-12)
    coef, b, F_x, trace, n_iter, ok = kernels.fista_huber_l1(
        np.ascontiguousarray(X), y, float(delta), float(lam), coef, b, L, L_bound, int(max_iter), float(tol))
    if ok:
        return SolverResult(np.asarray(coef, dtype=np.float64), float(b), float(F_x), list(trace), int(n_iter))
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (objective {F_x!r})", trace
    )


# ---------------------------------------------------------------------------
# Targets, scaling, fitted model
# ---------------------------------------------------------------------------

def target_transform(counts):
    """log(1 + count)."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("population counts must be non-negative")
    return np.log1p(counts)


def inverse_transform(values):
    """max(0, exp(v) - 1)."""
    return np.maximum(0.0, np.expm1(np.asarray(values, dtype=np.float64)))


@dataclass
class FittedModel:
    feature_names: list
    coefficients: list
    intercept: float
    means: list
    stds: list
    dropped: list
    delta: float
    lam: float
    target_center: float = 0.0
    target_scale: float = 1.0
    lambda_factor: float | None = None
    fold: int | None = None
    seed: int | None = None
    n_train: int = 0
    objective: float = 0.0
    n_iter: int = 0
    extra: dict = field(default_factory=dict)

    def predict_log(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        keep = [i for i, name in enumerate(self.feature_names) if name not in self.dropped]
        mu = np.asarray(self.means)[keep]
        sd = np.asarray(self.stds)[keep]
        coef = np.asarray(self.coefficients)[keep]
        z = (X[:, keep] - mu) / sd
        return self.target_center + self.target_scale * (self.intercept + z @ coef)

    def predict(self, X):
        """Predicted counts (clamped at zero)."""
        return inverse_transform(self.predict_log(X))

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        fields = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**fields)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _scaler(X):
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    dropped = ~(stds > 1e-12 * np.maximum(1.0, np.abs(means)))
    return means, np.where(dropped, 1.0, stds), dropped


@dataclass
class _Prepared:
    Z: np.ndarray
    y: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    dropped: np.ndarray
    center: float
    scale: float


def _prepare(X, log_y):
    means, stds, dropped = _scaler(X)
    Z = ((X - means) / stds)[:, ~dropped]
    center = float(np.mean(log_y))
    scale = float(np.std(log_y))
    if not scale > 0:
        scale = 1.0
    return _Prepared(Z, (log_y - center) / scale, means, stds, dropped, center, scale)


def _wrap(prep, names, res, delta, lam, **kw):
    coef = np.zeros(len(names))
    coef[~prep.dropped] = res.coef
    return FittedModel(
        feature_names=list(names),
        coefficients=coef.tolist(),
        intercept=float(res.intercept),
        means=prep.means.tolist(),
        stds=prep.stds.tolist(),
        dropped=[n for n, d in zip(names, prep.dropped) if d],
        delta=float(delta),
        lam=float(lam),
        target_center=prep.center,
        target_scale=prep.scale,
        n_train=int(prep.Z.shape[0]),
        objective=float(res.objective),
        n_iter=int(res.n_iter),
        **kw,
    )


def fit_model(X, counts, names, delta, lam=None, lambda_factor=None, **kw) -> FittedModel:
    """Standardize features and log targets, then fit. Give either an
    absolute ``lam`` or ``lambda_factor`` relative to the data's lambda_max."""
    X = np.asarray(X, dtype=np.float64)
    prep = _prepare(X, target_transform(counts))
    if lam is None:
        lam = lambda_factor * lambda_max(prep.Z, prep.y, delta)
    res = fit_huber_l1(prep.Z, prep.y, delta, lam)
    return _wrap(prep, names, res, delta, lam, lambda_factor=lambda_factor, **kw)


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

@dataclass
class FoldAssignment:
    folds: dict            # (roi, tile_id) -> fold index
    k: int
    per_roi: bool = True

    def fold_of(self, keys):
        return np.array([self.folds[k] for k in keys], dtype=np.int64)


def _bisect(order_keys, members, k, axis, out, base):
    """Recursively split ``members`` into ``k`` contiguous groups, alternating
    the split axis (0 = easting, 1 = northing)."""
    if k == 1:
        for m in members:
            out[m] = base
        return
    k_left = k // 2
    ranked = sorted(members, key=lambda m: (order_keys[m][axis], order_keys[m][2]))
    cut = int(round(len(ranked) * k_left / k))
    _bisect(order_keys, ranked[:cut], k_left, 1 - axis, out, base)
    _bisect(order_keys, ranked[cut:], k - k_left, 1 - axis, out, base + k_left)


def spatial_kfold(keys, x, y, k=4) -> FoldAssignment:
    """Spatially contiguous folds per ROI by recursive median splits.

    For ``k=4``: split at the median easting, then each half at its median
    northing (folds 0/1 west south/north, 2/3 east south/north). Ties are
    broken by tile id.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    keys = list(keys)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    by_roi = {}
    for i, (roi, tid) in enumerate(keys):
        by_roi.setdefault(roi, []).append(i)
    out = {}
    for roi, members in by_roi.items():
        if len(members) < k:
            raise ValueError(f"ROI {roi!r} has {len(members)} tiles, fewer than {k} folds")
        if np.ptp(x[members]) == 0 and np.ptp(y[members]) == 0:
            logger.warning("all tiles of ROI %r share one location; folds follow tile id order", roi)
        order_keys = {i: (x[i], y[i], keys[i][1]) for i in members}
        assign = {}
        _bisect(order_keys, members, k, 0, assign, 0)
        for i, f in assign.items():
            out[keys[i]] = f
    return FoldAssignment(out, k, True)


def inner_folds(rois, k, seed):
    """Seeded random fold labels, balanced within each ROI."""
    rng = np.random.default_rng(seed)
    rois = np.asarray(rois, dtype=object)
    out = np.empty(rois.shape[0], dtype=np.int64)
    for roi in dict.fromkeys(rois.tolist()):
        idx = np.flatnonzero(rois == roi)
        perm = rng.permutation(idx.size)
        out[idx[perm]] = np.arange(idx.size) % k
    return out


def null_model(train_counts):
    """Constant predictor equal to the mean training count."""
    train_counts = np.asarray(train_counts, dtype=np.float64)
    if train_counts.size == 0:
        raise ValueError("null model needs at least one training row")
    mean = float(train_counts.mean())

    def predict(n_or_X):
        n = n_or_X if isinstance(n_or_X, (int, np.integer)) else len(n_or_X)
        return np.full(n, mean)

    predict.mean = mean
    return predict


# ---------------------------------------------------------------------------
# Nested cross-validation
# ---------------------------------------------------------------------------

def _meae(obs, pred):
    return float(np.median(np.abs(np.asarray(obs, float) - np.asarray(pred, float))))


@dataclass
class ModelHyperparams:
    deltas: tuple = DEFAULT_DELTAS
    lambda_factors: tuple = DEFAULT_LAMBDA_FACTORS
    inner_k: int = 3

    def __post_init__(self):
        self.deltas = tuple(float(d) for d in self.deltas)
        self.lambda_factors = tuple(float(v) for v in self.lambda_factors)
        if not self.deltas or not self.lambda_factors:
            raise ValueError("hyperparameter grids must be non-empty")
        if any(not d > 0 for d in self.deltas):
            raise ValueError("delta values must be positive")
        if any(v < 0 for v in self.lambda_factors):
            raise ValueError("lambda factors must be non-negative")


@dataclass
class CVResult:
    models: list
    keys: list
    fold: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray
    null_predicted: np.ndarray
    selection: list

    def predictions_csv(self):
        lines = ["tile_id,roi,fold,observed,predicted"]
        for (roi, tid), f, o, p in zip(self.keys, self.fold, self.observed, self.predicted):
            lines.append(f"{tid},{roi},{int(f)},{int(o)},{float(p)!r}")
        return "\n".join(lines) + "\n"


def _select(X, counts, rois, names, grids: ModelHyperparams, seed):
    """Inner CV over the (delta, lambda) grid; returns the chosen pair and
    the score table."""
    inner = inner_folds(rois, grids.inner_k, seed)
    for f in range(grids.inner_k):
        if not (inner == f).any() or (inner != f).sum() == 0:
            raise ValueError(f"inner fold {f} is empty")
    prep_full = _prepare(X, target_transform(counts))
    scores = []
    for delta in grids.deltas:
        lmax = lambda_max(prep_full.Z, prep_full.y, delta)
        lams = [fac * lmax for fac in grids.lambda_factors]
        per = np.zeros(len(lams))
        for f in range(grids.inner_k):
            tr, va = inner != f, inner == f
            prep = _prepare(X[tr], target_transform(counts[tr]))
            coef = b = None
            # warm start from large to small penalty
            for j in sorted(range(len(lams)), key=lambda j: -lams[j]):
                res = fit_huber_l1(prep.Z, prep.y, delta, lams[j], coef0=coef, intercept0=b)
                coef, b = res.coef, res.intercept
                model = _wrap(prep, names, res, delta, lams[j])
                per[j] += _meae(counts[va], model.predict(X[va]))
        per /= grids.inner_k
        for fac, lam, s in zip(grids.lambda_factors, lams, per):
            scores.append({"delta": delta, "lambda_factor": fac, "lam": lam, "inner_meae": float(s)})
    best = min(range(len(scores)), key=lambda i: scores[i]["inner_meae"])
    return scores[best], scores


def nested_cv_train(features, survey, outer: FoldAssignment, grids: ModelHyperparams | None = None,
                    seed=DEFAULT_SEED, threads=1, names=None) -> CVResult:
    """Outer spatial CV with inner random 3-fold selection of (delta, lambda).

    Returns per-fold models and pooled held-out predictions in survey order.
    """
    grids = grids or ModelHyperparams()
    names = features.names if names is None else list(names)
    active = survey.active()
    keys = active.keys()
    index = {k: i for i, k in enumerate(features.keys())}
    missing = [k for k in keys if k not in index]
    if missing:
        raise ValueError(f"{len(missing)} survey tiles have no complete features: {missing[:20]}")
    rows = np.array([index[k] for k in keys], dtype=np.int64)
    X = features.matrix(names)[rows]
    counts = active.observed_count.astype(np.float64)
    rois = np.asarray(active.roi_label, dtype=object)
    fold = outer.fold_of(keys)

    def run(f):
        tr = np.flatnonzero(fold != f)
        va = np.flatnonzero(fold == f)
        if va.size == 0:
            raise ValueError(f"outer fold {f} is empty")
        choice, scores = _select(X[tr], counts[tr], rois[tr], names, grids, [seed, f])
        model = fit_model(X[tr], counts[tr], names, choice["delta"], lam=choice["lam"],
                          lambda_factor=choice["lambda_factor"], fold=f, seed=seed)
        model.extra = {"inner_scores": scores}
        return f, model, va, model.predict(X[va]), float(counts[tr].mean())

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(run, range(outer.k)))

    predicted = np.empty(len(keys))
    null_pred = np.empty(len(keys))
    models, selection = [], []
    for f, model, va, pred, null_mean in results:
        predicted[va] = pred
        null_pred[va] = null_mean
        models.append(model)
        selection.append({"fold": f, "delta": model.delta, "lambda_factor": model.lambda_factor,
                          "lam": model.lam})
    return CVResult(models, keys, fold, counts, predicted, null_pred, selection)
