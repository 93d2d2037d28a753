"""Error metrics over pooled held-out predictions, reports and the
predicted-vs-observed scatter."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

METRIC_KEYS = ("R2", "MeAPE", "aMeAPE", "MeAE", "AggPE")
NULL_ROW = "Null Model"


def _pair(observed, predicted):
    y = np.asarray(observed, dtype=np.float64).ravel()
    yhat = np.asarray(predicted, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"observed and predicted lengths differ: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("no rows to evaluate")
    return y, yhat


def r2(observed, predicted):
    """1 - SS_res / SS_tot around the mean of ``observed``."""
    y, yhat = _pair(observed, predicted)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("R2 undefined for a constant observed vector")
    return float(1.0 - np.sum((y - yhat) ** 2) / ss_tot)


def meae(observed, predicted):
    """Median absolute error (persons)."""
    y, yhat = _pair(observed, predicted)
    return float(np.median(np.abs(y - yhat)))


def meape_with_skips(observed, predicted):
    """MeAPE in percent over rows with observed > 0, and the skipped count."""
    y, yhat = _pair(observed, predicted)
    pos = y > 0
    if not pos.any():
        raise ValueError("MeAPE undefined: every observed count is zero")
    value = float(np.median(np.abs(y[pos] - yhat[pos]) / y[pos]) * 100.0)
    return value, int((~pos).sum())


def meape(observed, predicted):
    return meape_with_skips(observed, predicted)[0]


def ameape(observed, predicted):
    """Median of |y - yhat| / (y + 10)."""
    y, yhat = _pair(observed, predicted)
    return float(np.median(np.abs(y - yhat) / (y + 10.0)))


def aggpe(observed, predicted, subset=None):
    """Absolute error of the summed population over ``subset`` (boolean mask
    or indices; all rows by default), in percent of the observed total."""
    y, yhat = _pair(observed, predicted)
    if subset is not None:
        y, yhat = y[subset], yhat[subset]
    total = y.sum()
    if not total > 0:
        raise ValueError("AggPE undefined: observed total is zero")
    return float(abs(total - yhat.sum()) / total * 100.0)


def all_metrics(observed, predicted):
    value, skipped = meape_with_skips(observed, predicted)
    return {
        "R2": r2(observed, predicted),
        "MeAPE": value,
        "aMeAPE": ameape(observed, predicted),
        "MeAE": meae(observed, predicted),
        "AggPE": aggpe(observed, predicted),
    }, skipped


@dataclass
class MetricsReport:
    rows: dict                     # row label -> {metric key: value}
    aggpe_sets: dict               # row label -> {set name: AggPE %}
    n_rows: int
    meape_skipped: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def read_predictions(path):
    """Rows of a pooled predictions CSV as a dict of arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"tile_id", "roi", "fold", "observed", "predicted"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: predictions CSV needs columns {sorted(need)}")
        rows = list(reader)
    keys = [(r["roi"], int(r["tile_id"])) for r in rows]
    seen = set()
    dup = [k for k in keys if k in seen or seen.add(k)]
    if dup:
        raise ValueError(f"{path}: duplicate tiles {dup[:10]}")
    return {
        "tile_id": np.array([k[1] for k in keys], dtype=np.int64),
        "roi": np.array([k[0] for k in keys], dtype=object),
        "fold": np.array([int(r["fold"]) for r in rows], dtype=np.int64),
        "observed": np.array([float(r["observed"]) for r in rows]),
        "predicted": np.array([float(r["predicted"]) for r in rows]),
    }


def pooled_null_predictions(observed, fold):
    """Each row predicted by the mean observed count of the other folds."""
    observed = np.asarray(observed, dtype=np.float64)
    fold = np.asarray(fold)
    out = np.empty_like(observed)
    for f in np.unique(fold):
        train = fold != f
        if not train.any():
            raise ValueError("null model needs rows outside the validation fold")
        out[fold == f] = observed[train].mean()
    return out


def _sets(roi):
    sets = {"overall": np.ones(roi.shape[0], dtype=bool)}
    for label in sorted(set(roi.tolist())):
        sets[str(label)] = roi == label
    return sets


def pooled_report(preds, expected_keys=None, config=None) -> MetricsReport:
    """Five metrics for the model and the null model on pooled predictions.

    ``preds`` is the dict returned by :func:`read_predictions`. When
    ``expected_keys`` (the non-excluded survey tiles) is given, the
    predictions must cover exactly those tiles.
    """
    keys = list(zip(preds["roi"].tolist(), preds["tile_id"].tolist()))
    if expected_keys is not None:
        got, want = set(keys), set(expected_keys)
        if got != want:
            raise ValueError(
                f"predictions cover {len(got)} tiles; missing {sorted(want - got)[:10]}, "
                f"unexpected {sorted(got - want)[:10]}"
            )
    y = preds["observed"]
    null = pooled_null_predictions(y, preds["fold"])
    rows, agg = {}, {}
    skipped = 0
    sets = _sets(preds["roi"])
    for label, yhat in (("Model", preds["predicted"]), (NULL_ROW, null)):
        metrics, skipped = all_metrics(y, yhat)
        rows[label] = metrics
        agg[label] = {name: aggpe(y, yhat, mask) for name, mask in sets.items() if y[mask].sum() > 0}
    return MetricsReport(rows, agg, int(y.size), skipped, config or {})


def write_comparison_csv(preds, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tile_id", "roi", "fold", "observed", "predicted", "abs_error"])
        for i in range(preds["tile_id"].size):
            o, p = preds["observed"][i], preds["predicted"][i]
            w.writerow([int(preds["tile_id"][i]), preds["roi"][i], int(preds["fold"][i]),
                        repr(float(o)), repr(float(p)), repr(float(abs(o - p)))])


def scatter_svg(observed, predicted, roi=None, size=600, title="Predicted vs observed"):
    """600x600 SVG scatter on log10(1 + count) axes with the identity line."""
    y = np.log10(1.0 + np.asarray(observed, dtype=np.float64))
    p = np.log10(1.0 + np.maximum(np.asarray(predicted, dtype=np.float64), 0.0))
    top = max(1.0, math.ceil(max(y.max(initial=0.0), p.max(initial=0.0)) * 2) / 2)
    margin = 60
    span = size - 2 * margin

    def sx(v):
        return margin + v / top * span

    def sy(v):
        return size - margin - v / top * span

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    labels = sorted(set(roi.tolist())) if roi is not None else [""]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<text x="{size / 2}" y="30" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(top)}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(0)}" y2="{sy(top)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(top)}" y2="{sy(top)}" stroke="gray" '
        f'stroke-dasharray="6,4"/>',
    ]
    tick = 0.0
    while tick <= top + 1e-9:
        parts.append(f'<text x="{sx(tick)}" y="{size - margin + 20}" text-anchor="middle" '
                     f'font-size="11">{tick:g}</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(tick) + 4}" text-anchor="end" '
                     f'font-size="11">{tick:g}</text>')
        tick += 0.5
    parts.append(f'<text x="{size / 2}" y="{size - 15}" text-anchor="middle" font-size="13">'
                 f'log10(1 + observed)</text>')
    parts.append(f'<text x="18" y="{size / 2}" text-anchor="middle" font-size="13" '
                 f'transform="rotate(-90 18 {size / 2})">log10(1 + predicted)</text>')
    for i in range(y.size):
        color = palette[labels.index(roi[i]) % len(palette)] if roi is not None else palette[0]
        parts.append(f'<circle cx="{sx(y[i]):.2f}" cy="{sy(p[i]):.2f}" r="3" fill="{color}" '
                     f'fill-opacity="0.7"/>')
    if roi is not None:
        for j, label in enumerate(labels):
            parts.append(f'<circle cx="{margin + 10}" cy="{margin + 10 + 18 * j}" r="4" '
                         f'fill="{palette[j % len(palette)]}"/>')
            parts.append(f'<text x="{margin + 20}" y="{margin + 14 + 18 * j}" font-size="12">'
                         f'{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(report: MetricsReport, preds, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    write_comparison_csv(preds, out_dir / "pred_vs_obs.csv")
    (out_dir / "scatter.svg").write_text(
        scatter_svg(preds["observed"], preds["predicted"], preds["roi"]), encoding="utf-8")
