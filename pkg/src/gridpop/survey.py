"""Gridded survey population counts and non-representative tile exclusion."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from gridpop.geo_io import PointRecord
from gridpop.raster import TileGrid

logger = logging.getLogger(__name__)


class SurveyError(ValueError):
    pass


@dataclass
class SurveyTable:
    tile_id: np.ndarray
    observed_count: np.ndarray
    roi_label: np.ndarray
    psu_label: np.ndarray
    excluded: np.ndarray = field(default=None)

    def __post_init__(self):
        self.tile_id = np.asarray(self.tile_id, dtype=np.int64)
        self.observed_count = np.asarray(self.observed_count, dtype=np.int64)
        n = self.tile_id.shape[0]
        self.roi_label = np.asarray(self.roi_label, dtype=object).reshape(n)
        self.psu_label = np.asarray(self.psu_label, dtype=object).reshape(n)
        if self.excluded is None:
            self.excluded = np.zeros(n, dtype=bool)
        self.excluded = np.asarray(self.excluded, dtype=bool)
        if (self.observed_count < 0).any():
            raise SurveyError("observed counts must be non-negative")
        if len(set(self.keys())) != n:
            raise SurveyError("duplicate tile ids in survey table")

    def __len__(self):
        return self.tile_id.shape[0]

    def keys(self):
        return list(zip(self.roi_label.tolist(), self.tile_id.tolist()))

    def active(self):
        """Rows not flagged as excluded."""
        keep = np.flatnonzero(~self.excluded)
        return SurveyTable(self.tile_id[keep], self.observed_count[keep],
                           self.roi_label[keep], self.psu_label[keep], self.excluded[keep])

    @staticmethod
    def concat(tables):
        return SurveyTable(
            np.concatenate([t.tile_id for t in tables]),
            np.concatenate([t.observed_count for t in tables]),
            np.concatenate([t.roi_label for t in tables]),
            np.concatenate([t.psu_label for t in tables]),
            np.concatenate([t.excluded for t in tables]),
        )

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tile_id", "roi", "psu", "observed", "excluded"])
            for i in range(len(self)):
                w.writerow([int(self.tile_id[i]), self.roi_label[i], self.psu_label[i],
                            int(self.observed_count[i]), int(self.excluded[i])])


def _persons(rec: PointRecord, i):
    if "persons" not in rec.attributes:
        raise SurveyError(f"household {i} has no 'persons' attribute")
    v = rec.attributes["persons"]
    try:
        fv = float(v)
    except (TypeError, ValueError):
        raise SurveyError(f"household {i}: non-numeric persons {v!r}") from None
    if fv < 0 or not fv.is_integer():
        raise SurveyError(f"household {i}: persons must be a non-negative integer, got {v!r}")
    return int(fv)


def grid_population(households: list[PointRecord], grid: TileGrid, surveyed_tiles=None) -> SurveyTable:
    """Sum household persons per tile.

    ``surveyed_tiles`` is an optional list of ``(tile_id, psu)`` pairs for
    tiles that were enumerated; listed tiles without households get 0. Tiles
    that hold households are always rows.
    """
    n = len(households)
    persons = np.array([_persons(h, i) for i, h in enumerate(households)], dtype=np.int64)
    x = np.array([h.x for h in households], dtype=np.float64)
    y = np.array([h.y for h in households], dtype=np.float64)
    row, col, inside = grid.locate(x, y)
    if n and not inside.all():
        bad = [(i, households[i].x, households[i].y) for i in np.flatnonzero(~inside)[:20]]
        raise SurveyError(
            f"{int((~inside).sum())} households fall outside grid {grid.roi_label!r}: {bad}"
        )
    ids = grid.tile_id(row, col).astype(np.int64) if n else np.empty(0, dtype=np.int64)
    totals = np.bincount(ids, weights=persons, minlength=grid.n_tiles).astype(np.int64) if n \
        else np.zeros(grid.n_tiles, dtype=np.int64)

    psu = {}
    for i, h in enumerate(households):
        label = h.attributes.get("psu")
        if label is not None:
            psu.setdefault(int(ids[i]), str(label))
    listed = []
    if surveyed_tiles is not None:
        for tid, label in surveyed_tiles:
            tid = int(tid)
            if not 0 <= tid < grid.n_tiles:
                raise SurveyError(f"surveyed tile {tid} is not in grid {grid.roi_label!r}")
            listed.append(tid)
            if label:
                psu[tid] = str(label)
    with_households = set(np.unique(ids).tolist())
    if surveyed_tiles is not None:
        extra = with_households - set(listed)
        if extra:
            logger.warning("%d tiles hold households but are not in the surveyed-tile list; "
                           "keeping them", len(extra))
    tiles = sorted(with_households | set(listed))
    return SurveyTable(
        tile_id=tiles,
        observed_count=[int(totals[t]) for t in tiles],
        roi_label=[grid.roi_label] * len(tiles),
        psu_label=[psu.get(t, "") for t in tiles],
    )


def apply_exclusions(table: SurveyTable, exclusion_ids) -> SurveyTable:
    """Flag rows as excluded. ``exclusion_ids`` holds tile ids, or
    ``(roi, tile_id)`` pairs when the table spans several ROIs."""
    keys = table.keys()
    index = {k: i for i, k in enumerate(keys)}
    rois = set(table.roi_label.tolist())
    excluded = table.excluded.copy()
    for item in exclusion_ids:
        if isinstance(item, tuple):
            key = (str(item[0]), int(item[1]))
        else:
            if len(rois) > 1:
                raise SurveyError(f"exclusion {item!r} needs an ROI label: table spans {sorted(rois)}")
            key = (next(iter(rois)) if rois else "", int(item))
        if key not in index:
            raise SurveyError(f"excluded tile {key[1]} (roi {key[0]!r}) is not in the survey table")
        excluded[index[key]] = True
    return replace(table, excluded=excluded)


def read_surveyed_tiles(path, roi=None):
    """Rows of a ``tile_id,roi[,psu]`` CSV as ``(tile_id, psu)`` pairs,
    optionally restricted to one ROI."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "tile_id" not in reader.fieldnames:
            raise SurveyError(f"{path}: surveyed-tiles CSV needs a tile_id column")
        for i, row in enumerate(reader, start=1):
            if roi is not None and row.get("roi") not in (None, "", roi):
                continue
            try:
                tid = int(row["tile_id"])
            except ValueError:
                raise SurveyError(f"{path}: row {i}: bad tile_id {row['tile_id']!r}") from None
            out.append((tid, row.get("psu") or ""))
    return out


def read_exclusions(path, roi=None):
    """``(roi, tile_id)`` pairs from a ``tile_id,reason[,roi]`` CSV. Rows
    without an roi column take ``roi``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "tile_id" not in reader.fieldnames:
            raise SurveyError(f"{path}: exclusions CSV needs a tile_id column")
        for i, row in enumerate(reader, start=1):
            label = row.get("roi") or roi
            if label is None:
                raise SurveyError(f"{path}: row {i}: exclusion without an ROI")
            try:
                out.append((label, int(row["tile_id"])))
            except ValueError:
                raise SurveyError(f"{path}: row {i}: bad tile_id {row['tile_id']!r}") from None
    return out


def read_survey_csv(path) -> SurveyTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return SurveyTable(
        [int(r["tile_id"]) for r in rows],
        [int(r["observed"]) for r in rows],
        [r["roi"] for r in rows],
        [r["psu"] for r in rows],
        [r["excluded"] == "1" for r in rows],
    )


def total_persons(households) -> int:
    return int(sum(_persons(h, i) for i, h in enumerate(households)))

