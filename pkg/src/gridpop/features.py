"""Per-tile predictor table: band indices, land-cover one-hot, distance to
road and context-ring averages."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridpop import kernels
from gridpop.raster import TileGrid

logger = logging.getLogger(__name__)

IGNORED = "ignored"
DIST_ROAD = "dist_road"
BUILDING_AREA = "building_area"


def _normalized_difference(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"band shapes differ: {a.shape} vs {b.shape}")
    num = a - b
    den = a + b
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    # keep nodata visible
    out[np.isnan(den)] = np.nan
    return out


def ndvi(nir, red):
    """(nir - red) / (nir + red), with 0 where the denominator is 0."""
    return _normalized_difference(nir, red)


def ndwi(green, nir):
    """(green - nir) / (green + nir), with 0 where the denominator is 0."""
    return _normalized_difference(green, nir)


# Copernicus Global Land Service 100 m discrete classes. Forest types are
# condensed to open forest; classes absent from surveyed areas are ignored.
_CGLS_RETAINED = {
    20: "shrubs",
    30: "herbaceous_vegetation",
    40: "cultivated",
    50: "urban",
    121: "open_forest", 122: "open_forest", 123: "open_forest",
    124: "open_forest", 125: "open_forest", 126: "open_forest",
}
_CGLS_IGNORED = (0, 60, 70, 80, 90, 100, 111, 112, 113, 114, 115, 116, 200)


@dataclass(frozen=True)
class LandCoverScheme:
    """Map from raw class codes to one of exactly five retained classes or
    ``"ignored"``."""

    mapping: dict
    classes: tuple = ()

    def __post_init__(self):
        retained = []
        for name in self.mapping.values():
            if name != IGNORED and name not in retained:
                retained.append(name)
        classes = tuple(self.classes) or tuple(retained)
        if set(classes) != set(retained):
            raise ValueError(f"class order {classes} does not match mapped classes {retained}")
        if len(classes) != 5:
            raise ValueError(f"land-cover scheme must retain exactly 5 classes, got {len(classes)}")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "mapping", {int(k): v for k, v in self.mapping.items()})

    @classmethod
    def default(cls):
        mapping = dict(_CGLS_RETAINED)
        mapping.update({code: IGNORED for code in _CGLS_IGNORED})
        return cls(mapping, ("open_forest", "shrubs", "herbaceous_vegetation", "cultivated", "urban"))

    @classmethod
    def from_dict(cls, d):
        return cls({int(k): v for k, v in d["mapping"].items()}, tuple(d.get("classes", ())))

    def to_dict(self):
        return {"mapping": {str(k): v for k, v in sorted(self.mapping.items())},
                "classes": list(self.classes)}

    def column_names(self):
        return [f"lcc_{c}" for c in self.classes]


class LandCoverError(ValueError):
    pass


def onehot_landcover(classes, scheme: LandCoverScheme, tile_ids=None, on_ignored="raise"):
    """One column per retained class, 1 where the tile's class maps to it.

    NaN codes (nodata) give NaN in every column. Tiles whose code maps to
    ``"ignored"`` raise :class:`LandCoverError` naming them, unless
    ``on_ignored="nodata"`` in which case they are treated like nodata.
    """
    codes = np.asarray(classes, dtype=np.float64)
    flat = codes.ravel()
    ids = np.arange(flat.size) if tile_ids is None else np.asarray(tile_ids).ravel()
    missing = np.isnan(flat)
    known = np.array([c in scheme.mapping for c in flat[~missing].astype(np.int64)], dtype=bool)
    nonint = flat[~missing] != np.round(flat[~missing])
    if (~known).any() or nonint.any():
        bad = np.unique(flat[~missing][~known | nonint])
        raise LandCoverError(f"unknown land-cover codes {bad.tolist()}")
    names = np.full(flat.size, "", dtype=object)
    names[~missing] = [scheme.mapping[int(c)] for c in flat[~missing]]
    ignored = names == IGNORED
    if ignored.any():
        if on_ignored == "raise":
            raise LandCoverError(
                f"tiles {ids[ignored].tolist()} fall in ignored land-cover classes"
            )
        if on_ignored != "nodata":
            raise ValueError(f"on_ignored must be 'raise' or 'nodata', got {on_ignored!r}")
    out = {}
    for cls_name, col in zip(scheme.classes, scheme.column_names()):
        v = (names == cls_name).astype(np.float64)
        v[missing | ignored] = np.nan
        out[col] = v.reshape(codes.shape)
    return out


def distance_to_road(road_tiles, grid: TileGrid):
    """Euclidean distance in meters from each tile center to the nearest road
    tile center (exact two-pass transform)."""
    mask = np.asarray(road_tiles).reshape(grid.shape)
    mask = np.nan_to_num(mask, nan=0.0) != 0
    if not mask.any():
        raise ValueError("no road present")
    d2 = kernels.edt_squared(mask.astype(np.uint8))
    return np.sqrt(d2.astype(np.float64)) * grid.tile_size


# ---------------------------------------------------------------------------
# Feature table
# ---------------------------------------------------------------------------

@dataclass
class FeatureTable:
    """Named per-tile columns keyed by ``(roi, tile_id)``."""

    tile_ids: np.ndarray
    roi: np.ndarray
    columns: dict
    notes: dict = field(default_factory=dict)
    contextable: tuple = ()

    def __post_init__(self):
        self.tile_ids = np.asarray(self.tile_ids, dtype=np.int64)
        self.roi = np.asarray(self.roi, dtype=object)
        n = self.tile_ids.shape[0]
        if self.roi.shape != (n,):
            raise ValueError("roi labels must align with tile ids")
        for name, col in list(self.columns.items()):
            col = np.asarray(col, dtype=np.float64)
            if col.shape != (n,):
                raise ValueError(f"column {name!r} has length {col.shape}, expected {n}")
            self.columns[name] = col
        keys = set(zip(self.roi.tolist(), self.tile_ids.tolist()))
        if len(keys) != n:
            raise ValueError("duplicate (roi, tile_id) rows")
        self.contextable = tuple(self.contextable)

    def __len__(self):
        return self.tile_ids.shape[0]

    @property
    def names(self):
        return list(self.columns)

    def matrix(self, names=None):
        names = self.names if names is None else names
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[n] for n in names])

    def keys(self):
        return list(zip(self.roi.tolist(), self.tile_ids.tolist()))

    def take(self, index):
        index = np.asarray(index)
        return FeatureTable(
            self.tile_ids[index], self.roi[index],
            {k: v[index] for k, v in self.columns.items()},
            dict(self.notes), self.contextable,
        )

    def drop_incomplete(self):
        """Drop rows with any NaN column; returns the filtered table."""
        if not self.columns:
            return self
        bad = np.isnan(self.matrix()).any(axis=1)
        if bad.any():
            logger.info("dropping %d incomplete tiles", int(bad.sum()))
        return self.take(np.flatnonzero(~bad))

    @staticmethod
    def concat(tables):
        tables = [t for t in tables]
        names = tables[0].names
        for t in tables[1:]:
            if t.names != names:
                raise ValueError("feature tables have different columns")
        return FeatureTable(
            np.concatenate([t.tile_ids for t in tables]),
            np.concatenate([t.roi for t in tables]),
            {n: np.concatenate([t.columns[n] for t in tables]) for n in names},
            dict(tables[0].notes), tables[0].contextable,
        )

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tile_id", "roi"] + self.names)
            cols = [self.columns[n] for n in self.names]
            for i in range(len(self)):
                w.writerow([int(self.tile_ids[i]), self.roi[i]] + [repr(float(c[i])) for c in cols])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["tile_id", "roi"]:
                raise ValueError(f"{path}: feature CSV must start with tile_id,roi")
            rows = list(reader)
        names = header[2:]
        ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        roi = np.array([r[1] for r in rows], dtype=object)
        data = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
        return cls(ids, roi, {n: data[:, j] for j, n in enumerate(names)})


# ---------------------------------------------------------------------------
# Context rings
# ---------------------------------------------------------------------------

def ring_radius(ring):
    """Ring size (8, 24, 48, ...) to its Chebyshev radius (1, 2, 3, ...)."""
    k = 1
    while (2 * k + 1) ** 2 - 1 < ring:
        k += 1
    if (2 * k + 1) ** 2 - 1 != ring:
        raise ValueError(f"context ring must be (2k+1)^2 - 1 tiles, got {ring}")
    return k


def _ring_mean(dense, radius):
    """Mean over the square ring of ``radius`` around each cell, ignoring NaN
    neighbors; cells with no neighbors keep their own value."""
    nf, h, w = dense.shape
    valid = ~np.isnan(dense)
    vals = np.where(valid, dense, 0.0)
    pad = radius
    pv = np.zeros((nf, h + 2 * pad, w + 2 * pad))
    pc = np.zeros((nf, h + 2 * pad, w + 2 * pad))
    pv[:, pad:pad + h, pad:pad + w] = vals
    pc[:, pad:pad + h, pad:pad + w] = valid
    total = np.zeros_like(dense)
    count = np.zeros_like(dense)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            total += pv[:, pad + dr:pad + dr + h, pad + dc:pad + dc + w]
            count += pc[:, pad + dr:pad + dr + h, pad + dc:pad + dc + w]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count
    return np.where(count > 0, mean, dense)


def context_features(table: FeatureTable, grids: dict, rings=(8, 24)):
    """Append ``<col>_ctx<ring>`` means over the surrounding tiles for every
    contextable column.

    ``grids`` maps ROI label to :class:`TileGrid`. Neighbors outside the grid
    or absent from the table are left out of the mean.
    """
    ctx_cols = [c for c in table.contextable if c in table.columns]
    radii = [(ring, ring_radius(ring)) for ring in rings]
    new = {f"{c}_ctx{ring}": np.empty(len(table)) for ring, _ in radii for c in ctx_cols}
    for roi in dict.fromkeys(table.roi.tolist()):
        grid = grids[roi]
        sel = np.flatnonzero(table.roi == roi)
        row, col = grid.row_col(table.tile_ids[sel])
        dense = np.full((len(ctx_cols),) + grid.shape, np.nan)
        for j, c in enumerate(ctx_cols):
            dense[j, row, col] = table.columns[c][sel]
        for ring, radius in radii:
            means = _ring_mean(dense, radius)
            for j, c in enumerate(ctx_cols):
                new[f"{c}_ctx{ring}"][sel] = means[j, row, col]
    columns = dict(table.columns)
    for name in new:
        if name in columns:
            raise ValueError(f"duplicate column {name!r}")
    # ring blocks in order: all ctx8 columns, then all ctx24 columns
    for ring, _ in radii:
        for c in ctx_cols:
            columns[f"{c}_ctx{ring}"] = new[f"{c}_ctx{ring}"]
    notes = dict(table.notes)
    for ring, _ in radii:
        for c in ctx_cols:
            notes[f"{c}_ctx{ring}"] = f"mean of {c} over the {ring} surrounding tiles"
    return FeatureTable(table.tile_ids, table.roi, columns, notes, table.contextable)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass
class TileSources:
    """Per-tile source arrays for one ROI, each shaped like the grid.

    Any field left as None is a disabled source.
    """

    building_area: np.ndarray | None = None
    landsat: dict | None = None          # band name -> array, in configured order
    band_roles: dict = field(default_factory=dict)  # "nir"/"red"/"green" -> band name
    hrsl: np.ndarray | None = None
    landcover: np.ndarray | None = None  # raw class codes
    ntl: np.ndarray | None = None
    road_tiles: np.ndarray | None = None


def base_columns(grid: TileGrid, src: TileSources, scheme: LandCoverScheme | None = None,
                 on_ignored="nodata"):
    """Ordered base feature columns over every tile of ``grid`` (NaN = nodata)."""
    cols = {}
    notes = {}

    def put(name, arr, note):
        if name in cols:
            raise ValueError(f"duplicate feature name {name!r}")
        cols[name] = np.asarray(arr, dtype=np.float64).reshape(-1)
        notes[name] = note

    if src.building_area is not None:
        put(BUILDING_AREA, src.building_area, "building footprint area per tile (m^2)")
    if src.landsat is not None:
        for band, arr in src.landsat.items():
            put(band, arr, "landsat band, average resampling")
        roles = src.band_roles
        if "nir" in roles and "red" in roles:
            put("ndvi", ndvi(src.landsat[roles["nir"]], src.landsat[roles["red"]]), "(nir-red)/(nir+red)")
        if "green" in roles and "nir" in roles:
            put("ndwi", ndwi(src.landsat[roles["green"]], src.landsat[roles["nir"]]), "(green-nir)/(green+nir)")
    if src.hrsl is not None:
        put("hrsl", src.hrsl, "settlement presence, any resampling")
    if src.landcover is not None:
        scheme = scheme or LandCoverScheme.default()
        onehot = onehot_landcover(src.landcover, scheme, on_ignored=on_ignored)
        for name, arr in onehot.items():
            put(name, arr, "land-cover one-hot, nearest resampling")
    if src.ntl is not None:
        put("ntl", src.ntl, "night-time lights radiance")
    if src.road_tiles is not None:
        put(DIST_ROAD, distance_to_road(src.road_tiles, grid), "distance to nearest road tile (m)")
    return cols, notes


def assemble_features(grids: dict, sources: dict, scheme: LandCoverScheme | None = None,
                      rings=(8, 24), on_ignored="nodata"):
    """Build the full feature table over all ROIs.

    Column order: building_area, landsat bands, ndvi, ndwi, hrsl, land-cover
    one-hot, ntl, dist_road, then one block per context ring. Tiles with any
    missing base value are dropped before context means are taken.
    """
    tables = []
    names = None
    for roi, grid in grids.items():
        cols, notes = base_columns(grid, sources[roi], scheme, on_ignored=on_ignored)
        if names is None:
            names = list(cols)
        elif list(cols) != names:
            raise ValueError(f"ROI {roi!r} yields columns {list(cols)}, expected {names}")
        ids = np.arange(grid.n_tiles)
        contextable = tuple(n for n in cols if n != DIST_ROAD)
        t = FeatureTable(ids, np.full(grid.n_tiles, roi, dtype=object), cols, notes, contextable)
        tables.append(t.drop_incomplete())
    if not tables:
        raise ValueError("no grids configured")
    table = FeatureTable.concat(tables)
    if rings:
        table = context_features(table, grids, rings)
    return table


def expected_column_count(n_base, n_contextable, n_rings=2):
    return n_base + n_rings * n_contextable


def write_manifest(table: FeatureTable, path, extra=None):
    manifest = {
        "columns": table.names,
        "contextable": list(table.contextable),
        "notes": {k: table.notes.get(k, "") for k in table.names},
        "n_tiles": len(table),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
