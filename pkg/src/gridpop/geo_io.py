"""Vector inputs: point CSVs, GeoJSON road lines, and line rasterization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridpop import kernels
from gridpop.raster import TileGrid

TAG_KEYS = ("highway", "fclass", "road_class", "class", "type")


class VectorFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PointRecord:
    x: float
    y: float
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point coordinates ({self.x}, {self.y})")


@dataclass
class PolylineSet:
    lines: list = field(default_factory=list)
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.lines = [np.asarray(line, dtype=np.float64).reshape(-1, 2) for line in self.lines]
        if not self.tags:
            self.tags = [""] * len(self.lines)
        if len(self.tags) != len(self.lines):
            raise ValueError("one tag per polyline required")
        for i, line in enumerate(self.lines):
            if line.shape[0] < 2:
                raise ValueError(f"polyline {i} has fewer than 2 vertices")
            if not np.isfinite(line).all():
                raise ValueError(f"polyline {i} has non-finite vertices")

    def __len__(self):
        return len(self.lines)

    def segments(self):
        """All segments as an (m, 4) array of ``x1, y1, x2, y2``."""
        if not self.lines:
            return np.empty((0, 4))
        return np.concatenate([np.hstack([ln[:-1], ln[1:]]) for ln in self.lines])


def _parse_value(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_points_csv(path) -> list[PointRecord]:
    """Read points from a CSV with mandatory ``x`` and ``y`` columns.

    Other columns become attributes, converted to int or float when they
    parse as numbers.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise VectorFormatError(f"{path}: empty file, header row required")
        fields = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = fields
        for col in ("x", "y"):
            if col not in fields:
                raise VectorFormatError(f"{path}: missing required column {col!r}")
        records = []
        for i, row in enumerate(reader, start=1):
            try:
                x = float(row["x"])
                y = float(row["y"])
            except (TypeError, ValueError):
                raise VectorFormatError(
                    f"{path}: row {i}: non-numeric coordinate ({row['x']!r}, {row['y']!r})"
                ) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise VectorFormatError(f"{path}: row {i}: non-finite coordinate")
            attrs = {k: _parse_value(v.strip()) for k, v in row.items()
                     if k not in ("x", "y") and k is not None and v is not None}
            records.append(PointRecord(x, y, attrs))
    return records


def _geometry_lines(geom, where):
    if not isinstance(geom, dict) or "type" not in geom:
        raise VectorFormatError(f"{where}: geometry object required")
    gtype = geom["type"]
    coords = geom.get("coordinates")
    if gtype == "LineString":
        parts = [coords]
    elif gtype == "MultiLineString":
        parts = coords
    else:
        raise VectorFormatError(f"{where}: unsupported geometry type {gtype!r}")
    out = []
    for part in parts:
        try:
            arr = np.asarray([[float(p[0]), float(p[1])] for p in part])
        except (TypeError, ValueError, IndexError):
            raise VectorFormatError(f"{where}: malformed coordinates") from None
        if arr.shape[0] < 2:
            raise VectorFormatError(f"{where}: line with fewer than 2 vertices")
        out.append(arr)
    return out


def parse_lines_geojson(path) -> PolylineSet:
    """Read LineString/MultiLineString features into a :class:`PolylineSet`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VectorFormatError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise VectorFormatError(f"{path}: expected a GeoJSON object")
    if doc.get("type") == "FeatureCollection":
        features = doc.get("features", [])
    elif doc.get("type") == "Feature":
        features = [doc]
    else:
        features = [{"type": "Feature", "geometry": doc, "properties": {}}]
    lines, tags = [], []
    for i, feat in enumerate(features):
        props = feat.get("properties") or {}
        tag = next((str(props[k]) for k in TAG_KEYS if props.get(k) is not None), "")
        for line in _geometry_lines(feat.get("geometry"), f"{path}: feature {i}"):
            lines.append(line)
            tags.append(tag)
    return PolylineSet(lines, tags)


def rasterize_lines(lines: PolylineSet, grid: TileGrid):
    """Binary per-tile presence of any line (supercover: every tile whose
    closed box touches a segment is set)."""
    segs = lines.segments()
    out = kernels.supercover_segments(
        segs, grid.origin_x, grid.origin_y, grid.tile_size, grid.n_rows, grid.n_cols
    )
    return out.astype(np.float64)
