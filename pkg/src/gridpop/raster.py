"""Rasters, the tile grid, ESRI ASCII grid I/O and resampling onto tiles.

Coordinates are planar meters with y increasing northward. Row 0 of every
raster and grid is the northern edge, so ``origin_y`` is the top edge and
``origin_x`` the left edge.

Membership of a point in a cell or tile is half-open: tile ``(row, col)``
owns ``[x0 + col*ts, x0 + (col+1)*ts)`` horizontally and
``(y0 - (row+1)*ts, y0 - row*ts]`` vertically, so a point on a shared edge
belongs to exactly one tile.

Per-tile results are float arrays of shape ``(n_rows, n_cols)`` with NaN
marking nodata; ``arr.ravel()`` is indexed by tile id.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_NODATA = -9999.0
RASTER_KINDS = ("continuous", "categorical", "binary")


class AsciiGridError(ValueError):
    """Malformed ESRI ASCII grid file."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NoOverlapError(ValueError):
    """Raster and tile grid do not overlap."""


@dataclass(frozen=True)
class TileGrid:
    """Square analysis tiles for one region of interest, ids in row-major order."""

    origin_x: float
    origin_y: float
    n_cols: int
    n_rows: int
    tile_size: float = 100.0
    roi_label: str = ""

    def __post_init__(self):
        if not self.tile_size > 0:
            raise ValueError(f"tile_size must be positive, got {self.tile_size}")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid needs at least one tile in each direction")

    @property
    def n_tiles(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        return (
            self.origin_x,
            self.origin_y - self.n_rows * self.tile_size,
            self.origin_x + self.n_cols * self.tile_size,
            self.origin_y,
        )

    def tile_id(self, row, col):
        return np.asarray(row) * self.n_cols + np.asarray(col)

    def row_col(self, tile_id):
        tile_id = np.asarray(tile_id)
        if np.any((tile_id < 0) | (tile_id >= self.n_tiles)):
            raise IndexError("tile id out of range")
        return np.divmod(tile_id, self.n_cols)

    def centers(self, tile_id=None):
        """Tile-center coordinates ``(x, y)`` for the given ids (all by default)."""
        if tile_id is None:
            tile_id = np.arange(self.n_tiles)
        row, col = self.row_col(tile_id)
        x = self.origin_x + (col + 0.5) * self.tile_size
        y = self.origin_y - (row + 0.5) * self.tile_size
        return x, y

    def locate(self, x, y):
        """Return ``(row, col, inside)`` for points under the half-open rule."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = np.floor((x - self.origin_x) / self.tile_size).astype(np.int64)
        row = np.floor((self.origin_y - y) / self.tile_size).astype(np.int64)
        inside = (col >= 0) & (col < self.n_cols) & (row >= 0) & (row < self.n_rows)
        return row, col, inside

    def to_dict(self):
        return {
            "roi": self.roi_label,
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "n_cols": self.n_cols,
            "n_rows": self.n_rows,
            "tile_size": self.tile_size,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            origin_x=float(d["origin_x"]),
            origin_y=float(d["origin_y"]),
            n_cols=int(d["n_cols"]),
            n_rows=int(d["n_rows"]),
            tile_size=float(d.get("tile_size", 100.0)),
            roi_label=str(d.get("roi", d.get("roi_label", ""))),
        )


@dataclass
class Raster:
    """Single-band raster with square cells.

    ``values`` has shape ``(height, width)``; cells equal to ``nodata`` are
    missing. ``frame`` and ``kind`` come from the optional band sidecar.
    """

    values: np.ndarray
    origin_x: float
    origin_y: float
    cell_size: float
    nodata: float = DEFAULT_NODATA
    band_name: str = ""
    frame: str | None = None
    kind: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("raster values must be two-dimensional")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError("raster must have at least one cell")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.values.dtype.kind == "f":
            bad = ~np.isfinite(self.values) & ~self.nodata_mask
            if bad.any():
                raise ValueError("raster has non-finite values that are not nodata")
        if self.kind is not None and self.kind not in RASTER_KINDS:
            raise ValueError(f"unknown raster kind {self.kind!r}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def nodata_mask(self):
        if self.nodata is None:
            return np.zeros(self.values.shape, dtype=bool)
        if isinstance(self.nodata, float) and math.isnan(self.nodata):
            return np.isnan(self.values)
        return self.values == self.nodata

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y - self.height * self.cell_size,
            self.origin_x + self.width * self.cell_size,
            self.origin_y,
        )

    def cell_centers(self):
        """Meshgrid-free center coordinates: ``(x of each column, y of each row)``."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin_y - (np.arange(self.height) + 0.5) * self.cell_size
        return xs, ys

    def masked(self):
        """Values as float64 with NaN at nodata."""
        out = self.values.astype(np.float64, copy=True)
        out[self.nodata_mask] = np.nan
        return out


# ---------------------------------------------------------------------------
# ASCII grid I/O
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".band.json")


def read_ascii_header(path) -> dict:
    """Header fields of an ASCII grid without reading the cell values.

    Returns ``ncols``, ``nrows``, ``cellsize``, ``nodata``, the outer corner
    ``origin_x``/``origin_y`` and ``bounds``; the sidecar's ``frame`` and
    ``kind`` are included when present.
    """
    path = Path(path)
    header = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            key = tokens[0].lower()
            if key[0].isdigit() or key[0] in "+-.":
                break
            if len(tokens) != 2 or key not in _HEADER_KEYS + ("xllcenter", "yllcenter"):
                raise AsciiGridError(path, lineno, f"malformed header line {line.strip()!r}")
            try:
                header[key] = float(tokens[1])
            except ValueError:
                raise AsciiGridError(path, lineno, f"non-numeric header value {tokens[1]!r}") from None
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise AsciiGridError(path, 1, f"missing header key {key!r}")
    cs = header["cellsize"]
    xll = header["xllcorner"] if "xllcorner" in header else header.get("xllcenter", 0.0) - cs / 2
    yll = header["yllcorner"] if "yllcorner" in header else header.get("yllcenter", 0.0) - cs / 2
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    info = {
        "ncols": ncols,
        "nrows": nrows,
        "cellsize": cs,
        "nodata": header.get("nodata_value", DEFAULT_NODATA),
        "origin_x": xll,
        "origin_y": yll + nrows * cs,
        "bounds": (xll, yll, xll + ncols * cs, yll + nrows * cs),
        "frame": None,
        "kind": None,
    }
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        info["frame"] = meta.get("frame")
        info["kind"] = meta.get("kind")
        info["band_name"] = meta.get("band_name")
    return info


def read_ascii_grid(path) -> Raster:
    """Read an ESRI ASCII grid (and its ``.band.json`` sidecar when present)."""
    path = Path(path)
    header = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lineno = 0
    # header: key value pairs until the first line starting with a number
    while lineno < len(lines):
        tokens = lines[lineno].split()
        if not tokens:
            lineno += 1
            continue
        key = tokens[0].lower()
        if key[0].isdigit() or key[0] in "+-.":
            break
        if len(tokens) != 2:
            raise AsciiGridError(path, lineno + 1, f"malformed header line {lines[lineno]!r}")
        if key not in _HEADER_KEYS + ("xllcenter", "yllcenter"):
            raise AsciiGridError(path, lineno + 1, f"unknown header key {tokens[0]!r}")
        try:
            header[key] = float(tokens[1])
        except ValueError:
            raise AsciiGridError(path, lineno + 1, f"non-numeric header value {tokens[1]!r}") from None
        lineno += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise AsciiGridError(path, lineno + 1, f"missing header key {key!r}")
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise AsciiGridError(path, 1, "ncols/nrows must be positive integers")
    ncols, nrows = int(ncols), int(nrows)
    cellsize = header["cellsize"]
    if "xllcorner" in header:
        xll = header["xllcorner"]
    elif "xllcenter" in header:
        xll = header["xllcenter"] - cellsize / 2
    else:
        raise AsciiGridError(path, lineno + 1, "missing header key 'xllcorner'")
    if "yllcorner" in header:
        yll = header["yllcorner"]
    elif "yllcenter" in header:
        yll = header["yllcenter"] - cellsize / 2
    else:
        raise AsciiGridError(path, lineno + 1, "missing header key 'yllcorner'")
    nodata = header.get("nodata_value", DEFAULT_NODATA)

    values = np.empty((nrows, ncols), dtype=np.float64)
    row = 0
    while lineno < len(lines):
        tokens = lines[lineno].split()
        lineno += 1
        if not tokens:
            continue
        if row >= nrows:
            raise AsciiGridError(path, lineno, f"more than {nrows} data rows")
        if len(tokens) != ncols:
            raise AsciiGridError(
                path, lineno, f"data row {row + 1} has {len(tokens)} values, expected {ncols}"
            )
        try:
            values[row] = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_number(t))
            raise AsciiGridError(path, lineno, f"non-numeric value {bad!r}") from None
        row += 1
    if row != nrows:
        raise AsciiGridError(path, lineno, f"expected {nrows} data rows, found {row}")

    raster = Raster(
        values=values,
        origin_x=xll,
        origin_y=yll + nrows * cellsize,
        cell_size=cellsize,
        nodata=nodata,
        band_name=path.stem,
    )
    side = sidecar_path(path)
    if side.exists():
        info = json.loads(side.read_text(encoding="utf-8"))
        raster.band_name = info.get("band_name", raster.band_name)
        raster.frame = info.get("frame")
        raster.kind = info.get("kind")
        origin = info.get("origin")
        if origin is not None and _close(origin[0], raster.origin_x, cellsize) \
                and _close(origin[1], raster.origin_y, cellsize):
            raster.origin_x, raster.origin_y = float(origin[0]), float(origin[1])
        if raster.kind is not None and raster.kind not in RASTER_KINDS:
            raise AsciiGridError(side, 1, f"unknown raster kind {raster.kind!r}")
    return raster


def _close(a, b, cellsize):
    return abs(float(a) - float(b)) <= 1e-6 * cellsize + 1e-9 * abs(float(b))


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def _fmt(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _exact_yll(origin_y, nrows, cellsize):
    # choose yll so that yll + nrows*cellsize reproduces origin_y bit for bit
    span = nrows * cellsize
    yll = origin_y - span
    if yll + span == origin_y:
        return yll
    lo = hi = yll
    for _ in range(64):
        lo = np.nextafter(lo, -np.inf)
        hi = np.nextafter(hi, np.inf)
        for cand in (lo, hi):
            if cand + span == origin_y:
                return float(cand)
    logger.warning("origin_y %r does not round-trip through yllcorner", origin_y)
    return yll


def write_ascii_grid(raster: Raster, path) -> None:
    """Write ``raster`` as an ESRI ASCII grid plus ``.band.json`` sidecar.

    Values are written at full precision so reading the file back yields the
    same raster.
    """
    if raster.values.size == 0:
        raise ValueError("refusing to write an empty raster")
    path = Path(path)
    values = raster.values
    nodata = raster.nodata if raster.nodata is not None else DEFAULT_NODATA
    if isinstance(nodata, float) and math.isnan(nodata):
        nodata = DEFAULT_NODATA
    missing = raster.nodata_mask
    lines = [
        f"ncols {raster.width}",
        f"nrows {raster.height}",
        f"xllcorner {_fmt(raster.origin_x)}",
        f"yllcorner {_fmt(_exact_yll(raster.origin_y, raster.height, raster.cell_size))}",
        f"cellsize {_fmt(raster.cell_size)}",
        f"NODATA_value {_fmt(nodata)}",
    ]
    nd = _fmt(nodata)
    for r in range(raster.height):
        row = values[r]
        miss = missing[r]
        lines.append(" ".join(nd if miss[c] else _fmt(row[c]) for c in range(raster.width)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    # the header can only carry the lower-left corner; keep the exact top edge too
    info = {"band_name": raster.band_name or path.stem, "origin": [float(raster.origin_x), float(raster.origin_y)]}
    if raster.frame is not None:
        info["frame"] = raster.frame
    if raster.kind is not None:
        info["kind"] = raster.kind
    sidecar_path(path).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def raster_from_tiles(values, grid: TileGrid, band_name="", nodata=DEFAULT_NODATA, frame=None, kind=None):
    """Wrap a per-tile array (NaN = nodata) as a raster aligned to ``grid``."""
    arr = np.asarray(values, dtype=np.float64).reshape(grid.shape).copy()
    arr[np.isnan(arr)] = nodata
    return Raster(
        values=arr,
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        cell_size=grid.tile_size,
        nodata=nodata,
        band_name=band_name,
        frame=frame,
        kind=kind,
    )


# ---------------------------------------------------------------------------
# Resampling onto tiles
# ---------------------------------------------------------------------------

def _check_overlap(raster: Raster, grid: TileGrid):
    rx0, ry0, rx1, ry1 = raster.bounds
    gx0, gy0, gx1, gy1 = grid.bounds
    if rx0 >= gx1 or gx0 >= rx1 or ry0 >= gy1 or gy0 >= ry1:
        raise NoOverlapError(
            f"raster {raster.band_name!r} bounds {raster.bounds} do not overlap grid "
            f"{grid.roi_label!r} bounds {grid.bounds}"
        )


def _cell_tiles(raster: Raster, grid: TileGrid):
    """Tile index of each raster cell center (-1 outside the grid), shape (h, w)."""
    xs, ys = raster.cell_centers()
    col = np.floor((xs - grid.origin_x) / grid.tile_size).astype(np.int64)
    row = np.floor((grid.origin_y - ys) / grid.tile_size).astype(np.int64)
    col_ok = (col >= 0) & (col < grid.n_cols)
    row_ok = (row >= 0) & (row < grid.n_rows)
    tid = row[:, None] * grid.n_cols + col[None, :]
    tid[~(row_ok[:, None] & col_ok[None, :])] = -1
    return tid


def resample_average(raster: Raster, grid: TileGrid):
    """Mean of the valid cells whose centers fall in each tile; NaN where none."""
    _check_overlap(raster, grid)
    tid = _cell_tiles(raster, grid)
    valid = (tid >= 0) & ~raster.nodata_mask
    ids = tid[valid]
    vals = raster.values[valid].astype(np.float64)
    total = np.bincount(ids, weights=vals, minlength=grid.n_tiles)
    count = np.bincount(ids, minlength=grid.n_tiles)
    out = np.full(grid.n_tiles, np.nan)
    has = count > 0
    out[has] = total[has] / count[has]
    return out.reshape(grid.shape)


def resample_nearest(raster: Raster, grid: TileGrid):
    """Value of the raster cell containing each tile center; NaN if that cell
    is nodata or the center lies outside the raster."""
    _check_overlap(raster, grid)
    x, y = grid.centers()
    col = np.floor((x - raster.origin_x) / raster.cell_size).astype(np.int64)
    row = np.floor((raster.origin_y - y) / raster.cell_size).astype(np.int64)
    inside = (col >= 0) & (col < raster.width) & (row >= 0) & (row < raster.height)
    out = np.full(grid.n_tiles, np.nan)
    r, c = row[inside], col[inside]
    vals = raster.values[r, c].astype(np.float64)
    vals[raster.nodata_mask[r, c]] = np.nan
    out[inside] = vals
    return out.reshape(grid.shape)


def resample_any(raster: Raster, grid: TileGrid):
    """1 where any contributing cell is 1, else 0; NaN for tiles without cells.

    Nodata cells contribute as 0.
    """
    if not raster.cell_size < grid.tile_size:
        raise ValueError(
            f"any-resampling needs cells finer than tiles ({raster.cell_size} >= {grid.tile_size})"
        )
    missing = raster.nodata_mask
    present = raster.values[~missing]
    if present.size and not np.isin(present, (0, 1)).all():
        bad = np.unique(present[~np.isin(present, (0, 1))])[:5]
        raise ValueError(f"binary raster {raster.band_name!r} has values other than 0/1: {bad.tolist()}")
    _check_overlap(raster, grid)
    tid = _cell_tiles(raster, grid)
    inside = tid >= 0
    count = np.bincount(tid[inside], minlength=grid.n_tiles)
    ones = inside & ~missing & (raster.values == 1)
    hits = np.bincount(tid[ones], minlength=grid.n_tiles)
    out = np.where(hits > 0, 1.0, 0.0)
    out[count == 0] = np.nan
    return out.reshape(grid.shape)


RESAMPLERS = {
    "average": resample_average,
    "nearest": resample_nearest,
    "any": resample_any,
}
