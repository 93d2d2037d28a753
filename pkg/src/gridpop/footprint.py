"""Building footprint masks and per-tile footprint area."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from gridpop import kernels
from gridpop.geo_io import PointRecord
from gridpop.raster import Raster, TileGrid

logger = logging.getLogger(__name__)

MASK_NODATA = 255


@dataclass
class DotAnnotationSet:
    points: list
    mean_building_area: float

    def __post_init__(self):
        if not self.mean_building_area > 0:
            raise ValueError("mean_building_area must be positive")

    @property
    def radius(self):
        return math.sqrt(self.mean_building_area / math.pi)


def _mask_raster(values, origin_x, origin_y, cell_size, band_name="footprint"):
    return Raster(values=values, origin_x=origin_x, origin_y=origin_y, cell_size=cell_size,
                  nodata=MASK_NODATA, band_name=band_name, kind="binary")


def rasterize_dots(dots: DotAnnotationSet, cell_size: float, extent: TileGrid) -> Raster:
    """Fine binary mask with a disc of the ROI's mean building area around
    each dot. A cell is set when its center is within the disc radius."""
    if not 0 < cell_size <= 1.0:
        raise ValueError(f"footprint cell size must be in (0, 1] m, got {cell_size}")
    ratio = extent.tile_size / cell_size
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("tile size must be a whole multiple of the mask cell size")
    per_tile = int(round(ratio))
    nrows, ncols = extent.n_rows * per_tile, extent.n_cols * per_tile
    xmin, ymin, xmax, ymax = extent.bounds
    pts = np.array([(p.x, p.y) for p in dots.points], dtype=np.float64).reshape(-1, 2)
    inside = (pts[:, 0] >= xmin) & (pts[:, 0] < xmax) & (pts[:, 1] > ymin) & (pts[:, 1] <= ymax)
    if (~inside).any():
        logger.warning("skipping %d dots outside the grid extent", int((~inside).sum()))
    values = kernels.rasterize_discs(
        pts[inside], dots.radius, extent.origin_x, extent.origin_y, cell_size, nrows, ncols
    )
    return _mask_raster(values, extent.origin_x, extent.origin_y, cell_size)


def threshold_mask(probabilities: Raster, t: float) -> Raster:
    """Binary mask of cells with probability >= ``t``; nodata becomes 0."""
    if not 0 < t < 1:
        raise ValueError(f"threshold must be in (0, 1), got {t}")
    missing = probabilities.nodata_mask
    p = probabilities.values.astype(np.float64)
    present = p[~missing]
    if present.size and ((present < 0) | (present > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    values = ((p >= t) & ~missing).astype(np.uint8)
    return _mask_raster(values, probabilities.origin_x, probabilities.origin_y,
                        probabilities.cell_size, probabilities.band_name or "footprint")


def as_mask(raster: Raster) -> Raster:
    """Validate a 0/1/nodata raster and return it as a uint8 mask."""
    missing = raster.nodata_mask
    present = raster.values[~missing]
    if present.size and not np.isin(present, (0, 1)).all():
        raise ValueError(f"mask {raster.band_name!r} has values other than 0/1/nodata")
    values = np.where(missing, 0, raster.values).astype(np.uint8)
    return _mask_raster(values, raster.origin_x, raster.origin_y, raster.cell_size,
                        raster.band_name or "footprint")


def filter_components(mask: Raster, min_area: float, max_area: float) -> Raster:
    """Erase 8-connected components whose area is outside
    ``[min_area, max_area]`` (m^2, inclusive)."""
    if not min_area < max_area:
        raise ValueError("min_area must be smaller than max_area")
    on = (mask.values == 1) & ~mask.nodata_mask
    labels, n = kernels.label8(on.astype(np.uint8))
    if n == 0:
        return _mask_raster(on.astype(np.uint8), mask.origin_x, mask.origin_y, mask.cell_size, mask.band_name)
    cell_area = mask.cell_size * mask.cell_size
    area = np.bincount(labels.ravel(), minlength=n + 1) * cell_area
    keep = (area >= min_area) & (area <= max_area)
    keep[0] = False
    values = keep[labels].astype(np.uint8)
    dropped = int((~keep[1:]).sum())
    if dropped:
        logger.info("removed %d of %d footprint components by size", dropped, n)
    return _mask_raster(values, mask.origin_x, mask.origin_y, mask.cell_size, mask.band_name)


def area_per_tile(mask: Raster, grid: TileGrid):
    """Footprint area (m^2) per tile: set cells whose centers fall in the tile
    times the cell area. Tiles the mask does not reach get 0."""
    on = (mask.values == 1) & ~mask.nodata_mask
    rows, cols = np.nonzero(on)
    x = mask.origin_x + (cols + 0.5) * mask.cell_size
    y = mask.origin_y - (rows + 0.5) * mask.cell_size
    trow, tcol, inside = grid.locate(x, y)
    ids = grid.tile_id(trow[inside], tcol[inside])
    counts = np.bincount(ids, minlength=grid.n_tiles)
    return (counts * (mask.cell_size * mask.cell_size)).astype(np.float64).reshape(grid.shape)


def dots_from_points(points: list[PointRecord], mean_building_area: float) -> DotAnnotationSet:
    return DotAnnotationSet(list(points), float(mean_building_area))
