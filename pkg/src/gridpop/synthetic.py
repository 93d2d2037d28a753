"""Synthetic two-ROI world with known footprints and population, written in
the pipeline's input formats. Used by the end-to-end tests and the demo."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gridpop import footprint
from gridpop.geo_io import PointRecord
from gridpop.raster import Raster, TileGrid, write_ascii_grid

FRAME = "EPSG:32736"


@dataclass
class WorldSpec:
    n_tiles: int = 12            # grid is n_tiles x n_tiles per ROI
    survey_margin: int = 1       # unsurveyed ring of tiles around the survey block
    min_buildings: int = 40
    max_buildings: int = 110
    persons_per_1000m2: float = 120.0
    cell_size: float = 0.5
    n_excluded: int = 2          # per ROI
    seed: int = 0


ROIS = {
    "BOA": {"origin": (500_000.0, 8_001_200.0), "mean_building_area": 40.0},
    "MGD": {"origin": (540_000.0, 8_051_200.0), "mean_building_area": 50.0},
}


def _smooth_field(rng, n, scale=4.0):
    """Smooth random field on an n x n tile lattice, rescaled to [0, 1]."""
    coarse = rng.random((n // 3 + 3, n // 3 + 3))
    rows = np.linspace(0, coarse.shape[0] - 1.001, n)
    cols = np.linspace(0, coarse.shape[1] - 1.001, n)
    r0, c0 = rows.astype(int), cols.astype(int)
    fr, fc = rows - r0, cols - c0
    a = coarse[r0][:, c0]
    b = coarse[r0][:, c0 + 1]
    c = coarse[r0 + 1][:, c0]
    d = coarse[r0 + 1][:, c0 + 1]
    f = (a * (1 - fc) + b * fc) * (1 - fr[:, None]) + (c * (1 - fc) + d * fc) * fr[:, None]
    return (f - f.min()) / (np.ptp(f) or 1.0)


def _place_dots(rng, grid, counts, radius):
    """Non-overlapping dots on a jittered lattice inside each tile."""
    slots = 12
    spacing = grid.tile_size / slots
    jitter = max(0.0, (spacing - 2 * radius) / 2 - 0.05)
    pts = []
    for tid in range(grid.n_tiles):
        row, col = divmod(tid, grid.n_cols)
        chosen = rng.choice(slots * slots, size=int(counts.flat[tid]), replace=False)
        for s in np.sort(chosen):
            i, j = divmod(int(s), slots)
            x = grid.origin_x + col * grid.tile_size + (j + 0.5) * spacing + rng.uniform(-jitter, jitter)
            y = grid.origin_y - row * grid.tile_size - (i + 0.5) * spacing + rng.uniform(-jitter, jitter)
            pts.append((x, y))
    return pts


def _raster_over(grid, cell, values_fn, name, kind, nodata=-9999.0):
    n = int(math.ceil(grid.n_cols * grid.tile_size / cell)) + 1
    m = int(math.ceil(grid.n_rows * grid.tile_size / cell)) + 1
    xs = grid.origin_x - cell / 2 + (np.arange(n) + 0.5) * cell
    ys = grid.origin_y + cell / 2 - (np.arange(m) + 0.5) * cell
    vals = values_fn(xs[None, :], ys[:, None])
    return Raster(values=vals, origin_x=grid.origin_x - cell / 2, origin_y=grid.origin_y + cell / 2,
                  cell_size=cell, nodata=nodata, band_name=name, frame=FRAME, kind=kind)


def _tile_lookup(grid, field):
    def at(x, y):
        col = np.clip(np.floor((x - grid.origin_x) / grid.tile_size).astype(int), 0, grid.n_cols - 1)
        row = np.clip(np.floor((grid.origin_y - y) / grid.tile_size).astype(int), 0, grid.n_rows - 1)
        return field[row, col]
    return at


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def make_world(out_dir, spec: WorldSpec | None = None):
    """Write rasters, roads, dots, households and three run configs:
    ``config_full.json``, ``config_public.json`` (no footprints) and
    ``config_bfi.json`` (footprints only).

    Returns a dict with the config paths and the ground truth per ROI.
    """
    spec = spec or WorldSpec()
    out = Path(out_dir)
    data = out / "data"
    data.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_tiles
    truth = {}
    sources = {"landsat": {}, "hrsl": {}, "landcover": {}, "ntl": {}}
    grids, survey_entries, roads, dots, mba = [], [], {}, {}, {}

    for roi, info in ROIS.items():
        grid = TileGrid(info["origin"][0], info["origin"][1], n, n, 100.0, roi)
        grids.append(grid.to_dict())
        density = _smooth_field(rng, n)
        frac = np.clip(0.6 * density + 0.4 * rng.random((n, n)), 0, 1)
        counts = np.round(spec.min_buildings + frac * (spec.max_buildings - spec.min_buildings)).astype(int)
        dset = footprint.DotAnnotationSet([], info["mean_building_area"])
        pts = _place_dots(rng, grid, counts, dset.radius)
        dots_path = data / f"dots_{roi}.csv"
        _write_csv(dots_path, ["x", "y"], [(repr(x), repr(y)) for x, y in pts])
        dots[roi] = str(dots_path.relative_to(out))
        mba[roi] = info["mean_building_area"]
        mask = footprint.rasterize_dots(
            footprint.DotAnnotationSet([PointRecord(x, y) for x, y in pts], info["mean_building_area"]),
            spec.cell_size, grid)
        area = footprint.area_per_tile(mask, grid)
        pop = rng.poisson(spec.persons_per_1000m2 * area / 1000.0)

        # public layers follow the smooth density, not the per-tile building count
        at_density = _tile_lookup(grid, density)
        for b in range(10):
            w = (b - 4.5) / 10.0
            name = f"landsat_b{b + 1}"
            r = _raster_over(grid, 30.0, lambda x, y, w=w: 0.2 + w * 0.1 * at_density(x, y)
                             + 0.02 * rng.standard_normal((y.size, x.size)), name, "continuous")
            path = data / f"{name}_{roi}.asc"
            write_ascii_grid(r, path)
            sources["landsat"].setdefault(name, {})[roi] = str(path.relative_to(out))
        hrsl = _raster_over(grid, 30.0, lambda x, y: (rng.random((y.size, x.size))
                            < 0.2 + 0.6 * at_density(x, y)).astype(float), "hrsl", "binary")
        write_ascii_grid(hrsl, data / f"hrsl_{roi}.asc")
        sources["hrsl"][roi] = f"data/hrsl_{roi}.asc"
        codes = np.array([40, 30, 20, 121, 50])
        lc_idx = np.clip((density * 4 + rng.normal(0, 0.7, (n, n))).round().astype(int), 0, 4)
        lc = Raster(values=codes[lc_idx].astype(float), origin_x=grid.origin_x, origin_y=grid.origin_y,
                    cell_size=100.0, band_name="landcover", frame=FRAME, kind="categorical")
        write_ascii_grid(lc, data / f"landcover_{roi}.asc")
        sources["landcover"][roi] = f"data/landcover_{roi}.asc"
        ntl = _raster_over(grid, 750.0, lambda x, y: 0.5 + 3.0 * at_density(x, y)
                           + 0.1 * rng.random((y.size, x.size)), "ntl", "continuous")
        write_ascii_grid(ntl, data / f"ntl_{roi}.asc")
        sources["ntl"][roi] = f"data/ntl_{roi}.asc"

        x0, y0 = grid.origin_x, grid.origin_y
        side = n * grid.tile_size
        road = {"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"highway": "primary"}, "geometry": {
                "type": "LineString", "coordinates": [[x0 + 10, y0 - 0.3 * side], [x0 + side - 10, y0 - 0.55 * side]]}},
            {"type": "Feature", "properties": {"highway": "track"}, "geometry": {
                "type": "MultiLineString", "coordinates": [
                    [[x0 + 0.7 * side, y0 - 5], [x0 + 0.65 * side, y0 - side + 5]],
                    [[x0 + 0.2 * side, y0 - 0.8 * side], [x0 + 0.5 * side, y0 - 0.9 * side]]]}},
        ]}
        (data / f"roads_{roi}.geojson").write_text(json.dumps(road), encoding="utf-8")
        roads[roi] = f"data/roads_{roi}.geojson"

        # survey block: all tiles inside the margin
        m = spec.survey_margin
        surveyed = [grid.tile_id(r, c) for r in range(m, n - m) for c in range(m, n - m)]
        surveyed = [int(t) for t in surveyed]
        excluded = sorted(rng.choice(surveyed, size=spec.n_excluded, replace=False).tolist())
        hh_rows = []
        for t in surveyed:
            row, col = divmod(t, n)
            total = int(pop.flat[t])
            if t in excluded:
                # non-representative: survey missed most of the tile
                total = total // 5
            while total > 0:
                size = min(total, int(rng.integers(1, 9)))
                total -= size
                x = x0 + (col + rng.uniform(0.01, 0.99)) * grid.tile_size
                y = y0 - (row + rng.uniform(0.01, 0.99)) * grid.tile_size
                hh_rows.append((repr(x), repr(y), size, f"{roi}-psu{(row - m) // 4}{(col - m) // 4}"))
        _write_csv(data / f"households_{roi}.csv", ["x", "y", "persons", "psu"], hh_rows)
        _write_csv(data / f"surveyed_{roi}.csv", ["tile_id", "roi"], [(t, roi) for t in surveyed])
        _write_csv(data / f"exclusions_{roi}.csv", ["tile_id", "reason"],
                   [(t, "buildings missing from imagery") for t in excluded])
        survey_entries.append({
            "roi": roi,
            "households": f"data/households_{roi}.csv",
            "surveyed_tiles": f"data/surveyed_{roi}.csv",
            "exclusions": f"data/exclusions_{roi}.csv",
        })
        truth[roi] = {"area": area, "population": pop, "surveyed": surveyed, "excluded": excluded,
                      "grid": grid}

    raster_sources = []
    for b, (name, paths) in enumerate(sources["landsat"].items()):
        entry = {"name": name, "role": "landsat", "path": paths}
        role = {3: "red", 2: "green", 4: "nir"}.get(b)
        if role:
            entry["band_role"] = role
        raster_sources.append(entry)
    for role in ("hrsl", "landcover", "ntl"):
        raster_sources.append({"name": role, "role": role, "path": sources[role]})

    base = {
        "frame": FRAME,
        "grids": grids,
        "context_rings": [8, 24],
        "survey": survey_entries,
        "model": {"outer_k": 4, "inner_k": 3},
        "seed": 17,
    }
    full = dict(base, sources=raster_sources, roads=roads, output_dir="out_full",
                footprint={"type": "dots", "path": dots, "mean_building_area": mba,
                           "cell_size": spec.cell_size})
    public = dict(base, sources=raster_sources, roads=roads, output_dir="out_public")
    bfi = dict(base, sources=[], roads=None, output_dir="out_bfi",
               footprint=full["footprint"])
    paths = {}
    for label, cfg in (("full", full), ("public", public), ("bfi", bfi)):
        p = out / f"config_{label}.json"
        p.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths[label] = p
    return {"configs": paths, "truth": truth}
