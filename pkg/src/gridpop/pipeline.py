"""Config-driven pipeline steps behind the CLI subcommands."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from gridpop import evaluation, features, footprint, geo_io, regression, survey
from gridpop.config import RunConfig
from gridpop.raster import RESAMPLERS, TileGrid, raster_from_tiles, read_ascii_grid, write_ascii_grid

logger = logging.getLogger(__name__)

FEATURES_CSV = "features.csv"
MANIFEST = "features_manifest.json"
SURVEY_CSV = "survey.csv"
PREDICTIONS_CSV = "predictions.csv"
MODELS_DIR = "models"


class MissingArtifactError(FileNotFoundError):
    """An upstream pipeline output is missing."""


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def footprint_area(cfg: RunConfig, grid: TileGrid):
    fp = cfg.footprint
    roi = grid.roi_label
    path = cfg.resolve(cfg.per_roi(fp["path"], roi, "footprint.path"))
    if fp["type"] == "dots":
        pts = geo_io.parse_points_csv(path)
        mba = cfg.per_roi(fp["mean_building_area"], roi, "mean_building_area")
        mask = footprint.rasterize_dots(footprint.DotAnnotationSet(pts, float(mba)),
                                        float(fp.get("cell_size", 0.5)), grid)
    elif fp["type"] == "probability":
        mask = footprint.threshold_mask(read_ascii_grid(path), float(fp.get("threshold", 0.5)))
    else:
        mask = footprint.as_mask(read_ascii_grid(path))
    if fp.get("min_area") is not None:
        mask = footprint.filter_components(mask, float(fp["min_area"]), float(fp["max_area"]))
    return footprint.area_per_tile(mask, grid)


def tile_sources(cfg: RunConfig, grid: TileGrid) -> features.TileSources:
    """Resample every configured source onto ``grid``."""
    roi = grid.roi_label
    src = features.TileSources()
    cache = {}

    def load(s):
        path = cfg.resolve(s.path_for(roi))
        if path not in cache:
            cache[path] = read_ascii_grid(path)
        return RESAMPLERS[s.resampling](cache[path], grid)

    landsat = cfg.sources_by_role("landsat")
    if landsat:
        src.landsat = {s.name: load(s) for s in landsat}
        src.band_roles = {s.band_role: s.name for s in landsat if s.band_role}
    for role in ("hrsl", "landcover", "ntl"):
        found = cfg.sources_by_role(role)
        if found:
            setattr(src, role, load(found[0]))
    if cfg.roads is not None:
        lines = geo_io.parse_lines_geojson(cfg.resolve(cfg.per_roi(cfg.roads, roi, "roads")))
        src.road_tiles = geo_io.rasterize_lines(lines, grid)
    if cfg.footprint is not None:
        src.building_area = footprint_area(cfg, grid)
    return src


def scheme_of(cfg: RunConfig):
    if cfg.landcover_scheme:
        return features.LandCoverScheme.from_dict(cfg.landcover_scheme)
    return features.LandCoverScheme.default()


def build_features(cfg: RunConfig, grids=None) -> features.FeatureTable:
    grids = grids or cfg.grids
    sources = {roi: tile_sources(cfg, g) for roi, g in grids.items()}
    return features.assemble_features(grids, sources, scheme_of(cfg), cfg.context_rings)


def build_survey(cfg: RunConfig) -> survey.SurveyTable:
    tables = []
    for entry in cfg.survey:
        roi = entry["roi"]
        grid = cfg.grids[roi]
        households = geo_io.parse_points_csv(cfg.resolve(entry["households"]))
        listed = None
        if entry.get("surveyed_tiles"):
            listed = survey.read_surveyed_tiles(cfg.resolve(entry["surveyed_tiles"]), roi)
        t = survey.grid_population(households, grid, listed)
        if entry.get("exclusions"):
            t = survey.apply_exclusions(t, survey.read_exclusions(cfg.resolve(entry["exclusions"]), roi))
        tables.append(t)
    if not tables:
        raise ValueError("no survey entries configured")
    return survey.SurveyTable.concat(tables)


def run_features(cfg: RunConfig):
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    table = build_features(cfg)
    table.to_csv(out / FEATURES_CSV)
    features.write_manifest(table, out / MANIFEST, {
        "config": cfg.raw,
        "grids": {roi: g.to_dict() for roi, g in cfg.grids.items()},
        "landcover_scheme": scheme_of(cfg).to_dict(),
        "sources": {s.name: {"role": s.role, "path": s.paths, "resampling": s.resampling}
                    for s in cfg.sources},
    })
    logger.info("wrote %d tiles x %d features", len(table), len(table.names))
    return table


def _require(path, hint):
    if not Path(path).exists():
        raise MissingArtifactError(f"{path} not found; {hint}")
    return path


def hyperparams(cfg: RunConfig):
    m = cfg.model
    return regression.ModelHyperparams(
        deltas=tuple(m.get("deltas", regression.DEFAULT_DELTAS)),
        lambda_factors=tuple(m.get("lambda_factors", regression.DEFAULT_LAMBDA_FACTORS)),
        inner_k=int(m.get("inner_k", 3)),
    )


def outer_folds(cfg: RunConfig, keys):
    x = np.empty(len(keys))
    y = np.empty(len(keys))
    for i, (roi, tid) in enumerate(keys):
        cx, cy = cfg.grids[roi].centers(np.array([tid]))
        x[i], y[i] = cx[0], cy[0]
    return regression.spatial_kfold(keys, x, y, int(cfg.model.get("outer_k", 4)))


def run_train(cfg: RunConfig, seed=None, threads=1):
    out = cfg.output_dir
    seed = cfg.seed if seed is None else seed
    table = features.FeatureTable.from_csv(_require(out / FEATURES_CSV, "run 'features' first"))
    surv = build_survey(cfg)
    surv.to_csv(out / SURVEY_CSV)
    active = surv.active()
    folds = outer_folds(cfg, active.keys())
    result = regression.nested_cv_train(table, surv, folds, hyperparams(cfg), seed=seed, threads=threads)
    models_dir = out / MODELS_DIR
    models_dir.mkdir(parents=True, exist_ok=True)
    for model in result.models:
        d = model.to_dict()
        d["config"] = cfg.raw
        (models_dir / f"model_fold{model.fold}.json").write_text(_dump(d), encoding="utf-8")
    (out / PREDICTIONS_CSV).write_text(result.predictions_csv(), encoding="utf-8")
    return result


def run_evaluate(cfg: RunConfig):
    out = cfg.output_dir
    preds = evaluation.read_predictions(_require(out / PREDICTIONS_CSV, "run 'train' first"))
    expected = None
    if (out / SURVEY_CSV).exists():
        expected = survey.read_survey_csv(out / SURVEY_CSV).active().keys()
    report = evaluation.pooled_report(preds, expected, config=cfg.raw)
    evaluation.write_report(report, preds, out)
    return report


def load_model(path) -> regression.FittedModel:
    return regression.FittedModel.from_json(Path(path).read_text(encoding="utf-8"))


def run_predict(cfg: RunConfig, model_path, grid: TileGrid):
    """Predict counts on ``grid`` and write an ASCII grid; tiles without a
    complete feature vector are nodata."""
    model = load_model(model_path)
    table = build_features(cfg, {grid.roi_label: grid})
    missing = [n for n in model.feature_names if n not in table.columns]
    if missing:
        raise ValueError(f"model features not computable from the config: {missing}")
    pred = model.predict(table.matrix(model.feature_names)) if len(table) else np.empty(0)
    values = np.full(grid.n_tiles, np.nan)
    values[table.tile_ids] = pred
    raster = raster_from_tiles(values, grid, band_name=f"predicted_population_{grid.roi_label}",
                               frame=cfg.frame, kind="continuous")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"prediction_{grid.roi_label or 'grid'}.asc"
    write_ascii_grid(raster, path)
    return path, values
