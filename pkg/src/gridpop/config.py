"""JSON run configuration and its validation."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from gridpop.raster import AsciiGridError, TileGrid, read_ascii_header

ROLES = ("landsat", "hrsl", "landcover", "ntl")
DEFAULT_RESAMPLING = {"landsat": "average", "hrsl": "any", "landcover": "nearest", "ntl": "nearest"}
RESAMPLING_MODES = ("average", "nearest", "any")
FOOTPRINT_TYPES = ("dots", "probability", "mask")
OUT_ENV = "GRIDPOP_OUT"


class ConfigError(ValueError):
    """Configuration problems; ``issues`` holds ``(code, message)`` pairs."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"[{c}] {m}" for c, m in self.issues))


@dataclass
class Source:
    name: str
    role: str
    paths: dict | str
    resampling: str
    band_role: str | None = None

    def path_for(self, roi):
        if isinstance(self.paths, dict):
            if roi not in self.paths:
                raise ConfigError([("E010", f"source {self.name!r} has no file for ROI {roi!r}")])
            return self.paths[roi]
        return self.paths


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    frame: str
    grids: dict                      # roi -> TileGrid
    sources: list
    roads: dict | str | None
    footprint: dict | None
    landcover_scheme: dict | None
    context_rings: tuple
    survey: list
    model: dict
    seed: int
    output_dir: Path

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    def per_roi(self, value, roi, what):
        if isinstance(value, dict):
            if roi not in value:
                raise ConfigError([("E010", f"{what} has no entry for ROI {roi!r}")])
            return value[roi]
        return value

    def sources_by_role(self, role):
        return [s for s in self.sources if s.role == role]

    def label(self):
        """Short feature-set label in the style 'Public + BFI'."""
        public = bool(self.sources or self.roads)
        parts = (["Public"] if public else []) + (["BFI"] if self.footprint else [])
        return " + ".join(parts) or "empty"


def _as_paths(value, where, issues):
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and all(isinstance(v, str) for v in value.values()):
        return dict(value)
    issues.append(("E001", f"{where}: path must be a string or an ROI->path object"))
    return None


def parse_config(raw: dict, base_dir, out_override=None) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON object (schema checks only)."""
    issues = []
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError([("E001", "config must be a JSON object")])
    frame = raw.get("frame")
    if not isinstance(frame, str) or not frame:
        issues.append(("E001", "'frame' label is required"))
    grids = {}
    for i, g in enumerate(raw.get("grids") or []):
        try:
            grid = TileGrid.from_dict(g)
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(("E001", f"grids[{i}]: {exc}"))
            continue
        if grid.roi_label in grids:
            issues.append(("E001", f"duplicate grid ROI {grid.roi_label!r}"))
        grids[grid.roi_label] = grid
    if not grids and not any(c == "E001" and "grids[" in m for c, m in issues):
        issues.append(("E001", "at least one grid is required"))

    sources, names = [], set()
    for i, s in enumerate(raw.get("sources") or []):
        where = f"sources[{i}]"
        name, role = s.get("name"), s.get("role")
        if not name:
            issues.append(("E001", f"{where}: 'name' required"))
            continue
        if name in names:
            issues.append(("E005", f"duplicate source name {name!r}"))
        names.add(name)
        if role not in ROLES:
            issues.append(("E006", f"{where}: role must be one of {ROLES}, got {role!r}"))
            continue
        mode = s.get("resampling", DEFAULT_RESAMPLING[role])
        if mode not in RESAMPLING_MODES:
            issues.append(("E006", f"{where}: resampling must be one of {RESAMPLING_MODES}"))
        band_role = s.get("band_role")
        if band_role is not None and (role != "landsat" or band_role not in ("nir", "red", "green")):
            issues.append(("E006", f"{where}: band_role must be nir/red/green on a landsat source"))
        paths = _as_paths(s.get("path"), where, issues)
        sources.append(Source(name, role, paths, mode, band_role))
    for role in ("hrsl", "landcover", "ntl"):
        if len([s for s in sources if s.role == role]) > 1:
            issues.append(("E005", f"more than one {role!r} source"))
    for br in ("nir", "red", "green"):
        if len([s for s in sources if s.band_role == br]) > 1:
            issues.append(("E005", f"band role {br!r} assigned twice"))

    roads = raw.get("roads")
    if roads is not None:
        roads = _as_paths(roads, "roads", issues)

    footprint = raw.get("footprint")
    if footprint is not None:
        ftype = footprint.get("type")
        if ftype not in FOOTPRINT_TYPES:
            issues.append(("E007", f"footprint.type must be one of {FOOTPRINT_TYPES}"))
        if _as_paths(footprint.get("path"), "footprint.path", issues) is None:
            pass
        if ftype == "dots":
            mba = footprint.get("mean_building_area")
            if mba is None:
                issues.append(("E007", "dots footprint needs mean_building_area (per ROI)"))
            else:
                for roi in grids:
                    v = mba.get(roi) if isinstance(mba, dict) else mba
                    if not isinstance(v, (int, float)) or not v > 0:
                        issues.append(("E007", f"mean_building_area for ROI {roi!r} must be positive"))
        if ftype == "probability":
            t = footprint.get("threshold", 0.5)
            if not isinstance(t, (int, float)) or not 0 < t < 1:
                issues.append(("E007", "footprint.threshold must be in (0, 1)"))
        lo, hi = footprint.get("min_area"), footprint.get("max_area")
        if (lo is None) != (hi is None):
            issues.append(("E007", "give both min_area and max_area, or neither"))
        elif lo is not None and not lo < hi:
            issues.append(("E007", "min_area must be smaller than max_area"))

    rings = tuple(raw.get("context_rings", (8, 24)))
    for r in rings:
        if r not in (8, 24, 48, 80):
            issues.append(("E001", f"unsupported context ring {r}"))

    survey = list(raw.get("survey") or [])
    for i, s in enumerate(survey):
        if s.get("roi") not in grids:
            issues.append(("E001", f"survey[{i}]: roi {s.get('roi')!r} has no grid"))
        if not s.get("households"):
            issues.append(("E001", f"survey[{i}]: 'households' path required"))

    model = dict(raw.get("model") or {})
    seed = raw.get("seed", 17)
    if not isinstance(seed, int):
        issues.append(("E001", "'seed' must be an integer"))

    out = out_override or os.environ.get(OUT_ENV) or raw.get("output_dir") or "out"
    out = Path(out)
    if not out.is_absolute():
        out = (Path.cwd() / out) if (out_override or os.environ.get(OUT_ENV)) else base_dir / out

    if issues:
        raise ConfigError(issues)
    return RunConfig(
        raw=raw, base_dir=base_dir, frame=frame, grids=grids, sources=sources, roads=roads,
        footprint=footprint, landcover_scheme=raw.get("landcover_scheme"), context_rings=rings,
        survey=survey, model=model, seed=seed, output_dir=out,
    )


def load_config(path, out_override=None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([("E002", f"config file not found: {path}")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([("E001", f"{path}: invalid JSON: {exc}")]) from None
    return parse_config(raw, path.parent, out_override)


def _all_paths(value):
    if value is None:
        return []
    return list(value.values()) if isinstance(value, dict) else [value]


def validate(cfg: RunConfig):
    """File-level checks: existence, frame labels and raster/grid overlap.

    Returns a list of ``(code, message)``; empty when the config is usable.
    """
    issues = []

    def exists(p, what):
        full = cfg.resolve(p)
        if not full.exists():
            issues.append(("E002", f"{what}: file not found: {full}"))
            return None
        return full

    def check_raster(p, what, rois):
        full = exists(p, what)
        if full is None:
            return
        try:
            head = read_ascii_header(full)
        except AsciiGridError as exc:
            issues.append(("E008", f"{what}: {exc}"))
            return
        if head["frame"] is not None and head["frame"] != cfg.frame:
            issues.append(("E003", f"{what}: frame {head['frame']!r} differs from run frame {cfg.frame!r}"))
        x0, y0, x1, y1 = head["bounds"]
        for roi in rois:
            gx0, gy0, gx1, gy1 = cfg.grids[roi].bounds
            if x0 >= gx1 or gx0 >= x1 or y0 >= gy1 or gy0 >= y1:
                issues.append(("E004", f"{what}: raster does not overlap grid {roi!r}"))

    def rois_of(paths):
        if isinstance(paths, dict):
            return {p: [r] for r, p in paths.items() if r in cfg.grids}
        return {paths: list(cfg.grids)}

    for s in cfg.sources:
        if isinstance(s.paths, dict):
            for roi in cfg.grids:
                if roi not in s.paths:
                    issues.append(("E010", f"source {s.name!r} has no file for ROI {roi!r}"))
        for p, rois in rois_of(s.paths).items():
            check_raster(p, f"source {s.name!r}", rois)
    if cfg.roads is not None:
        for p in _all_paths(cfg.roads):
            exists(p, "roads")
    if cfg.footprint is not None:
        ftype = cfg.footprint["type"]
        for p, rois in rois_of(cfg.footprint["path"]).items():
            if ftype == "dots":
                exists(p, "footprint dots")
            else:
                check_raster(p, f"footprint {ftype}", rois)
    for i, s in enumerate(cfg.survey):
        exists(s["households"], f"survey[{i}].households")
        for key in ("surveyed_tiles", "exclusions"):
            if s.get(key):
                exists(s[key], f"survey[{i}].{key}")
    return issues
