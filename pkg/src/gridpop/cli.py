"""Command-line entry point: ``gridpop validate|features|train|evaluate|predict``.

Exit codes: 0 success, 1 runtime failure, 2 configuration failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from gridpop import __version__, pipeline
from gridpop.config import ConfigError, load_config, validate
from gridpop.raster import TileGrid

logger = logging.getLogger("gridpop")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="gridpop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gridpop {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("validate", "check the run configuration"),
        ("features", "build the per-tile feature table"),
        ("train", "nested spatial cross-validation; writes fold models and pooled predictions"),
        ("evaluate", "metrics report for the pooled predictions and the null model"),
        ("predict", "predict population counts on a grid"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run configuration JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (results do not depend on this)")
        sp.add_argument("--out", default=None, help="output directory (overrides config and $GRIDPOP_OUT)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "predict":
            sp.add_argument("--model", required=True, help="fitted model JSON")
            grid = sp.add_mutually_exclusive_group()
            grid.add_argument("--roi", help="predict on this configured ROI grid")
            grid.add_argument("--grid", help="JSON file describing the target grid")
    return p


def _config_failure(issues):
    for code, msg in issues:
        print(f"error [{code}] {msg}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.out)
    except ConfigError as exc:
        return _config_failure(exc.issues)
    issues = validate(cfg)
    if args.command == "validate":
        if issues:
            return _config_failure(issues)
        print(f"config OK: {len(cfg.grids)} grid(s), {len(cfg.sources)} raster source(s), "
              f"feature set {cfg.label()!r}")
        return EXIT_OK
    if issues:
        return _config_failure(issues)

    try:
        if args.command == "features":
            table = pipeline.run_features(cfg)
            print(f"{len(table)} tiles, {len(table.names)} features -> {cfg.output_dir}")
        elif args.command == "train":
            result = pipeline.run_train(cfg, seed=args.seed, threads=args.threads)
            print(f"{len(result.keys)} tiles in {len(result.models)} folds -> {cfg.output_dir}")
        elif args.command == "evaluate":
            report = pipeline.run_evaluate(cfg)
            for label, row in report.rows.items():
                print(f"{label:12s} " + "  ".join(f"{k}={v:.4g}" for k, v in row.items()))
        elif args.command == "predict":
            if args.grid:
                grid = TileGrid.from_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))
            else:
                roi = args.roi or next(iter(cfg.grids))
                if roi not in cfg.grids:
                    return _config_failure([("E001", f"no grid for ROI {roi!r}")])
                grid = cfg.grids[roi]
            path, _ = pipeline.run_predict(cfg, args.model, grid)
            print(f"wrote {path}")
    except pipeline.MissingArtifactError as exc:
        return _config_failure([("E009", str(exc))])
    except ConfigError as exc:
        return _config_failure(exc.issues)
    except (ValueError, RuntimeError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
