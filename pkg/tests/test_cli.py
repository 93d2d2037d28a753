import csv
import json
import shutil

import numpy as np
import pytest

from gridpop.cli import main


def cfg_copy(world, tmp_path, label="full", edit=None):
    """Copy one of the world's configs next to its data, with an optional edit."""
    src = world["configs"][label]
    cfg = json.loads(src.read_text())
    cfg["output_dir"] = str(tmp_path / "out")
    if edit:
        edit(cfg)
    path = src.parent / f"cfg_{tmp_path.name}.json"
    path.write_text(json.dumps(cfg))
    return path


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


@pytest.fixture(scope="module")
def trained(small_world, tmp_path_factory):
    """Full and public runs through features, train and evaluate."""
    out = {}
    for label in ("full", "public"):
        d = tmp_path_factory.mktemp(label)
        path = cfg_copy(small_world, d, label)
        for cmd in ("features", "train", "evaluate"):
            assert main([cmd, "--config", str(path), "--threads", "2"]) == 0
        out[label] = (path, d / "out")
    return out


def test_validate_ok(small_world, tmp_path, capsys):
    assert main(["validate", "--config", str(cfg_copy(small_world, tmp_path))]) == 0
    assert "config OK" in capsys.readouterr().out


def test_missing_raster(small_world, tmp_path, capsys):
    def edit(cfg):
        cfg["sources"][0]["path"]["BOA"] = "data/nope.asc"
    assert main(["validate", "--config", str(cfg_copy(small_world, tmp_path, edit=edit))]) == 2
    err = capsys.readouterr().err
    assert "E002" in err and "nope.asc" in err


def test_mixed_frames(small_world, tmp_path, capsys):
    data = small_world["configs"]["full"].parent / "data"
    shutil.copy(data / "ntl_BOA.asc", data / "ntl_other.asc")
    (data / "ntl_other.band.json").write_text(json.dumps({"band_name": "ntl", "frame": "EPSG:4326"}))

    def edit(cfg):
        next(s for s in cfg["sources"] if s["role"] == "ntl")["path"]["BOA"] = "data/ntl_other.asc"
    assert main(["validate", "--config", str(cfg_copy(small_world, tmp_path, edit=edit))]) == 2
    assert "E003" in capsys.readouterr().err


def test_schema_errors(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{oops")
    assert main(["validate", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"frame": "F", "grids": []}))
    assert main(["features", "--config", str(bad)]) == 2
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 2
    assert "E00" in capsys.readouterr().err


def test_duplicate_source_and_bad_resampling(small_world, tmp_path, capsys):
    def edit(cfg):
        cfg["sources"].append(dict(cfg["sources"][0]))
        cfg["sources"][1]["resampling"] = "bilinear"
    assert main(["validate", "--config", str(cfg_copy(small_world, tmp_path, edit=edit))]) == 2
    err = capsys.readouterr().err
    assert "E005" in err and "E006" in err


def test_missing_upstream_artifacts(small_world, tmp_path, capsys):
    path = str(cfg_copy(small_world, tmp_path))
    assert main(["evaluate", "--config", path]) == 2
    assert main(["train", "--config", path]) == 2
    assert "E009" in capsys.readouterr().err


def test_runtime_failure_exit_1(small_world, tmp_path):
    data = small_world["configs"]["full"].parent / "data"
    (data / "households_far.csv").write_text("x,y,persons\n0,0,3\n")

    def edit(cfg):
        cfg["survey"][0]["households"] = "data/households_far.csv"
    path = str(cfg_copy(small_world, tmp_path, edit=edit))
    assert main(["features", "--config", path]) == 0
    assert main(["train", "--config", path]) == 1


@pytest.mark.parametrize("label,count", [("full", 61), ("public", 58), ("bfi", 3)])
def test_feature_columns(small_world, tmp_path, label, count):
    path = str(cfg_copy(small_world, tmp_path, label))
    assert main(["features", "--config", path]) == 0
    cols = header(tmp_path / "out" / "features.csv")
    assert cols[:2] == ["tile_id", "roi"] and len(cols) - 2 == count
    manifest = json.loads((tmp_path / "out" / "features_manifest.json").read_text())
    assert manifest["columns"] == cols[2:] and manifest["config"]["frame"]


def test_features_rerun_identical(trained, tmp_path):
    path, out = trained["full"]
    first = (out / "features.csv").read_bytes()
    assert main(["features", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "features.csv").read_bytes() == first


def test_train_outputs(trained):
    _, out = trained["full"]
    models = sorted((out / "models").glob("model_fold*.json"))
    assert [m.name for m in models] == [f"model_fold{f}.json" for f in range(4)]
    m = json.loads(models[0].read_text())
    assert {"feature_names", "coefficients", "intercept", "means", "stds", "delta", "lam",
            "seed", "fold", "config"} <= set(m)
    assert header(out / "predictions.csv") == ["tile_id", "roi", "fold", "observed", "predicted"]


def test_train_deterministic_and_thread_independent(trained, tmp_path):
    path, out = trained["full"]
    shutil.copy(out / "features.csv", tmp_path / "features.csv")
    assert main(["train", "--config", str(path), "--out", str(tmp_path), "--threads", "1"]) == 0
    assert (tmp_path / "predictions.csv").read_bytes() == (out / "predictions.csv").read_bytes()
    for f in range(4):
        name = f"models/model_fold{f}.json"
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_seed_override_recorded(trained, tmp_path):
    path, out = trained["full"]
    shutil.copy(out / "features.csv", tmp_path / "features.csv")
    assert main(["train", "--config", str(path), "--out", str(tmp_path), "--seed", "99"]) == 0
    assert json.loads((tmp_path / "models" / "model_fold0.json").read_text())["seed"] == 99


def test_evaluate_report(trained):
    _, out = trained["full"]
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["rows"]) == {"Model", "Null Model"}
    assert set(rep["rows"]["Model"]) == {"R2", "MeAPE", "aMeAPE", "MeAE", "AggPE"}
    assert (out / "scatter.svg").exists() and (out / "pred_vs_obs.csv").exists()


def test_predict_matches_pooled_predictions(trained):
    path, out = trained["full"]
    with open(out / "predictions.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["roi"] == "BOA"]
    for f in range(4):
        assert main(["predict", "--config", str(path), "--roi", "BOA",
                     "--model", str(out / "models" / f"model_fold{f}.json")]) == 0
        from gridpop.raster import read_ascii_grid
        grid = read_ascii_grid(out / "prediction_BOA.asc")
        flat = grid.masked().ravel()
        mine = [r for r in rows if int(r["fold"]) == f]
        assert mine
        for r in mine:
            assert flat[int(r["tile_id"])] == pytest.approx(float(r["predicted"]), rel=1e-9)


def test_predict_constant_model(trained, tmp_path):
    path, out = trained["public"]
    model = json.loads((out / "models" / "model_fold0.json").read_text())
    model["coefficients"] = [0.0] * len(model["coefficients"])
    (tmp_path / "m.json").write_text(json.dumps(model))
    assert main(["predict", "--config", str(path), "--model", str(tmp_path / "m.json"),
                 "--out", str(tmp_path)]) == 0
    from gridpop.raster import read_ascii_grid
    vals = read_ascii_grid(tmp_path / "prediction_BOA.asc").masked()
    expected = max(0.0, np.expm1(model["target_center"] + model["target_scale"] * model["intercept"]))
    finite = vals[~np.isnan(vals)]
    assert finite.size and np.allclose(finite, expected, rtol=1e-12)


def test_predict_out_of_extent(trained, tmp_path):
    path, out = trained["public"]
    g = tmp_path / "grid.json"
    g.write_text(json.dumps({"roi": "BOA", "origin_x": 0.0, "origin_y": 100.0, "n_cols": 2, "n_rows": 2}))
    assert main(["predict", "--config", str(path), "--grid", str(g),
                 "--model", str(out / "models" / "model_fold0.json"), "--out", str(tmp_path)]) == 1


def test_output_dir_precedence(small_world, tmp_path, monkeypatch):
    path = str(cfg_copy(small_world, tmp_path, "bfi"))
    monkeypatch.setenv("GRIDPOP_OUT", str(tmp_path / "env"))
    assert main(["features", "--config", path]) == 0
    assert (tmp_path / "env" / "features.csv").exists()
    assert main(["features", "--config", path, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "features.csv").exists()
    assert not (tmp_path / "out").exists()
