"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line,
repeated in the terminal summary."""
import csv
import json
import shutil
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gridpop import evaluation as ev
from gridpop import footprint, geo_io, kernels
from gridpop.cli import main
from gridpop.features import distance_to_road
from gridpop.raster import TileGrid
from gridpop.regression import fit_huber_l1, lambda_max
from gridpop.survey import grid_population, total_persons
from gridpop.synthetic import WorldSpec, make_world
from oracles import brute_edt, grid_search_objective

pytestmark = pytest.mark.acceptance


class Criterion:
    """Collects checks for one criterion and reports a single line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures, self.notes = [], []

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.notes + self.failures)
        line = f"[{status}] criterion {self.number}: {self.title}" + (f" ({detail})" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)
        if exc is None and self.failures:
            pytest.fail("; ".join(self.failures))
        return False


def test_1_metric_hand_checks():
    with Criterion(1, "metric hand-check suite") as c:
        tol = 1e-12
        cases = [
            ("r2 perfect", ev.r2([1, 2, 3], [1, 2, 3]), 1.0),
            ("r2 mean", ev.r2([1, 2, 3], [2, 2, 2]), 0.0),
            ("r2 hand", ev.r2([1, 2, 3], [1, 1, 3]), 0.5),
            ("meae zero", ev.meae([4, 5], [4, 5]), 0.0),
            ("meae even", ev.meae([0, 0], [1, 3]), 2.0),
            ("meae odd", ev.meae([0, 0, 0], [0, 1, 10]), 1.0),
            ("meape hand", ev.meape([10, 20, 40], [15, 20, 30]), 25.0),
            ("meape zero", ev.meape([3, 7], [3, 7]), 0.0),
            ("meape skip value", ev.meape_with_skips([0, 10], [5, 10])[0], 0.0),
            ("meape skip count", ev.meape_with_skips([0, 10], [5, 10])[1], 1),
            ("ameape hand", ev.ameape([10, 20, 40], [15, 20, 30]), 0.2),
            ("ameape zero", ev.ameape([3, 7], [3, 7]), 0.0),
            ("ameape y=0", ev.ameape([0], [5]), 0.5),
            ("aggpe hand", ev.aggpe([100], [87]), 13.0),
            ("aggpe equal totals", ev.aggpe([1, 2, 3], [2, 2, 2]), 0.0),
            ("aggpe in-sample null", ev.aggpe([3, 8, 1, 4], [4, 4, 4, 4]), 0.0),
        ]
        for name, got, want in cases:
            c.check(abs(got - want) <= tol, f"{name}: {got} != {want}")
        for name, fn in (("r2 constant", lambda: ev.r2([2, 2], [1, 3])),
                         ("meape all zero", lambda: ev.meape([0, 0], [1, 1])),
                         ("aggpe zero total", lambda: ev.aggpe([0], [1])),
                         ("meae empty", lambda: ev.meae([], []))):
            try:
                fn()
                c.check(False, f"{name}: no error")
            except ValueError:
                pass
        y = np.array([3.0, 5.0, 8.0, 13.0])
        perfect = {"tile_id": np.arange(4), "roi": np.array(["A"] * 4, dtype=object),
                   "fold": np.array([0, 0, 1, 1]), "observed": y, "predicted": y}
        rep = ev.pooled_report(perfect)
        c.check(list(rep.rows["Model"]) == ["R2", "MeAPE", "aMeAPE", "MeAE", "AggPE"],
                f"metric keys {list(rep.rows['Model'])}")
        c.check(rep.rows["Model"] == {"R2": 1.0, "MeAPE": 0.0, "aMeAPE": 0.0, "MeAE": 0.0, "AggPE": 0.0},
                "perfect predictions do not give zero errors")
        c.check("Null Model" in rep.rows, "no null model row")
        c.check(rep.rows["Null Model"]["R2"] < 0, "pooled null R2 should be negative here")
        c.note(f"{len(cases)} examples")


def test_2_distance_transform():
    with Criterion(2, "distance transform vs brute force") as c:
        rng = np.random.default_rng(2024)
        grid = TileGrid(0.0, 5000.0, 50, 50, 100.0)
        masks = []
        for _ in range(100):
            m = rng.random((50, 50)) < rng.uniform(0.001, 0.2)
            m[rng.integers(50), rng.integers(50)] = True
            masks.append(m)
        start = time.perf_counter()
        results = [distance_to_road(m, grid) for m in masks]
        elapsed = time.perf_counter() - start
        mismatches = sum(not np.array_equal(d, np.sqrt(brute_edt(m)) * 100.0) for d, m in zip(results, masks))
        c.check(mismatches == 0, f"{mismatches} masks differ from the oracle")
        c.check(elapsed < 1.0, f"runtime {elapsed:.3f}s >= 1s")
        c.note(f"100 masks, {elapsed * 1000:.1f} ms, backend {kernels.BACKEND}")


def test_3_solver_vs_oracle():
    with Criterion(3, "solver vs grid-search oracle") as c:
        rng = np.random.default_rng(33)
        worst = 0.0
        for i in range(25):
            n = int(rng.integers(6, 21))
            X = rng.standard_normal((n, 2))
            y = X @ rng.uniform(-3, 3, 2) + rng.uniform(-2, 2) + rng.standard_t(3, size=n) * 0.5
            delta, lam = float(rng.uniform(0.2, 2.5)), float(rng.uniform(1e-3, 0.4))
            res = fit_huber_l1(X, y, delta, lam)
            trace = np.asarray(res.trace)
            c.check((np.diff(trace) <= 0).all(), f"problem {i}: objective trace increases")
            oracle = grid_search_objective(X, y, delta, lam)
            gap = abs(res.objective - oracle)
            worst = max(worst, gap)
            c.check(gap <= 1e-3, f"problem {i}: |solver - oracle| = {gap:.2e}")
        c.note(f"25 problems, max gap {worst:.2e}")


def test_4_sparsity_threshold():
    with Criterion(4, "lambda >= lambda_max gives zero coefficients") as c:
        rng = np.random.default_rng(44)
        for i in range(20):
            n, p = int(rng.integers(5, 60)), int(rng.integers(1, 12))
            X = rng.standard_normal((n, p))
            y = X @ rng.standard_normal(p) * 2 + rng.standard_normal(n)
            delta = float(rng.uniform(0.2, 3.0))
            lmax = lambda_max(X, y, delta)
            for lam in (lmax, lmax * float(rng.uniform(1, 10))):
                coef = fit_huber_l1(X, y, delta, lam).coef
                c.check(np.all(coef == 0.0), f"problem {i}: lam={lam:.4g} left {np.count_nonzero(coef)} nonzero")
        c.note("20 problems, lam = lambda_max and above")


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_world")
    return make_world(root, WorldSpec())


def _report(out):
    return json.loads((out / "report.json").read_text())["rows"]["Model"]


def test_5_synthetic_end_to_end(world):
    with Criterion(5, "synthetic end-to-end") as c:
        start = time.perf_counter()
        results = {}
        for label in ("full", "public"):
            cfg = str(world["configs"][label])
            for cmd in ("features", "train", "evaluate"):
                code = main([cmd, "--config", cfg])
                c.check(code == 0, f"{label} {cmd} exit {code}")
            results[label] = _report(world["configs"][label].parent / f"out_{label}")
        elapsed = time.perf_counter() - start
        full, public = results["full"], results["public"]
        n_tiles = sum(len(t["surveyed"]) - len(t["excluded"]) for t in world["truth"].values())
        c.check(full["R2"] >= 0.9, f"full R2 {full['R2']:.4f} < 0.9")
        c.check(full["AggPE"] <= 5.0, f"full AggPE {full['AggPE']:.2f}% > 5%")
        c.check(public["R2"] < full["R2"], f"public R2 {public['R2']:.4f} not below full {full['R2']:.4f}")
        c.check(elapsed < 60.0, f"runtime {elapsed:.1f}s >= 60s")
        c.note(f"{n_tiles} tiles, full R2={full['R2']:.4f} AggPE={full['AggPE']:.2f}%, "
               f"public R2={public['R2']:.4f}, {elapsed:.1f}s")


def test_6_feature_counts(world, tmp_path):
    with Criterion(6, "feature-count identity") as c:
        for label, want in (("full", 61), ("public", 58), ("bfi", 3)):
            out = tmp_path / label
            c.check(main(["features", "--config", str(world["configs"][label]), "--out", str(out)]) == 0,
                    f"{label} features failed")
            with open(out / "features.csv") as fh:
                got = len(next(csv.reader(fh))) - 2
            c.check(got == want, f"{label}: {got} columns, expected {want}")
        c.note("61 / 58 / 3")


def test_7_conservation(world):
    with Criterion(7, "conservation of persons and footprint area") as c:
        data = world["configs"]["full"].parent / "data"
        cfg = json.loads(world["configs"]["full"].read_text())
        for roi, truth in world["truth"].items():
            grid = truth["grid"]
            houses = geo_io.parse_points_csv(data / f"households_{roi}.csv")
            table = grid_population(houses, grid)
            c.check(int(table.observed_count.sum()) == total_persons(houses), f"{roi}: persons not conserved")
            dots = geo_io.parse_points_csv(data / f"dots_{roi}.csv")
            mask = footprint.rasterize_dots(
                footprint.DotAnnotationSet(dots, cfg["footprint"]["mean_building_area"][roi]),
                cfg["footprint"]["cell_size"], grid)
            area = footprint.area_per_tile(mask, grid)
            total = int(mask.values.sum()) * mask.cell_size ** 2
            c.check(area.sum() == total, f"{roi}: area {area.sum()} != {total}")
            filtered = footprint.filter_components(mask, 20.0, 60.0)
            c.check(footprint.area_per_tile(filtered, grid).sum() == int(filtered.values.sum()) * 0.25,
                    f"{roi}: filtered area not conserved")
        c.note("exact equality, both ROIs")


def test_8_determinism(world, tmp_path):
    with Criterion(8, "byte-identical train outputs") as c:
        cfg = str(world["configs"]["full"])
        runs = []
        for k in (1, 2):
            out = tmp_path / f"run{k}"
            c.check(main(["features", "--config", cfg, "--out", str(out)]) == 0, "features failed")
            c.check(main(["train", "--config", cfg, "--out", str(out), "--threads", str(k)]) == 0,
                    "train failed")
            runs.append(out)
        a, b = runs
        names = ["predictions.csv"] + [f"models/model_fold{f}.json" for f in range(4)]
        for name in names:
            c.check((a / name).read_bytes() == (b / name).read_bytes(), f"{name} differs")
        c.note(f"{len(names)} files compared, threads 1 vs 2")
        shutil.rmtree(a)
        shutil.rmtree(b)
