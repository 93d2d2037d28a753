"""Time the compiled and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]
"""
import argparse
import json
import timeit

import numpy as np

from gridpop import kernels


def cases(rng):
    mask = (rng.random((200, 200)) < 0.01).astype(np.uint8)
    mask[0, 0] = 1
    blobs = (rng.random((400, 400)) < 0.45).astype(np.uint8)
    segs = rng.uniform(0, 5000, size=(200, 4))
    pts = np.column_stack([rng.uniform(0, 100, 400), -rng.uniform(0, 100, 400)])
    X = rng.standard_normal((150, 60))
    X[:, 1] = X[:, 0] + 1e-3 * rng.standard_normal(150)
    y = X[:, :5] @ [1.0, -1.0, 0.5, 0.0, 2.0] + rng.standard_normal(150)
    L_bound = np.linalg.norm(np.column_stack([np.ones(150), X]), 2) ** 2 / 150
    return {
        "edt_squared 200x200": lambda k: k.edt_squared(mask),
        "label8 400x400": lambda k: k.label8(blobs),
        "supercover 200 segments, 50x50 tiles": lambda k: k.supercover_segments(segs, 0.0, 5000.0, 100.0, 50, 50),
        "rasterize_discs 400 dots, 200x200 cells": lambda k: k.rasterize_discs(pts, 3.5, 0.0, 0.0, 0.5, 200, 200),
        "fista_huber_l1 150x60": lambda k: k.fista_huber_l1(
            X, y, 1.0, 1e-3, np.zeros(60), 0.0, L_bound / 64, L_bound, 10_000, 1e-9),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy backend only")
    rows = {}
    for name, fn in cases(np.random.default_rng(0)).items():
        rows[name] = {}
        for b in backends:
            mod = kernels.get_backend(b)
            fn(mod)  # warm up
            rows[name][b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
    width = max(map(len, rows))
    print(f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + "  speedup")
    for name, t in rows.items():
        speed = f"{t['python'] / t['cython']:7.1f}x" if "cython" in t else "      -"
        print(f"{name:<{width}}  " + "  ".join(f"{t[b] * 1e3:8.2f}ms" for b in backends) + f"  {speed}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
