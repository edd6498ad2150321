"""Compare the compiled and pure-Python grid-field kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from skillatlas import _kernels_py

try:
    from skillatlas import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(side: int, rng: np.random.Generator):
    passable = (rng.random((side, side)) < 0.8).astype(np.uint8)
    sources = np.array([[0, 0], [side - 1, side - 1]], dtype=np.int64)
    n = side * side * 4
    xs = rng.integers(0, side, n).astype(np.int64)
    ys = rng.integers(0, side, n).astype(np.int64)
    w = rng.random(n)
    stat, batch = rng.random((side, side)), rng.random((side, side))
    return {
        "bfs_distance": lambda m: m.bfs_distance(passable, sources),
        "accumulate_weighted": lambda m: m.accumulate_weighted(side, side, xs, ys, w),
        "ema": lambda m: m.ema(stat, batch, 0.85),
        "paint_rgba": lambda m: m.paint_rgba(stat, 255, 0, 0, 40),
    }


TRAIN_SNIPPET = """
import time
import skillatlas
from skillatlas.agent import new_run, train
from skillatlas.config import RunConfig
cfg = RunConfig(environment="sokoban", epochs={epochs}, batch_size=64)
t = time.perf_counter()
train(new_run(cfg), cfg.epochs)
print(skillatlas.BACKEND, time.perf_counter() - t)
"""


def end_to_end(epochs: int) -> None:
    """Whole training loop under each backend, each in a fresh interpreter."""
    print(f"\ntraining loop, 6x6 sokoban, {epochs} epochs x 64 episodes")
    for flag in ("0", "1"):
        env = {**os.environ, "SKILLATLAS_PURE_PYTHON": flag}
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(epochs=epochs)],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<8} {float(secs):8.2f} s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sides", type=int, nargs="*", default=[6, 16, 48])
    ap.add_argument("--train-epochs", type=int, default=20,
                    help="epochs for the end-to-end comparison (0 skips it)")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'side':>5} {'python us':>11} {'cython us':>11} {'speedup':>8}")
    for side in args.sides:
        for name, fn in cases(side, rng).items():
            number = 50
            t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=number,
                                     repeat=args.repeat)) / number
            if _kernels is None:
                print(f"{name:<20} {side:>5} {t_py * 1e6:>11.1f} {'n/a':>11} {'':>8}")
                continue
            t_cy = min(timeit.repeat(lambda: fn(_kernels), number=number,
                                     repeat=args.repeat)) / number
            print(f"{name:<20} {side:>5} {t_py * 1e6:>11.1f} {t_cy * 1e6:>11.1f} "
                  f"{t_py / t_cy:>7.1f}x")
    if args.train_epochs:
        end_to_end(args.train_epochs)


if __name__ == "__main__":
    main()
