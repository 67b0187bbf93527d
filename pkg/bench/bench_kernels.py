"""Compare the numba and numpy flow-propagation kernels.

    python3 bench/bench_kernels.py [--repeat N] [--sizes 50x200x64 ...]

A size ``LxFxK`` is L leaves, F flows and K item columns.  Both kernels
start from the same random matrices; results are checked for equality.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from i2d.engine import kernels  # noqa: E402


def make_case(leaves: int, flows: int, cols: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    grades = np.where(rng.random((leaves, cols)) < 0.1, rng.random((leaves, cols)), 0.0)
    src = rng.integers(0, leaves, flows).astype(np.int64)
    dst = ((src + rng.integers(1, leaves, flows)) % leaves).astype(np.int64)
    carry = np.where(rng.random((flows, cols)) < 0.5, rng.random((flows, cols)), 0.0)
    return grades, src, dst, carry


def best_of(fn, case, repeat: int) -> tuple:
    grades, src, dst, carry = case
    times = []
    out = None
    for _ in range(repeat):
        g = grades.copy()
        t0 = time.perf_counter()
        fn(g, src, dst, carry, g.shape[1])
        times.append(time.perf_counter() - t0)
        out = g
    return min(times), out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", nargs="+",
                    default=["6x8x32", "50x200x64", "200x1000x128", "500x4000x256"])
    args = ap.parse_args(argv)
    if not kernels.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return 1

    warm = make_case(3, 3, 4)
    kernels.propagate_numba(warm[0].copy(), *warm[1:], 4)  # compile or load cache

    print(f"{'size':>14} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  equal")
    for size in args.sizes:
        leaves, flows, cols = (int(x) for x in size.split("x"))
        case = make_case(leaves, flows, cols)
        t_np, g_np = best_of(kernels.propagate_numpy, case, args.repeat)
        t_nb, g_nb = best_of(kernels.propagate_numba, case, args.repeat)
        print(f"{size:>14} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.1f}x"
              f"  {np.array_equal(g_np, g_nb)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
