"""Timing comparison of the jitted kernels against their numpy twins.

Run with ``python3 benchmarks/benchmark_kernels.py``. Each kernel is timed
on realistic workloads for both implementations; the jitted path is warmed
first so compilation does not pollute the numbers. Cosine scoring is not
benchmarked here because it is a single BLAS matmul either way.
"""

import time

import numpy as np

from xrayproto import _kernels

REPEATS = 5


def timeit(fn, *args, repeats=REPEATS, inner=10):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def workloads(rng):
    pixels = rng.random(size=(512, 512, 3))
    mask = (rng.random(size=(512, 512)) < 0.3).astype(np.uint8)
    boxes_a = np.abs(rng.normal(size=(200, 4))) * 50
    boxes_a[:, 2:] += boxes_a[:, :2] + 1
    boxes_b = np.abs(rng.normal(size=(150, 4))) * 50
    boxes_b[:, 2:] += boxes_b[:, :2] + 1
    ious = rng.random(size=(200, 150))
    return [
        ("patch_color_stats (512x512, patch 8)",
         _kernels._patch_color_stats_jit, _kernels.patch_color_stats_numpy,
         (pixels, 8)),
        ("block_fraction (512x512 -> 64x64)",
         _kernels._block_fraction_jit, _kernels.block_fraction_numpy,
         (mask, 64, 64)),
        ("pairwise_iou (200x150)",
         _kernels._pairwise_iou_jit, _kernels.pairwise_iou_numpy,
         (boxes_a, boxes_b)),
        ("greedy_match (200x150, thr 0.5)",
         _kernels._greedy_match_jit, _kernels.greedy_match_numpy,
         (ious, 0.5)),
    ]


def main():
    if not _kernels.numba_enabled():
        print("numba unavailable or disabled; only the numpy path can run")
    rng = np.random.default_rng(0)
    rows = []
    for name, jit_fn, numpy_fn, args in workloads(rng):
        if _kernels.numba_enabled():
            jit_fn(*args)  # warm the compile cache
            t_jit = timeit(jit_fn, *args)
        else:
            t_jit = float("nan")
        t_numpy = timeit(numpy_fn, *args)
        rows.append((name, t_jit, t_numpy))

    header = f"{'kernel':<38} {'jit (ms)':>10} {'numpy (ms)':>11} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_jit, t_numpy in rows:
        speedup = t_numpy / t_jit if t_jit == t_jit and t_jit > 0 else float("nan")
        print(
            f"{name:<38} {1e3 * t_jit:>10.3f} {1e3 * t_numpy:>11.3f} "
            f"{speedup:>7.1f}x"
        )


if __name__ == "__main__":
    main()
