"""Timing comparison of the compiled geometry kernels vs the NumPy reference.

Run with ``python benchmarks/bench_kernels.py``. Both backends compute the
same results (the test suite asserts bit-level agreement); this script only
reports throughput so regressions in either path are visible.
"""

from __future__ import annotations

import time

import numpy as np

from layerloc._kernels import reference

try:
    from layerloc._kernels import _native as native
except ImportError:  # pragma: no cover - benchmark still runs on one backend
    native = None


def random_boxes(rng: np.random.Generator, n: int, frame: float = 512.0) -> np.ndarray:
    xy = rng.uniform(0, frame * 0.8, size=(n, 2))
    wh = rng.uniform(4, frame * 0.2, size=(n, 2))
    return np.hstack([xy, wh])


def timeit(fn, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def row(label: str, ref_s: float, nat_s: float | None) -> None:
    if nat_s is None:
        print(f"{label:<38} {ref_s * 1e3:>10.3f} ms {'-':>12} {'-':>8}")
    else:
        speedup = ref_s / nat_s if nat_s > 0 else float("inf")
        print(f"{label:<38} {ref_s * 1e3:>10.3f} ms {nat_s * 1e3:>9.3f} ms {speedup:>7.1f}x")


def main() -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':<38} {'reference':>13} {'native':>12} {'speedup':>8}")
    for n in (100, 1000, 4000):
        boxes = random_boxes(rng, n)
        scores = rng.uniform(size=n)
        ref = timeit(lambda: reference.nms(boxes, scores, 0.5))
        nat = timeit(lambda: native.nms(boxes, scores, 0.5)) if native else None
        row(f"nms n={n}", ref, nat)
    for n in (100, 1000):
        a, b = random_boxes(rng, n), random_boxes(rng, n)
        ref = timeit(lambda: reference.pairwise_iou(a, b))
        nat = timeit(lambda: native.pairwise_iou(a, b)) if native else None
        row(f"pairwise_iou {n}x{n}", ref, nat)
    image = rng.uniform(size=(512, 512))
    for target in (7, 56, 224):
        ref = timeit(lambda: reference.crop_resize_bilinear(image, 31.5, 17.25, 300.0, 200.0, target))
        nat = (
            timeit(lambda: native.crop_resize_bilinear(image, 31.5, 17.25, 300.0, 200.0, target))
            if native
            else None
        )
        row(f"crop_resize_bilinear ->{target}x{target}", ref, nat)
    if native is None:
        print("\ncompiled extension not built; only the reference backend was timed")


if __name__ == "__main__":
    main()
