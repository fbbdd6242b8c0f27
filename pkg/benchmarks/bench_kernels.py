#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two hot paths behind the pipeline: the boundary-operator
response grid (the inner loop of localization and of the exhaustive
search) and the masked harmonic fill.  Run after `pip install -e .`:

    python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from iristwin import _kernels
from iristwin._kernels import _ops_py
from iristwin.extraction import ExtractionConfig, _arc_angles, _dog_taps


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_response_grid(backend):
    rng = np.random.default_rng(1)
    img = np.ascontiguousarray(rng.random((160, 160)))
    cfg = ExtractionConfig(r_min=20, r_max=60)
    cos_a, sin_a = _arc_angles(cfg)
    taps, half_k = _dog_taps(cfg.sigma_r, cfg.refine_step)
    ext = half_k + 1
    n_r = int(cfg.r_max - cfg.r_min) + 1
    rhos = np.ascontiguousarray((cfg.r_min - ext) + np.arange(n_r + 2 * ext, dtype=float))
    read_idx = np.arange(ext, ext + n_r, dtype=np.int64)
    xs = np.arange(21.0, 139.0, 1.0)  # the exhaustive-oracle lattice
    gx, gy = np.meshgrid(xs, xs)
    cxs = np.ascontiguousarray(gx.ravel())
    cys = np.ascontiguousarray(gy.ravel())
    n_resp = cxs.size * n_r

    def work():
        backend.response_grid(img, cxs, cys, rhos, taps, read_idx, cos_a, sin_a, 1.0)

    return _time(work), n_resp


def bench_fill(backend):
    rng = np.random.default_rng(2)
    img = np.clip(rng.random((128, 128)), 0, 1)
    mask = np.zeros((128, 128), dtype=np.uint8)
    yy, xx = np.mgrid[0:128, 0:128]
    wedge = ((xx - 63.5) ** 2 + (yy - 63.5) ** 2 < 55**2) & (yy > 63.5) & (xx > 63.5)
    mask[wedge] = 1
    n_px = int(mask.sum())

    def work():
        ch = img.copy()
        ch[mask == 1] = ch[mask == 0].mean()
        backend.fill_masked(ch, mask, 1e-4, 20000)

    return _time(work), n_px


def main():
    backends = [("python", _ops_py)]
    if _kernels.HAVE_COMPILED:
        backends.append(("compiled", _kernels.get_backend("compiled")))
    else:
        print("compiled kernels not built; showing fallback only")

    print(f"{'kernel':<16} {'backend':<10} {'time':>10}   note")
    results = {}
    for name, mod in backends:
        t, n = bench_response_grid(mod)
        results[("response", name)] = t
        print(f"{'response_grid':<16} {name:<10} {t:>9.3f}s   {n:,} circle responses")
    for name, mod in backends:
        t, n = bench_fill(mod)
        results[("fill", name)] = t
        print(f"{'fill_masked':<16} {name:<10} {t:>9.3f}s   {n:,} masked pixels")
    if _kernels.HAVE_COMPILED:
        for k in ("response", "fill"):
            speedup = results[(k, "python")] / results[(k, "compiled")]
            print(f"{k}: compiled is {speedup:.1f}x the fallback")


if __name__ == "__main__":
    main()
