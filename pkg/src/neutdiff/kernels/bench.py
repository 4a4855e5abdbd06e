"""Micro-benchmark comparing the evaluation-kernel backends."""

from __future__ import annotations

import time

import numpy as np

from . import available_backends
from .. import network


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(n_points: int = 8192, repeats: int = 5) -> dict:
    cases = [
        ("1d slab net (2x20)", network.Architecture(1, 2, 20, 3)),
        ("2d quarter-core net (4x32)", network.Architecture(2, 4, 32, 2)),
        ("3d core net (4x80)", network.Architecture(3, 4, 80, 2)),
    ]
    backends = available_backends()
    results = {}
    print(f"{n_points} points, best of {repeats} runs")
    for label, arch in cases:
        rng = np.random.default_rng(0)
        theta = network.init(arch, 0)
        x = rng.uniform(0, 1, (n_points, arch.input_dim))
        print(f"\n{label}  ({arch.n_params} parameters)")
        for name, backend in sorted(backends.items()):
            v, g, lap, cache = backend.forward(arch.key, theta, x,
                                               need_cache=True)
            dv = np.ones_like(v)
            dg = np.ones_like(g)
            dl = np.ones_like(lap)
            t_f = _time(lambda: backend.forward(arch.key, theta, x,
                                                need_cache=True), repeats)
            t_b = _time(lambda: backend.backward(arch.key, theta, x, cache,
                                                 dv, dg, dl), repeats)
            results[(label, name)] = (t_f, t_b)
            print(f"  {name:10s} forward {t_f * 1e3:8.2f} ms   "
                  f"backward {t_b * 1e3:8.2f} ms")
        if ("fused" in backends) and ("reference" in backends):
            f_ref, b_ref = results[(label, "reference")]
            f_fus, b_fus = results[(label, "fused")]
            print(f"  speedup    forward {f_ref / f_fus:8.2f} x    "
                  f"backward {b_ref / b_fus:8.2f} x")
    return results
