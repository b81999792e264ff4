#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Run from the repo root after building the extension:

    python benchmarks/bench_kernels.py

Prints per-kernel timings for both backends plus their maximum numeric
deviation on the same inputs. The conv kernels are the BLAS-vs-loops case:
numpy wins there, which is why the dispatcher prefers the numpy path for
them (see defocuskit/kernels/__init__.py).
"""

import time

import numpy as np

from defocuskit.kernels import _numpy

try:
    from defocuskit.kernels import _native
except ImportError:
    _native = None


def timeit(fn, *args, repeat=5, **kwargs):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, result


def deviation(a, b):
    if isinstance(a, tuple):
        return max(np.abs(x - y).max() for x, y in zip(a, b))
    return np.abs(np.asarray(a) - np.asarray(b)).max()


def bench(name, fn_name, args, kwargs=None):
    kwargs = kwargs or {}
    t_np, r_np = timeit(getattr(_numpy, fn_name), *args, **kwargs)
    if _native is None:
        print(f"{name:<28} numpy {t_np * 1e3:8.2f} ms   native: not built")
        return
    t_nat, r_nat = timeit(getattr(_native, fn_name), *args, **kwargs)
    dev = deviation(r_np, r_nat)
    faster = "native" if t_nat < t_np else "numpy"
    print(f"{name:<28} numpy {t_np * 1e3:8.2f} ms   native {t_nat * 1e3:8.2f} ms"
          f"   max|diff| {dev:.2e}   winner: {faster}")


def main():
    rng = np.random.default_rng(0)
    print(f"extension built: {_native is not None}\n")

    x = rng.random((32, 27, 27, 3))
    w = rng.random((5, 5, 3, 10))
    b = rng.random(10)
    dy = rng.random((32, 23, 23, 10))
    bench("conv2d_forward (training)", "conv2d_forward", (x, w, b))
    bench("conv2d_backward (training)", "conv2d_backward", (x, w, dy))

    data = rng.random((160, 160, 3))
    guide = rng.random((160, 160, 3))
    bench("joint_bilateral (rgf step)", "joint_bilateral",
          (data, guide, 3.0, 0.1, 9))

    h, w2 = 160, 160
    flat = rng.choice(h * w2, size=1200, replace=False)
    ys, xs = flat // w2, flat % w2
    values = rng.uniform(0.5, 2.0, len(ys))
    conf = rng.uniform(0.05, 1.0, len(ys))
    bench("sparse_prob_bilateral", "sparse_prob_bilateral",
          (ys, xs, values, conf, guide, 100.0, 100.0, 1.0, 15))

    img = rng.random((160, 160, 3))
    sigma = rng.uniform(0.5, 2.0, (160, 160))
    mask = rng.random((160, 160)) > 0.5
    bench("varying_gaussian_blur", "varying_gaussian_blur",
          (img, sigma, mask), {"truncate": 3.0})


if __name__ == "__main__":
    main()
