"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled extension (_native, built from _native.pyx) is picked at import
time when available; otherwise the numpy implementations serve. Set
DEFOCUSKIT_FORCE_NUMPY=1 to force the fallback, e.g. for benchmarking or to
rule out the extension when debugging. Both backends implement identical
signatures and agree to tight tolerances (see tests/test_kernels.py and
benchmarks/bench_kernels.py).

The batched convolutions stay on the numpy path by default: their inner
contraction is a BLAS matmul, which beats the direct loops in the extension
(measured in benchmarks/bench_kernels.py). DEFOCUSKIT_FORCE_NATIVE=1
overrides that choice.
"""

import os

from . import _numpy
from ._numpy import gaussian_blur, gaussian_taps, sobel_gradients

try:
    from . import _native
except ImportError:
    _native = None

if os.environ.get("DEFOCUSKIT_FORCE_NUMPY"):
    _native = None

BACKEND = "native" if _native is not None else "numpy"

# kernels where BLAS-backed numpy wins over the direct compiled loops
_PREFER_NUMPY = frozenset({"conv2d_forward", "conv2d_backward"})
if os.environ.get("DEFOCUSKIT_FORCE_NATIVE"):
    _PREFER_NUMPY = frozenset()


def _pick(name):
    if _native is not None and name not in _PREFER_NUMPY and hasattr(_native, name):
        return getattr(_native, name)
    return getattr(_numpy, name)


conv2d_forward = _pick("conv2d_forward")
conv2d_backward = _pick("conv2d_backward")
joint_bilateral = _pick("joint_bilateral")
sparse_prob_bilateral = _pick("sparse_prob_bilateral")
varying_gaussian_blur = _pick("varying_gaussian_blur")

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "joint_bilateral",
    "sparse_prob_bilateral",
    "varying_gaussian_blur",
    "gaussian_blur",
    "gaussian_taps",
    "sobel_gradients",
]
