"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

``BACKEND`` reports which implementation was selected at import time.
The compiled wavelet kernels can run multi-threaded (``set_num_threads``);
results are bitwise deterministic for a fixed thread count, and the
default of one thread reproduces the serial reference exactly.
``benchmarks/bench_kernels.py`` compares the backends side by side.
"""

import os

from . import numpy_backend

try:
    from . import _fastcore as _impl

    BACKEND = "cython"
except ImportError:  # extension not built
    _impl = numpy_backend
    BACKEND = "numpy"

MEXICAN_HAT_NORM = numpy_backend.MEXICAN_HAT_NORM

_num_threads = max(1, int(os.environ.get("KANMIX_THREADS", "1")))


def set_num_threads(n: int):
    """Thread count for the compiled wavelet kernels (1 = deterministic
    serial reference; the numpy backend ignores this)."""
    global _num_threads
    _num_threads = max(1, int(n))


def get_num_threads() -> int:
    return _num_threads


def bspline_eval(x, knots, degree):
    return _impl.bspline_eval(x, knots, degree)


def wavelet_mix_forward(x, w_b, coeffs, trans, scales):
    if BACKEND == "cython":
        return _impl.wavelet_mix_forward(x, w_b, coeffs, trans, scales,
                                         _num_threads)
    return _impl.wavelet_mix_forward(x, w_b, coeffs, trans, scales)


def wavelet_mix_backward(x, w_b, coeffs, trans, scales, d_y):
    if BACKEND == "cython":
        return _impl.wavelet_mix_backward(x, w_b, coeffs, trans, scales, d_y,
                                          _num_threads)
    return _impl.wavelet_mix_backward(x, w_b, coeffs, trans, scales, d_y)


__all__ = [
    "BACKEND",
    "MEXICAN_HAT_NORM",
    "bspline_eval",
    "get_num_threads",
    "numpy_backend",
    "set_num_threads",
    "wavelet_mix_backward",
    "wavelet_mix_forward",
]
