"""Backend parity: the compiled kernels must match the numpy reference."""

import numpy as np
import pytest

import kanmix.kernels as kernels
from kanmix.basis import SplineGrid
from kanmix.kernels import numpy_backend
from kanmix.numeric import SeededRng

fastcore = pytest.importorskip(
    "kanmix.kernels._fastcore",
    reason="compiled kernels unavailable (numpy fallback in use)")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "numpy")


def test_bspline_bitwise_parity():
    grid = SplineGrid.uniform(7, 3, -2.5, 2.5)
    x = np.ascontiguousarray(np.linspace(-2.5, 2.5, 1001))
    v_np, d_np = numpy_backend.bspline_eval(x, grid.knots, 3)
    v_cy, d_cy = fastcore.bspline_eval(x, np.ascontiguousarray(grid.knots), 3)
    assert np.array_equal(v_np, v_cy)
    assert np.array_equal(d_np, d_cy)


def test_bspline_parity_random_degrees():
    rng = SeededRng(21)
    for degree in (1, 2, 3, 4):
        grid = SplineGrid.uniform(5, degree)
        x = np.ascontiguousarray(np.clip(rng.normal((257,)), -2.0, 2.0))
        v_np, d_np = numpy_backend.bspline_eval(x, grid.knots, degree)
        v_cy, d_cy = fastcore.bspline_eval(x, np.ascontiguousarray(grid.knots),
                                           degree)
        assert np.array_equal(v_np, v_cy), degree
        assert np.array_equal(d_np, d_cy), degree


def _wavelet_inputs(seed=22, n_rows=9, n_in=5, n_out=4, m=3):
    rng = SeededRng(seed)
    return (rng.normal((n_rows, n_in)), rng.normal((n_out, n_in)),
            rng.normal((n_out, n_in, m)), rng.normal((n_out, n_in, m)),
            rng.uniform((n_out, n_in, m), 0.4, 1.6), rng.normal((n_rows, n_out)))


def test_wavelet_forward_parity():
    x, wb, c, t, s, _ = _wavelet_inputs()
    y_np = numpy_backend.wavelet_mix_forward(x, wb, c, t, s)
    y_cy = fastcore.wavelet_mix_forward(x, wb, c, t, s)
    assert np.abs(y_np - y_cy).max() < 1e-12


def test_wavelet_backward_parity():
    x, wb, c, t, s, dy = _wavelet_inputs()
    outs_np = numpy_backend.wavelet_mix_backward(x, wb, c, t, s, dy)
    outs_cy = fastcore.wavelet_mix_backward(x, wb, c, t, s, dy)
    for a, b in zip(outs_np, outs_cy):
        assert np.abs(a - b).max() < 1e-12


def test_wavelet_numpy_chunking_invariance(monkeypatch):
    # forcing tiny chunks must not change the numpy backend's results
    x, wb, c, t, s, dy = _wavelet_inputs(23, n_rows=13)
    full = numpy_backend.wavelet_mix_forward(x, wb, c, t, s)
    grads_full = numpy_backend.wavelet_mix_backward(x, wb, c, t, s, dy)
    monkeypatch.setattr(numpy_backend, "_CHUNK_BUDGET", 1)
    chunked = numpy_backend.wavelet_mix_forward(x, wb, c, t, s)
    grads_chunked = numpy_backend.wavelet_mix_backward(x, wb, c, t, s, dy)
    assert np.abs(full - chunked).max() < 1e-12
    for a, b in zip(grads_full, grads_chunked):
        assert np.abs(a - b).max() < 1e-12
