"""Pure-numpy implementations of the hot kernels.

These are the reference/fallback implementations; the Cython module
``_fastcore`` mirrors them operation-for-operation.  The B-spline kernel
is bitwise-identical across backends; the wavelet kernels agree to float
rounding (different but fixed summation association).
"""

from __future__ import annotations

import numpy as np

# Mexican-hat normalization 2 / (sqrt(3) * pi**(1/4))
MEXICAN_HAT_NORM = 2.0 / (np.sqrt(3.0) * np.pi ** 0.25)

# Cap on scratch memory for the chunked wavelet path (floats, not bytes).
_CHUNK_BUDGET = 4_000_000


def bspline_eval(x: np.ndarray, knots: np.ndarray, degree: int):
    """Cox-de Boor values and x-derivatives of every B-spline basis function.

    ``x`` must already be clamped to the grid interior ``[lo, hi]``; the
    right endpoint is folded into the last interior cell so the partition
    of unity holds on the closed interval.
    Returns ``(values, d_values)`` of shape ``[n, len(knots) - degree - 1]``.
    """
    t = np.asarray(knots, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    k = int(degree)
    n = x.shape[0]
    n_cells = t.shape[0] - 1

    cell = np.clip(np.searchsorted(t, x, side="right") - 1, k, n_cells - k - 1)
    b = np.zeros((n, n_cells))
    b[np.arange(n), cell] = 1.0

    d_values = None
    xc = x[:, None]
    for d in range(1, k + 1):
        nb = t.shape[0] - d - 1
        left_den = t[d : d + nb] - t[:nb]
        right_den = t[d + 1 : d + 1 + nb] - t[1 : 1 + nb]
        if d == k:
            d_values = k * (b[:, :nb] / left_den - b[:, 1 : nb + 1] / right_den)
        b = (xc - t[:nb]) / left_den * b[:, :nb] + (
            t[d + 1 : d + 1 + nb] - xc
        ) / right_den * b[:, 1 : nb + 1]
    if k == 0:
        d_values = np.zeros_like(b)
    return b, d_values


def _wavelet_parts(x_chunk, trans, scales):
    # z, psi, dpsi/dz broadcast to [chunk, n_out, n_in, m]
    z = (x_chunk[:, None, :, None] - trans[None]) / scales[None]
    e = np.exp(-0.5 * z * z)
    psi = MEXICAN_HAT_NORM * (1.0 - z * z) * e
    dpsi = MEXICAN_HAT_NORM * e * (z * z * z - 3.0 * z)
    return z, psi, dpsi


def _chunk_rows(n_rows: int, per_row: int) -> int:
    return max(1, min(n_rows, _CHUNK_BUDGET // max(1, per_row)))


def wavelet_mix_forward(x, w_b, coeffs, trans, scales):
    """Spline half of a per-edge wavelet KAN layer.

    y[b, j] = sum_i w_b[j,i] * sum_q coeffs[j,i,q] * psi((x[b,i]-t[j,i,q]) / s[j,i,q])
    """
    n_rows, n_in = x.shape
    n_out, _, m = coeffs.shape
    wc = w_b[:, :, None] * coeffs
    y = np.zeros((n_rows, n_out))
    step = _chunk_rows(n_rows, n_out * n_in * m)
    for lo in range(0, n_rows, step):
        sl = slice(lo, lo + step)
        _, psi, _ = _wavelet_parts(x[sl], trans, scales)
        y[sl] = np.einsum("bjiq,jiq->bj", psi, wc)
    return y


def wavelet_mix_backward(x, w_b, coeffs, trans, scales, d_y):
    """Gradients of the wavelet spline half w.r.t. x and every parameter."""
    n_rows, n_in = x.shape
    n_out, _, m = coeffs.shape
    d_x = np.zeros_like(x)
    d_wb = np.zeros_like(w_b)
    d_c = np.zeros_like(coeffs)
    d_t = np.zeros_like(trans)
    d_s = np.zeros_like(scales)
    wc = w_b[:, :, None] * coeffs
    step = _chunk_rows(n_rows, n_out * n_in * m)
    for lo in range(0, n_rows, step):
        sl = slice(lo, lo + step)
        z, psi, dpsi = _wavelet_parts(x[sl], trans, scales)
        g = d_y[sl]  # [chunk, n_out]
        # d_wb[j,i] += sum_b g[b,j] * sum_q c[j,i,q] psi[b,j,i,q]
        d_wb += np.einsum("bj,bjiq,jiq->ji", g, psi, coeffs)
        d_c += np.einsum("bj,bjiq->jiq", g, psi)[..., :] * w_b[:, :, None]
        gw = np.einsum("bj,jiq->bjiq", g, wc)
        dpsi_ds = dpsi / scales[None]
        d_t -= np.einsum("bjiq,bjiq->jiq", gw, dpsi_ds)
        d_s -= np.einsum("bjiq,bjiq->jiq", gw, dpsi_ds * z)
        d_x[sl] = np.einsum("bjiq,bjiq->bi", gw, dpsi_ds)
    return d_x, d_wb, d_c, d_t, d_s
