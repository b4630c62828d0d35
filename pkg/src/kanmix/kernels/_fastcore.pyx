# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: B-spline basis evaluation and per-edge wavelet
mixing.  Mirrors kernels.numpy_backend operation-for-operation.

The wavelet kernels accept ``num_threads``: work is partitioned so each
thread owns disjoint output slices, and any cross-thread reduction happens
in a fixed order, so results are bitwise deterministic for a fixed thread
count (and exactly equal to the serial path for num_threads == 1).
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, floor

cnp.import_array()

cdef double MEXICAN_HAT_NORM = 2.0 / (np.sqrt(3.0) * np.pi ** 0.25)


def bspline_eval(double[::1] x, double[::1] knots, int degree):
    """Local de Boor triangle per sample; identical arithmetic to the
    vectorized numpy recursion, skipping the out-of-support zeros."""
    cdef Py_ssize_t n = x.shape[0]
    cdef int nk = knots.shape[0]
    cdef int n_basis = nk - degree - 1
    cdef int n_cells = nk - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] values = np.zeros((n, n_basis))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_values = np.zeros((n, n_basis))
    cdef double[:, ::1] v = values
    cdef double[:, ::1] dv = d_values
    # scratch triangle: basis funcs of index cell-d..cell at each degree
    cdef double[:] tri = np.zeros(degree + 1)
    cdef double[:] tri_prev = np.zeros(degree + 1)
    cdef Py_ssize_t b, cell, hi_cell, i, r
    cdef int d
    cdef double xv, left_den, right_den, left, right
    cdef double t_lo = knots[degree]
    cdef double h = knots[degree + 1] - knots[degree]

    hi_cell = n_cells - degree - 1
    for b in range(n):
        xv = x[b]
        # uniform grid: locate interior cell directly
        cell = degree + <Py_ssize_t>floor((xv - t_lo) / h)
        if cell < degree:
            cell = degree
        if cell > hi_cell:
            cell = hi_cell
        # guard rounding: enforce knots[cell] <= xv < knots[cell+1]
        while cell > degree and xv < knots[cell]:
            cell -= 1
        while cell < hi_cell and xv >= knots[cell + 1]:
            cell += 1
        tri[degree] = 1.0  # degree-0 indicator of `cell`
        for d in range(1, degree + 1):
            for i in range(degree + 1):
                tri_prev[i] = tri[i]
                tri[i] = 0.0
            # basis index cell - d + r is nonzero at degree d, r = 0..d
            for r in range(d + 1):
                i = cell - d + r
                left_den = knots[i + d] - knots[i]
                right_den = knots[i + d + 1] - knots[i + 1]
                # tri_prev[degree - d + r + s] holds B_{d-1, i+s}
                left = tri_prev[degree - d + r] if r > 0 else 0.0
                right = tri_prev[degree - d + r + 1] if r < d else 0.0
                if d == degree:
                    dv[b, i] = degree * (left / left_den - right / right_den)
                tri[degree - d + r] = (xv - knots[i]) / left_den * left + (
                    knots[i + d + 1] - xv
                ) / right_den * right
        for r in range(degree + 1):
            v[b, cell - degree + r] = tri[r]
        if degree == 0:
            v[b, cell] = 1.0
    return values, d_values


def wavelet_mix_forward(double[:, ::1] x, double[:, ::1] w_b,
                        double[:, :, ::1] coeffs, double[:, :, ::1] trans,
                        double[:, :, ::1] scales, int num_threads=1):
    cdef Py_ssize_t n_rows = x.shape[0], n_in = x.shape[1]
    cdef Py_ssize_t n_out = w_b.shape[0], m = coeffs.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.zeros((n_rows, n_out))
    cdef double[:, ::1] yv = y
    cdef Py_ssize_t b, j, i, q
    cdef double xv, z, e, edge, acc
    if num_threads < 1:
        num_threads = 1
    # rows are independent: each thread owns whole rows of y
    for b in prange(n_rows, nogil=True, schedule="static",
                    num_threads=num_threads):
        for j in range(n_out):
            acc = 0.0
            for i in range(n_in):
                xv = x[b, i]
                edge = 0.0
                for q in range(m):
                    z = (xv - trans[j, i, q]) / scales[j, i, q]
                    e = exp(-0.5 * z * z)
                    edge = edge + coeffs[j, i, q] * (
                        MEXICAN_HAT_NORM * (1.0 - z * z) * e)
                acc = acc + w_b[j, i] * edge
            yv[b, j] = acc
    return y


def wavelet_mix_backward(double[:, ::1] x, double[:, ::1] w_b,
                         double[:, :, ::1] coeffs, double[:, :, ::1] trans,
                         double[:, :, ::1] scales, double[:, ::1] d_y,
                         int num_threads=1):
    cdef Py_ssize_t n_rows = x.shape[0], n_in = x.shape[1]
    cdef Py_ssize_t n_out = w_b.shape[0], m = coeffs.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_wb = np.zeros((n_out, n_in))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d_c = np.zeros((n_out, n_in, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d_t = np.zeros((n_out, n_in, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d_s = np.zeros((n_out, n_in, m))
    if num_threads < 1:
        num_threads = 1
    # d_x accumulates across j: give each thread its own slab, reduce after
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d_x_slabs = np.zeros(
        (num_threads, n_rows, n_in))
    cdef double[:, ::1] dwbv = d_wb
    cdef double[:, :, ::1] dcv = d_c
    cdef double[:, :, ::1] dtv = d_t
    cdef double[:, :, ::1] dsv = d_s
    cdef double[:, :, ::1] slabs = d_x_slabs
    cdef Py_ssize_t b, j, i, q, tid, j_hi
    cdef Py_ssize_t chunk = (n_out + num_threads - 1) // num_threads
    cdef double xv, z, e, psi, dpsi_ds, g, wbv, edge, dedge_dx, gw, s
    # parameter gradients are indexed by j: threads own disjoint j-slices
    for tid in prange(num_threads, nogil=True, schedule="static",
                      num_threads=num_threads):
        j_hi = (tid + 1) * chunk
        if j_hi > n_out:
            j_hi = n_out
        for j in range(tid * chunk, j_hi):
            for b in range(n_rows):
                g = d_y[b, j]
                if g == 0.0:
                    continue
                for i in range(n_in):
                    xv = x[b, i]
                    wbv = w_b[j, i]
                    edge = 0.0
                    dedge_dx = 0.0
                    for q in range(m):
                        s = scales[j, i, q]
                        z = (xv - trans[j, i, q]) / s
                        e = exp(-0.5 * z * z)
                        psi = MEXICAN_HAT_NORM * (1.0 - z * z) * e
                        dpsi_ds = MEXICAN_HAT_NORM * e * (z * z * z - 3.0 * z) / s
                        edge = edge + coeffs[j, i, q] * psi
                        dedge_dx = dedge_dx + coeffs[j, i, q] * dpsi_ds
                        gw = g * wbv * coeffs[j, i, q]
                        dcv[j, i, q] += g * wbv * psi
                        dtv[j, i, q] -= gw * dpsi_ds
                        dsv[j, i, q] -= gw * dpsi_ds * z
                    dwbv[j, i] += g * edge
                    slabs[tid, b, i] += g * wbv * dedge_dx
    d_x = d_x_slabs[0]
    for tid in range(1, num_threads):
        d_x = d_x + d_x_slabs[tid]
    return np.ascontiguousarray(d_x), d_wb, d_c, d_t, d_s
