# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the causal dilated convolution (hot path).

Mirrors numpy_backend exactly: same tap convention, same shapes. The column
packing / gradient scatter run as tight C loops and the matrix products go
straight to BLAS, which skips the temporaries and per-call dispatch of the
numpy implementation.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.string cimport memset
from scipy.linalg.cython_blas cimport dgemm, dgemv, sgemm, sgemv

cnp.import_array()

ctypedef fused floating:
    float
    double

NAME = "cython"


cdef inline void _gemm_rowmajor(
    floating* a, floating* bmat, floating* c,
    int m, int k, int n, bint trans_a, bint trans_b, floating beta
) noexcept nogil:
    """Row-major C[m,n] (+)= op(A)[m,k] @ op(B)[k,n] via column-major BLAS:
    compute C^T = op(B)^T @ op(A)^T by swapping the operand order."""
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef int lda = k if trans_b else n
    cdef int ldb = m if trans_a else k
    cdef floating one = 1.0
    if floating is float:
        sgemm(&ta, &tb, &n, &m, &k, &one, bmat, &lda, a, &ldb, &beta, c, &n)
    else:
        dgemm(&ta, &tb, &n, &m, &k, &one, bmat, &lda, a, &ldb, &beta, c, &n)


cdef void _pack_columns(
    const floating[:, ::1] x, floating* cols, int kernel, int dilation
) noexcept nogil:
    """cols[t, k*C_in:(k+1)*C_in] = x[t - (K-1-k)*d] (zero out of range)."""
    cdef int t_len = x.shape[0]
    cdef int c_in = x.shape[1]
    cdef int width = kernel * c_in
    cdef int t, k, c, src
    memset(cols, 0, t_len * width * sizeof(floating))
    for t in range(t_len):
        for k in range(kernel):
            src = t - (kernel - 1 - k) * dilation
            if src < 0:
                continue
            for c in range(c_in):
                cols[t * width + k * c_in + c] = x[src, c]


def conv_forward(const floating[:, ::1] x, const floating[:, :, ::1] w,
                 const floating[::1] b, int dilation):
    cdef int t_len = x.shape[0]
    cdef int kernel = w.shape[0]
    cdef int c_in = w.shape[1]
    cdef int c_out = w.shape[2]
    cdef int width = kernel * c_in
    cdef int t, o

    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((t_len, c_out), dtype=dtype)
    cols_arr = np.empty((t_len, width), dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    cdef floating[:, ::1] cols = cols_arr

    with nogil:
        _pack_columns(x, &cols[0, 0], kernel, dilation)
        for t in range(t_len):
            for o in range(c_out):
                y[t, o] = b[o]
        _gemm_rowmajor(&cols[0, 0], <floating*> &w[0, 0, 0], &y[0, 0],
                       t_len, width, c_out, False, False, <floating> 1.0)
    return y_arr


def conv_backward(const floating[:, ::1] x, const floating[:, :, ::1] w,
                  const floating[:, ::1] grad_y, int dilation):
    cdef int t_len = x.shape[0]
    cdef int kernel = w.shape[0]
    cdef int c_in = w.shape[1]
    cdef int c_out = w.shape[2]
    cdef int width = kernel * c_in
    cdef int t, k, c, o, src

    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((t_len, c_in), dtype=dtype)
    gw_arr = np.empty((kernel, c_in, c_out), dtype=dtype)
    gb_arr = np.zeros(c_out, dtype=dtype)
    cols_arr = np.empty((t_len, width), dtype=dtype)
    gcols_arr = np.empty((t_len, width), dtype=dtype)
    cdef floating[:, ::1] gx = gx_arr
    cdef floating[:, :, ::1] gw = gw_arr
    cdef floating[::1] gb = gb_arr
    cdef floating[:, ::1] cols = cols_arr
    cdef floating[:, ::1] gcols = gcols_arr

    with nogil:
        _pack_columns(x, &cols[0, 0], kernel, dilation)
        # grad_b
        for t in range(t_len):
            for o in range(c_out):
                gb[o] += grad_y[t, o]
        # grad_w[width, c_out] = cols^T @ grad_y
        _gemm_rowmajor(&cols[0, 0], <floating*> &grad_y[0, 0], &gw[0, 0, 0],
                       width, t_len, c_out, True, False, <floating> 0.0)
        # grad_cols[t_len, width] = grad_y @ w2^T
        _gemm_rowmajor(<floating*> &grad_y[0, 0], <floating*> &w[0, 0, 0], &gcols[0, 0],
                       t_len, c_out, width, False, True, <floating> 0.0)
        # scatter back to grad_x
        for t in range(t_len):
            for k in range(kernel):
                src = t - (kernel - 1 - k) * dilation
                if src < 0:
                    continue
                for c in range(c_in):
                    gx[src, c] += gcols[t, k * c_in + c]
    return gx_arr, gw_arr, gb_arr


def conv_step(const floating[:, ::1] taps, const floating[:, :, ::1] w,
              const floating[::1] b):
    cdef int kernel = w.shape[0]
    cdef int c_in = w.shape[1]
    cdef int c_out = w.shape[2]
    cdef int width = kernel * c_in
    cdef int o
    cdef int inc = 1
    cdef char trans = b'N'
    cdef floating one = 1.0

    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty(c_out, dtype=dtype)
    cdef floating[::1] y = y_arr

    with nogil:
        for o in range(c_out):
            y[o] = b[o]
        # y += w2^T @ taps_flat: column-major view of row-major w2 is w2^T
        if floating is float:
            sgemv(&trans, &c_out, &width, &one, <floating*> &w[0, 0, 0], &c_out,
                  <floating*> &taps[0, 0], &inc, &one, &y[0], &inc)
        else:
            dgemv(&trans, &c_out, &width, &one, <floating*> &w[0, 0, 0], &c_out,
                  <floating*> &taps[0, 0], &inc, &one, &y[0], &inc)
    return y_arr
