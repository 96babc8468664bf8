"""Pure-numpy fallback for the convolution kernels.

Same contracts as the compiled `_cconv` extension. The causal dilated
convolution is expressed as an im2col matrix product so the heavy lifting
stays inside BLAS.

Convention: for kernel size K and dilation d,

    y[t, o] = b[o] + sum_{k, c} x[t - (K-1-k)*d, c] * w[k, c, o]

with out-of-range inputs treated as zero, i.e. tap k = K-1 is the current
frame and tap k = 0 the oldest.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _im2col(x: np.ndarray, kernel: int, dilation: int) -> np.ndarray:
    t, c_in = x.shape
    cols = np.zeros((t, kernel * c_in), dtype=x.dtype)
    for k in range(kernel):
        shift = (kernel - 1 - k) * dilation
        if shift < t:
            cols[shift:, k * c_in : (k + 1) * c_in] = x[: t - shift]
    return cols


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, dilation: int) -> np.ndarray:
    """Causal dilated conv over a [T, C_in] sequence. Returns [T, C_out]."""
    kernel, c_in, c_out = w.shape
    cols = _im2col(x, kernel, dilation)
    return cols @ w.reshape(kernel * c_in, c_out) + b


def conv_backward(
    x: np.ndarray, w: np.ndarray, grad_y: np.ndarray, dilation: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv_forward w.r.t. input, weights and bias."""
    t = x.shape[0]
    kernel, c_in, c_out = w.shape
    cols = _im2col(x, kernel, dilation)
    grad_b = grad_y.sum(axis=0)
    grad_w = (cols.T @ grad_y).reshape(kernel, c_in, c_out)
    grad_cols = grad_y @ w.reshape(kernel * c_in, c_out).T
    grad_x = np.zeros_like(x)
    for k in range(kernel):
        shift = (kernel - 1 - k) * dilation
        if shift < t:
            grad_x[: t - shift] += grad_cols[shift:, k * c_in : (k + 1) * c_in]
    return grad_x, grad_w, grad_b


def conv_step(taps: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Single-frame step: taps is [K, C_in] (oldest first). Returns [C_out]."""
    kernel, c_in, c_out = w.shape
    return taps.reshape(kernel * c_in) @ w.reshape(kernel * c_in, c_out) + b
