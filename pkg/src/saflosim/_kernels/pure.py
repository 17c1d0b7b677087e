"""Numpy fallback for the 1D-convolution hot kernels.

Same contract as the compiled backend: float64, channels-last, padding done
by the caller.  The kernel-position loop keeps everything as K dense matmuls,
which is the fastest pure-numpy formulation at these shapes.
"""

from __future__ import annotations

import numpy as np


def conv1d_forward(x_padded: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x_padded (N, Lp, C) * w (K, C, F) -> (N, Lp-K+1, F)."""

    n, lp, _c = x_padded.shape
    k, _, f = w.shape
    l = lp - k + 1
    out = np.zeros((n, l, f), dtype=np.float64)
    for i in range(k):
        out += x_padded[:, i:i + l, :] @ w[i]
    return out


def conv1d_backward_input(dy: np.ndarray, w: np.ndarray, padded_len: int) -> np.ndarray:
    """Gradient w.r.t. the padded input: (N, L, F) x (K, C, F) -> (N, Lp, C)."""

    n, l, _f = dy.shape
    k, c, _ = w.shape
    dx = np.zeros((n, padded_len, c), dtype=np.float64)
    for i in range(k):
        dx[:, i:i + l, :] += dy @ w[i].T
    return dx


def conv1d_backward_weights(x_padded: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the kernel: (N, Lp, C) x (N, L, F) -> (K, C, F)."""

    _n, lp, c = x_padded.shape
    _, l, f = dy.shape
    k = lp - l + 1
    dw = np.empty((k, c, f), dtype=np.float64)
    for i in range(k):
        dw[i] = np.tensordot(x_padded[:, i:i + l, :], dy, axes=([0, 1], [0, 1]))
    return dw
