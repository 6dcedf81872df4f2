"""Numpy (BLAS-backed) fallback for the convolution hot kernels.

Same-padding cross-correlation on (channels, height, width) grids. The
compiled extension in ``_ckernels`` implements the identical contract; the
backend module picks one at import time.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"


def _padded(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> np.ndarray:
    """x (C,H,W), w (O,C,kh,kw), b (O,) -> (O,H,W) with zero same-padding."""
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(_padded(x, pad), (kh, kw), axis=(1, 2))
    out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
    out += b[:, None, None]
    return np.ascontiguousarray(out)

def conv2d_grad_input(gout: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    """Gradient of the output w.r.t. the input: (O,H,W), (O,C,kh,kw) -> (C,H,W)."""
    _, c, kh, kw = w.shape
    h, wd = gout.shape[1], gout.shape[2]
    gxp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    for dy in range(kh):
        for dx in range(kw):
            gxp[:, dy:dy + h, dx:dx + wd] += np.tensordot(w[:, :, dy, dx], gout, axes=([0], [0]))
    if pad:
        return np.ascontiguousarray(gxp[:, pad:pad + h, pad:pad + wd])
    return gxp


def conv2d_grad_kernel(gout: np.ndarray, x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """Gradient w.r.t. the kernel: (O,H,W), (C,H,W) -> (O,C,kh,kw)."""
    win = sliding_window_view(_padded(x, pad), (kh, kw), axis=(1, 2))
    return np.ascontiguousarray(np.tensordot(gout, win, axes=([1, 2], [1, 2])))
