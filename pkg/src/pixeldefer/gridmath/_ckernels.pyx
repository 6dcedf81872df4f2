# cython: language_level=3
"""Compiled convolution hot kernels.

All loops run branch-free over explicitly padded buffers with unit-stride
inner loops, single-threaded and in deterministic order.
"""
import numpy as np

cimport numpy as cnp

NAME = "compiled"


def _padded(x, Py_ssize_t pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    return xp


def conv2d_forward(x, w, b, int pad):
    cdef double[:, :, ::1] xp = _padded(x, pad)
    cdef double[:, :, :, ::1] wv_ = np.ascontiguousarray(w)
    cdef Py_ssize_t O = wv_.shape[0], C = wv_.shape[1]
    cdef Py_ssize_t kh = wv_.shape[2], kw = wv_.shape[3]
    cdef Py_ssize_t H = x.shape[1], W = x.shape[2]
    out_np = np.empty((O, H, W))
    out_np[:] = np.asarray(b)[:, None, None]
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t o, c, dy, dx, y, xx
    cdef double wv
    cdef double* src
    cdef double* dst
    for o in range(O):
        for c in range(C):
            for dy in range(kh):
                for dx in range(kw):
                    wv = wv_[o, c, dy, dx]
                    for y in range(H):
                        src = &xp[c, y + dy, dx]
                        dst = &out[o, y, 0]
                        for xx in range(W):
                            dst[xx] += wv * src[xx]
    return out_np


def conv2d_grad_input(gout, w, int pad):
    cdef double[:, :, ::1] g = np.ascontiguousarray(gout)
    cdef double[:, :, :, ::1] wv_ = np.ascontiguousarray(w)
    cdef Py_ssize_t O = wv_.shape[0], C = wv_.shape[1]
    cdef Py_ssize_t kh = wv_.shape[2], kw = wv_.shape[3]
    cdef Py_ssize_t H = gout.shape[1], W = gout.shape[2]
    gxp_np = np.zeros((C, H + 2 * pad, W + 2 * pad))
    cdef double[:, :, ::1] gxp = gxp_np
    cdef Py_ssize_t o, c, dy, dx, y, xx
    cdef double wv
    cdef double* src
    cdef double* dst
    for c in range(C):
        for o in range(O):
            for dy in range(kh):
                for dx in range(kw):
                    wv = wv_[o, c, dy, dx]
                    for y in range(H):
                        dst = &gxp[c, y + dy, dx]
                        src = &g[o, y, 0]
                        for xx in range(W):
                            dst[xx] += wv * src[xx]
    if pad == 0:
        return gxp_np
    return np.ascontiguousarray(gxp_np[:, pad:pad + H, pad:pad + W])


def conv2d_grad_kernel(gout, x, int kh, int kw, int pad):
    cdef double[:, :, ::1] g = np.ascontiguousarray(gout)
    cdef double[:, :, ::1] xp = _padded(x, pad)
    cdef Py_ssize_t O = gout.shape[0], C = x.shape[0]
    cdef Py_ssize_t H = gout.shape[1], W = gout.shape[2]
    gw_np = np.zeros((O, C, kh, kw))
    cdef double[:, :, :, ::1] gw = gw_np
    cdef Py_ssize_t o, c, dy, dx, y, xx
    cdef double acc
    cdef double* src
    cdef double* grow
    for o in range(O):
        for c in range(C):
            for dy in range(kh):
                for dx in range(kw):
                    acc = 0.0
                    for y in range(H):
                        grow = &g[o, y, 0]
                        src = &xp[c, y + dy, dx]
                        for xx in range(W):
                            acc += grow[xx] * src[xx]
                    gw[o, c, dy, dx] = acc
    return gw_np
