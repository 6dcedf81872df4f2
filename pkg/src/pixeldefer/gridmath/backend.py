"""Kernel backend selection at import time.

Two interchangeable cores implement the convolution kernels: a compiled
Cython extension and a numpy (BLAS-backed) implementation. At the channel
widths this model actually uses, the BLAS path wins on the fat 3x3 layers
(its blocked GEMM reuses cache lines that the streaming compiled loops
cannot), so ``auto`` prefers numpy; the compiled core remains available and
is faster on single-input-channel convolutions. See benchmarks/bench_kernels.py
for current numbers. ``PIXELDEFER_KERNELS`` forces a choice: ``compiled`` /
``python`` / ``auto``.
"""
from __future__ import annotations

import os

from . import kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built; run on the fallback
    _ckernels = None


def available_backends() -> dict:
    """Name -> kernel module, for benchmarks and parity tests."""
    out = {"python": kernels_py}
    if _ckernels is not None:
        out["compiled"] = _ckernels
    return out


def _select():
    forced = os.environ.get("PIXELDEFER_KERNELS", "auto").strip().lower()
    if forced in ("", "auto"):
        return kernels_py
    if forced in ("compiled", "c", "cython"):
        if _ckernels is None:
            raise ImportError("PIXELDEFER_KERNELS=compiled but the extension is not built")
        return _ckernels
    if forced in ("python", "py", "numpy"):
        return kernels_py
    raise ValueError(f"unknown PIXELDEFER_KERNELS value: {forced!r}")


_impl = _select()

BACKEND = "compiled" if _impl is _ckernels else "python"
conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_kernel = _impl.conv2d_grad_kernel
