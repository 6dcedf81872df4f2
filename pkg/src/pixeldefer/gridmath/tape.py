"""Reverse-mode differentiation over a fixed set of grid primitives.

The op set is exactly what the segmentor and its training objectives need:
same-padding conv2d, relu / sigmoid / channel softmax, clamped log,
elementwise add / mul, scalar affine, constant-grid add / mul, channel
slicing and reductions. Scalars are (1,1,1) grids.

A Tape owns one logical execution: ops executed through it are recorded in
order and replayed exactly once, in reverse, by ``backward``. Tapes are not
shared across threads; independent tapes may run concurrently.
"""
from __future__ import annotations

import numpy as np

from . import backend
from .grid import GridError, ShapeError, ValueGrid, as_grid

# Probabilities are clamped to this range before any log so BCE-style terms
# stay finite at hard 0/1 targets.
CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7


class TapeError(RuntimeError):
    """Tape misuse: double backward, backward on a non-recording tape, ..."""


class DualGrid:
    """A value grid paired with its gradient (same shape, lazily allocated)."""

    __slots__ = ("value", "_g", "needs_grad")

    def __init__(self, value, needs_grad: bool = True):
        self.value = as_grid(value)
        self._g = None
        self.needs_grad = needs_grad

    @property
    def grad(self) -> ValueGrid:
        if self._g is None:
            self._g = np.zeros(self.value.shape)
        return ValueGrid._wrap(self._g)

    def accumulate_grad(self, contribution: np.ndarray) -> None:
        if self._g is None:
            self._g = np.zeros(self.value.shape)
        self._g += contribution

    def reset_grad(self) -> None:
        if self._g is not None:
            self._g[...] = 0.0

    def __repr__(self) -> str:
        c, h, w = self.value.shape
        return f"DualGrid({c}x{h}x{w}, needs_grad={self.needs_grad})"


def _const_array(c) -> np.ndarray:
    if isinstance(c, ValueGrid):
        return c.data
    return np.asarray(c, dtype=np.float64)


class Tape:
    """Execution context recording primitive ops for reverse replay."""

    def __init__(self, record: bool = True):
        self.record = record
        self._records = []  # (output node, backward closure), execution order
        self._nodes = {}  # id -> node, for reset()
        self._done = False

    # -- bookkeeping ---------------------------------------------------

    def dual(self, value, needs_grad: bool = True) -> DualGrid:
        """Register a leaf grid on this tape."""
        node = value if isinstance(value, DualGrid) else DualGrid(value, needs_grad)
        self._nodes[id(node)] = node
        return node

    def _emit(self, value_arr: np.ndarray, inputs, backward_fn) -> DualGrid:
        out = DualGrid(ValueGrid._wrap(value_arr),
                       needs_grad=any(i.needs_grad for i in inputs))
        if self.record and out.needs_grad:
            self._records.append((out, backward_fn))
        for i in inputs:
            self._nodes[id(i)] = i
        self._nodes[id(out)] = out
        return out

    def backward(self, loss: DualGrid) -> None:
        """Fill gradients of everything the scalar ``loss`` depends on."""
        if not self.record:
            raise TapeError("backward on a non-recording tape")
        if self._done:
            raise TapeError("backward called twice without reset; gradients would double-accumulate")
        if loss.value.shape != (1, 1, 1):
            raise ShapeError(f"loss must be a (1,1,1) scalar grid, got {loss.value.shape}")
        loss.accumulate_grad(np.ones((1, 1, 1)))
        for out, fn in reversed(self._records):
            if out._g is not None:
                fn(out._g)
        self._done = True

    def reset(self) -> None:
        """Zero the gradients of every grid seen by this tape; allow a new backward."""
        for node in self._nodes.values():
            node.reset_grad()
        self._done = False

    # -- primitives ----------------------------------------------------

    def conv2d(self, x: DualGrid, kernel: DualGrid, bias: DualGrid, padding: int) -> DualGrid:
        """Same-padding cross-correlation.

        ``kernel`` stacks the (out, in) kernel planes channel-first: shape
        (out_channels * in_channels, k, k); ``bias`` is (out_channels, 1, 1).
        """
        kc, kh, kw = kernel.value.shape
        out_ch = bias.value.channels
        if kh != kw or kh % 2 == 0:
            raise ShapeError(f"kernel must be square with odd extent, got {kh}x{kw}")
        if padding != kh // 2:
            raise ShapeError(f"padding {padding} does not preserve height/width for a {kh}x{kw} kernel")
        if kc % out_ch != 0 or kc // out_ch != x.value.channels:
            raise ShapeError(
                f"kernel channels {kc} incompatible with input channels "
                f"{x.value.channels} and {out_ch} outputs")
        in_ch = x.value.channels
        w4 = kernel.value.data.reshape(out_ch, in_ch, kh, kw)
        b1 = np.ascontiguousarray(bias.value.data.reshape(out_ch))
        val = backend.conv2d_forward(x.value.data, w4, b1, padding)

        def bwd(g):
            if x.needs_grad:
                x.accumulate_grad(backend.conv2d_grad_input(g, w4, padding))
            if kernel.needs_grad:
                gw = backend.conv2d_grad_kernel(g, x.value.data, kh, kw, padding)
                kernel.accumulate_grad(gw.reshape(kc, kh, kw))
            if bias.needs_grad:
                bias.accumulate_grad(g.sum(axis=(1, 2)).reshape(out_ch, 1, 1))

        return self._emit(val, (x, kernel, bias), bwd)

    def relu(self, x: DualGrid) -> DualGrid:
        val = np.maximum(x.value.data, 0.0)

        def bwd(g):
            x.accumulate_grad(g * (x.value.data > 0.0))

        return self._emit(val, (x,), bwd)

    def sigmoid(self, x: DualGrid) -> DualGrid:
        xv = x.value.data
        val = np.empty_like(xv)
        pos = xv >= 0
        val[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
        ex = np.exp(xv[~pos])
        val[~pos] = ex / (1.0 + ex)

        def bwd(g):
            x.accumulate_grad(g * val * (1.0 - val))

        return self._emit(val, (x,), bwd)

    def channel_softmax(self, x: DualGrid) -> DualGrid:
        """Softmax across channels at every pixel; output sums to 1 per pixel."""
        if x.value.channels < 1:
            raise ShapeError("channel_softmax requires at least one channel")
        xv = x.value.data
        shifted = xv - xv.max(axis=0, keepdims=True)
        ex = np.exp(shifted)
        val = ex / ex.sum(axis=0, keepdims=True)

        def bwd(g):
            inner = (val * g).sum(axis=0, keepdims=True)
            x.accumulate_grad(val * (g - inner))

        return self._emit(val, (x,), bwd)

    def clamped_log(self, x: DualGrid) -> DualGrid:
        """log of a probability grid, clamped to [CLAMP_LO, CLAMP_HI] first."""
        xv = x.value.data
        val = np.log(np.clip(xv, CLAMP_LO, CLAMP_HI))

        def bwd(g):
            inside = (xv > CLAMP_LO) & (xv < CLAMP_HI)
            x.accumulate_grad(np.where(inside, g / np.clip(xv, CLAMP_LO, CLAMP_HI), 0.0))

        return self._emit(val, (x,), bwd)

    def add(self, x: DualGrid, y: DualGrid) -> DualGrid:
        if x.value.shape != y.value.shape:
            raise ShapeError(f"add shape mismatch: {x.value.shape} vs {y.value.shape}")
        val = x.value.data + y.value.data

        def bwd(g):
            if x.needs_grad:
                x.accumulate_grad(g)
            if y.needs_grad:
                y.accumulate_grad(g)

        return self._emit(val, (x, y), bwd)

    def mul(self, x: DualGrid, y: DualGrid) -> DualGrid:
        if x.value.shape != y.value.shape:
            raise ShapeError(f"mul shape mismatch: {x.value.shape} vs {y.value.shape}")
        val = x.value.data * y.value.data

        def bwd(g):
            if x.needs_grad:
                x.accumulate_grad(g * y.value.data)
            if y.needs_grad:
                y.accumulate_grad(g * x.value.data)

        return self._emit(val, (x, y), bwd)

    def affine(self, x: DualGrid, scale: float, shift: float = 0.0) -> DualGrid:
        scale = float(scale)
        val = x.value.data * scale + float(shift)

        def bwd(g):
            x.accumulate_grad(g * scale)

        return self._emit(val, (x,), bwd)

    def add_const(self, x: DualGrid, c) -> DualGrid:
        """x + c with c a constant grid broadcastable to x's shape."""
        carr = _const_array(c)
        val = x.value.data + carr
        if val.shape != x.value.shape:
            raise ShapeError(f"constant {carr.shape} does not broadcast into {x.value.shape}")

        def bwd(g):
            x.accumulate_grad(g)

        return self._emit(val, (x,), bwd)

    def mul_const(self, x: DualGrid, c) -> DualGrid:
        """x * c with c a constant grid broadcastable to x's shape."""
        carr = _const_array(c)
        val = x.value.data * carr
        if val.shape != x.value.shape:
            raise ShapeError(f"constant {carr.shape} does not broadcast into {x.value.shape}")

        def bwd(g):
            x.accumulate_grad(g * carr)

        return self._emit(val, (x,), bwd)

    def channel_slice(self, x: DualGrid, start: int, stop: int) -> DualGrid:
        if not (0 <= start < stop <= x.value.channels):
            raise ShapeError(f"slice [{start}:{stop}] out of range for {x.value.channels} channels")
        val = x.value.data[start:stop].copy()

        def bwd(g):
            gx = np.zeros(x.value.shape)
            gx[start:stop] = g
            x.accumulate_grad(gx)

        return self._emit(val, (x,), bwd)

    def channel_sum(self, x: DualGrid, start: int = 0, stop: int | None = None) -> DualGrid:
        """Sum channels [start:stop] into a single-channel grid."""
        stop = x.value.channels if stop is None else stop
        if not (0 <= start < stop <= x.value.channels):
            raise ShapeError(f"sum range [{start}:{stop}] out of range for {x.value.channels} channels")
        val = x.value.data[start:stop].sum(axis=0, keepdims=True)

        def bwd(g):
            gx = np.zeros(x.value.shape)
            gx[start:stop] = g
            x.accumulate_grad(gx)

        return self._emit(val, (x,), bwd)

    def spatial_sum(self, x: DualGrid) -> DualGrid:
        """Per-channel sum over pixels -> (channels, 1, 1)."""
        val = x.value.data.sum(axis=(1, 2), keepdims=True)

        def bwd(g):
            x.accumulate_grad(np.broadcast_to(g, x.value.shape))

        return self._emit(val, (x,), bwd)

    def total_sum(self, x: DualGrid) -> DualGrid:
        """Sum of every entry -> (1,1,1) scalar grid."""
        val = x.value.data.sum().reshape(1, 1, 1)

        def bwd(g):
            x.accumulate_grad(np.broadcast_to(g, x.value.shape))

        return self._emit(val, (x,), bwd)

    def total_mean(self, x: DualGrid) -> DualGrid:
        return self.affine(self.total_sum(x), 1.0 / x.value.size)


def scalar(node: DualGrid) -> float:
    """Extract the float from a (1,1,1) scalar grid node."""
    if node.value.shape != (1, 1, 1):
        raise ShapeError(f"not a scalar grid: {node.value.shape}")
    return float(node.value.data[0, 0, 0])
