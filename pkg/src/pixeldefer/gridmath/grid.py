"""Dense channel-stacked 2-D grids, the value carrier for the whole package."""
from __future__ import annotations

import numpy as np


class GridError(ValueError):
    """Malformed grid data."""


class ShapeError(GridError):
    """Incompatible grid shapes passed to an operation."""


class ValueGrid:
    """A (channels, height, width) float64 field.

    Finite by construction: the public constructor rejects NaN/Inf, and every
    operation in this package maps finite inputs to finite outputs (logs are
    clamped, softmax is shift-normalized).
    """

    __slots__ = ("data",)

    def __init__(self, data, copy: bool = True):
        arr = np.array(data, dtype=np.float64, copy=copy)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3:
            raise GridError(f"expected (channels, height, width), got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise GridError("grid contains non-finite values")
        self.data = np.ascontiguousarray(arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "ValueGrid":
        # Fast path for operation outputs that are finite by construction.
        g = object.__new__(cls)
        g.data = arr
        return g

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "ValueGrid":
        return cls._wrap(np.zeros((channels, height, width)))

    @classmethod
    def full(cls, channels: int, height: int, width: int, fill: float) -> "ValueGrid":
        return cls(np.full((channels, height, width), float(fill)), copy=False)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def plane(self, channel: int = 0) -> np.ndarray:
        """2-D view of one channel."""
        return self.data[channel]

    def copy(self) -> "ValueGrid":
        return ValueGrid._wrap(self.data.copy())

    def validate(self) -> "ValueGrid":
        """Re-check the finiteness invariant; raises GridError on violation."""
        if not np.isfinite(self.data).all():
            raise GridError("grid contains non-finite values")
        return self

    def __repr__(self) -> str:
        c, h, w = self.data.shape
        return f"ValueGrid({c}x{h}x{w})"


def as_grid(value) -> ValueGrid:
    """Coerce an array-like (2-D or 3-D) into a ValueGrid."""
    if isinstance(value, ValueGrid):
        return value
    return ValueGrid(value)
