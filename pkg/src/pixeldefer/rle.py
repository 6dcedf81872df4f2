"""Row-major run-length coding of small-integer grids for JSON payloads.

Wire form: {"shape": [H, W], "rle": [value, run, value, run, ...]}.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError


def encode(grid: np.ndarray) -> dict:
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise DataError(f"RLE needs a 2-D grid, got shape {arr.shape}")
    flat = arr.astype(np.int64).ravel()
    if flat.size == 0:
        return {"shape": list(arr.shape), "rle": []}
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    pairs = np.empty(2 * starts.size, dtype=np.int64)
    pairs[0::2] = flat[starts]
    pairs[1::2] = ends - starts
    return {"shape": [int(arr.shape[0]), int(arr.shape[1])], "rle": pairs.tolist()}


def decode(payload: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in payload["shape"])
        runs = payload["rle"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed RLE payload: {exc}") from exc
    if len(runs) % 2 != 0:
        raise DataError("RLE stream must hold (value, run) pairs")
    values = np.asarray(runs[0::2], dtype=np.int64)
    lengths = np.asarray(runs[1::2], dtype=np.int64)
    if (lengths <= 0).any():
        raise DataError("RLE runs must be positive")
    if int(lengths.sum()) != h * w:
        raise DataError(f"RLE covers {int(lengths.sum())} pixels, grid has {h * w}")
    return np.repeat(values, lengths).reshape(h, w)
