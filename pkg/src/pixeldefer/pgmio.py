"""Binary (P5) PGM read/write for 8-bit grayscale grids."""
from __future__ import annotations

import base64
from pathlib import Path

import numpy as np

from .errors import DataError


def encode_pgm(img: np.ndarray) -> bytes:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"PGM needs a 2-D array, got shape {arr.shape}")
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    return header + arr.tobytes()


def write_pgm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))


def decode_pgm(blob: bytes) -> np.ndarray:
    if not blob.startswith(b"P5"):
        raise DataError("not a binary (P5) PGM")
    # header: magic, width, height, maxval; comments allowed between tokens
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise DataError(f"only 8-bit PGM supported, maxval={maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).copy()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def to_base64(img: np.ndarray) -> str:
    return base64.b64encode(encode_pgm(img)).decode("ascii")


def from_base64(text: str) -> np.ndarray:
    return decode_pgm(base64.b64decode(text))
