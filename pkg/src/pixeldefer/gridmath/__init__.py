"""Grid arithmetic and the reverse-mode tape the segmentor trains through."""
from .backend import BACKEND, available_backends
from .grid import GridError, ShapeError, ValueGrid, as_grid
from .tape import CLAMP_HI, CLAMP_LO, DualGrid, Tape, TapeError, scalar

__all__ = [
    "BACKEND",
    "available_backends",
    "GridError",
    "ShapeError",
    "ValueGrid",
    "as_grid",
    "CLAMP_HI",
    "CLAMP_LO",
    "DualGrid",
    "Tape",
    "TapeError",
    "scalar",
]
