"""Synthetic grayscale images with binary masks and genuinely fuzzy boundaries.

Foreground sits on a brighter base level than background; a box blur smears
the interface and Gaussian noise is added on top, so pixels near the contour
are ambiguous while interiors stay easy. The boundary band (all pixels within
a Chebyshev radius of the FG/BG interface) is precomputed per sample because
both the expert simulators and the evaluation need it.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError
from .gridmath import ValueGrid
from . import pgmio

FG_LEVEL = 0.7
BG_LEVEL = 0.3
_MAX_GEOMETRY_RETRIES = 25


@dataclass(frozen=True)
class DatasetSpec:
    count: int
    height: int = 64
    width: int = 64
    family: str = "ellipse"  # "ellipse" | "blob"
    noise_sigma: float = 0.05
    blur_radius: int = 1
    band_width: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise DataError("count must be >= 1")
        if self.band_width < 1:
            raise DataError("band_width must be >= 1")
        if self.family not in ("ellipse", "blob"):
            raise DataError(f"unknown shape family: {self.family!r}")


@dataclass
class Sample:
    image: ValueGrid  # (1,H,W), intensities in [0,1]
    mask: np.ndarray  # (H,W) uint8 {0,1}
    boundary_band: np.ndarray  # (H,W) uint8 {0,1}
    id: str
    seed: int


def boundary_band(mask: np.ndarray, band_width: int) -> np.ndarray:
    """Pixels within Chebyshev distance ``band_width`` of the FG/BG interface.

    Equivalent to dilation != erosion with a (2w+1)^2 structuring element; a
    uniform mask yields an empty band.
    """
    if band_width < 1:
        raise DataError("band_width must be >= 1")
    m = mask.astype(np.uint8)
    size = 2 * band_width + 1
    hi = ndimage.maximum_filter(m, size=size, mode="nearest")
    lo = ndimage.minimum_filter(m, size=size, mode="nearest")
    return (hi != lo).astype(np.uint8)


def _ellipse_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    cy = rng.uniform(0.35, 0.65) * h
    cx = rng.uniform(0.35, 0.65) * w
    ay = rng.uniform(0.14, 0.30) * h
    ax = rng.uniform(0.14, 0.30) * w
    theta = rng.uniform(0.0, np.pi)
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    return ((u / ax) ** 2 + (v / ay) ** 2 <= 1.0).astype(np.uint8)


def _blob_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    cy = rng.uniform(0.40, 0.60) * h
    cx = rng.uniform(0.40, 0.60) * w
    r0 = rng.uniform(0.16, 0.28) * min(h, w)
    amps = rng.uniform(0.0, 0.15, size=4)
    phases = rng.uniform(0.0, 2 * np.pi, size=4)
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    phi = np.arctan2(dy, dx)
    radius = r0 * (1.0 + sum(a * np.cos((k + 2) * phi + p)
                             for k, (a, p) in enumerate(zip(amps, phases))))
    return (np.hypot(dy, dx) <= radius).astype(np.uint8)


def _render(mask: np.ndarray, spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    base = np.where(mask > 0, FG_LEVEL, BG_LEVEL)
    if spec.blur_radius > 0:
        base = ndimage.uniform_filter(base, size=2 * spec.blur_radius + 1, mode="nearest")
    if spec.noise_sigma > 0:
        base = base + rng.normal(0.0, spec.noise_sigma, size=base.shape)
    return np.clip(base, 0.0, 1.0)


def _make_sample(spec: DatasetSpec, index: int) -> Sample:
    sample_seed = spec.seed * 1_000_003 + index
    rng = np.random.default_rng(sample_seed)
    draw = _ellipse_mask if spec.family == "ellipse" else _blob_mask
    for _ in range(_MAX_GEOMETRY_RETRIES):
        mask = draw(rng, spec.height, spec.width)
        fg = int(mask.sum())
        if 0 < fg < mask.size:
            image = _render(mask, spec, rng)
            band = boundary_band(mask, spec.band_width)
            return Sample(
                image=ValueGrid(image[np.newaxis]),
                mask=mask,
                boundary_band=band,
                id=f"s{spec.seed}-{index:04d}",
                seed=sample_seed,
            )
    raise DataError(f"could not draw a valid shape for sample {index} after retries")


def generate(spec: DatasetSpec) -> list:
    """Deterministic sample list; identical specs give bit-identical output."""
    return [_make_sample(spec, i) for i in range(spec.count)]


# -- persistence -------------------------------------------------------

def save_dataset(samples, spec: DatasetSpec, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        img_name = f"{s.id}_image.pgm"
        mask_name = f"{s.id}_mask.pgm"
        band_name = f"{s.id}_band.pgm"
        pgmio.write_pgm(out / img_name, np.round(s.image.plane() * 255).astype(np.uint8))
        pgmio.write_pgm(out / mask_name, s.mask * 255)
        pgmio.write_pgm(out / band_name, s.boundary_band * 255)
        entries.append({"id": s.id, "seed": s.seed,
                        "image": img_name, "mask": mask_name, "band": band_name})
    manifest = {"spec": asdict(spec), "samples": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(indir):
    """Returns (samples, spec) from a directory written by save_dataset."""
    path = Path(indir) / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json under {indir}")
    manifest = json.loads(path.read_text())
    spec = DatasetSpec(**manifest["spec"])
    samples = []
    for e in manifest["samples"]:
        img = pgmio.read_pgm(Path(indir) / e["image"]).astype(np.float64) / 255.0
        mask = (pgmio.read_pgm(Path(indir) / e["mask"]) > 127).astype(np.uint8)
        band = (pgmio.read_pgm(Path(indir) / e["band"]) > 127).astype(np.uint8)
        samples.append(Sample(image=ValueGrid(img[np.newaxis]), mask=mask,
                              boundary_band=band, id=e["id"], seed=e["seed"]))
    return samples, spec
