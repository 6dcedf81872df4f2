"""Region-conditional synthetic experts.

Each expert is an accuracy triplet over foreground, background, and the
boundary band. At every pixel the expert emits the true label with the
region's accuracy, otherwise the flipped label; draws are independent
Bernoulli trials, so empirical agreement converges to the profile values.

Boundary accuracy comes in two flavors:
  * independent-accuracy: the triplet's third entry IS the boundary accuracy;
  * edge-boost: the third entry is a difficulty increment, and boundary
    accuracy is the pixel's FG/BG accuracy minus that increment (clamped),
    i.e. experts get worse exactly where the contour is.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .gridmath import ShapeError

MODE_INDEPENDENT = "independent-accuracy"
MODE_EDGE_BOOST = "edge-boost"


@dataclass(frozen=True)
class ExpertProfile:
    name: str
    fg_acc: float
    bg_acc: float
    bd_param: float
    bd_mode: str = MODE_INDEPENDENT

    def __post_init__(self):
        if not (0.0 <= self.fg_acc <= 1.0 and 0.0 <= self.bg_acc <= 1.0):
            raise ConfigError(f"{self.name}: FG/BG accuracies must lie in [0,1]")
        if self.bd_mode == MODE_INDEPENDENT:
            if not 0.0 <= self.bd_param <= 1.0:
                raise ConfigError(f"{self.name}: boundary accuracy must lie in [0,1]")
        elif self.bd_mode == MODE_EDGE_BOOST:
            if not 0.0 <= self.bd_param <= 0.5:
                raise ConfigError(f"{self.name}: edge boost must lie in [0,0.5]")
        else:
            raise ConfigError(f"{self.name}: unknown boundary mode {self.bd_mode!r}")

    def accuracy_map(self, truth: np.ndarray, band: np.ndarray) -> np.ndarray:
        """Per-pixel probability of agreeing with the truth."""
        fgbg = np.where(truth > 0, self.fg_acc, self.bg_acc)
        if self.bd_mode == MODE_INDEPENDENT:
            bd = np.full_like(fgbg, self.bd_param)
        else:
            bd = np.clip(fgbg - self.bd_param, 0.0, 1.0)
        return np.where(band > 0, bd, fgbg)


@dataclass
class ExpertPredictionSet:
    predictions: np.ndarray  # (J,H,W) uint8
    profiles: tuple
    seed: int

    @property
    def count(self) -> int:
        return self.predictions.shape[0]


def simulate(mask: np.ndarray, band: np.ndarray, profiles, seed: int) -> ExpertPredictionSet:
    """Draw one binary prediction map per expert; fixed seed, fixed output."""
    profiles = tuple(profiles)
    if not profiles:
        raise ConfigError("at least one expert profile required")
    if mask.shape != band.shape:
        raise ShapeError(f"mask {mask.shape} vs band {band.shape}")
    truth = (np.asarray(mask) > 0).astype(np.uint8)
    rng = np.random.default_rng(seed)
    preds = np.empty((len(profiles),) + truth.shape, dtype=np.uint8)
    for j, prof in enumerate(profiles):
        acc = prof.accuracy_map(truth, band)
        agree = rng.random(truth.shape) < acc
        preds[j] = np.where(agree, truth, 1 - truth)
    return ExpertPredictionSet(predictions=preds, profiles=profiles, seed=seed)


# -- fixed pools used by the comparative / scalability / complementary studies

def standard_pools() -> dict:
    indep = MODE_INDEPENDENT
    boost = MODE_EDGE_BOOST
    return {
        "comparative": (
            ExpertProfile("expert1", 0.92, 0.98, 0.98, indep),
            ExpertProfile("expert2", 0.85, 0.99, 0.94, indep),
            ExpertProfile("expert3", 0.75, 0.95, 0.90, indep),
        ),
        "scalability": (
            ExpertProfile("E1", 0.92, 0.98, 0.05, boost),
            ExpertProfile("E2", 0.91, 0.99, 0.05, boost),
            ExpertProfile("E3", 0.93, 0.97, 0.05, boost),
            ExpertProfile("E4", 0.90, 0.97, 0.10, boost),
            ExpertProfile("E5", 0.94, 0.99, 0.06, boost),
        ),
        "complementary": (
            ExpertProfile("E1", 0.97, 0.90, 0.08, boost),
            ExpertProfile("E2", 0.88, 0.99, 0.08, boost),
            ExpertProfile("E3", 0.88, 0.90, 0.12, boost),
            ExpertProfile("E4", 0.97, 0.99, 0.03, boost),
            ExpertProfile("E5", 0.97, 0.90, 0.10, boost),
            ExpertProfile("E6", 0.88, 0.99, 0.12, boost),
            ExpertProfile("E7", 0.97, 0.99, 0.03, boost),
        ),
    }


def pool(name: str, subset=None):
    """Named pool, optionally restricted to a subset of expert names."""
    pools = standard_pools()
    if name not in pools:
        raise ConfigError(f"unknown expert pool {name!r}; have {sorted(pools)}")
    profiles = pools[name]
    if subset is None:
        return profiles
    by_name = {p.name: p for p in profiles}
    try:
        return tuple(by_name[n] for n in subset)
    except KeyError as exc:
        raise ConfigError(f"pool {name!r} has no expert {exc.args[0]!r}") from exc


def to_json_dict(name: str, profiles) -> dict:
    modes = {p.bd_mode for p in profiles}
    if len(modes) != 1:
        raise ConfigError("a pool must use a single boundary mode")
    return {
        "name": name,
        "mode": modes.pop(),
        "experts": [{"name": p.name, "fg": p.fg_acc, "bg": p.bg_acc, "bd": p.bd_param}
                    for p in profiles],
    }


def from_json_dict(payload: dict):
    try:
        mode = payload["mode"]
        experts = payload["experts"]
    except KeyError as exc:
        raise ConfigError(f"pool JSON missing key {exc.args[0]!r}") from exc
    return tuple(ExpertProfile(e["name"], e["fg"], e["bg"], e["bd"], mode) for e in experts)


def save_pool(path, name: str, profiles) -> None:
    Path(path).write_text(json.dumps(to_json_dict(name, profiles), indent=2) + "\n")


def load_pool(path):
    return from_json_dict(json.loads(Path(path).read_text()))
