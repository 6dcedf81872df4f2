"""Per-pixel routing: hard decisions, probability maps, and branch fusion.

Decision rule: a pixel stays with the model only when the model channel's
logit strictly exceeds every expert logit; otherwise it goes to the highest
expert logit (first expert on ties). The pseudo-supervision mask instead
takes the plain argmax over all channels (model wins exact ties), marking
pixels whose current routing favors any expert.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridmath import ShapeError, ValueGrid
from . import rle


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=0, keepdims=True)


@dataclass
class RoutingField:
    logits: np.ndarray  # (J+1,H,W)
    probs: np.ndarray   # channel softmax of logits

    @classmethod
    def from_logits(cls, logits) -> "RoutingField":
        arr = logits.data if isinstance(logits, ValueGrid) else np.asarray(logits, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ShapeError(f"routing logits must be (J+1,H,W) with J>=1, got {arr.shape}")
        return cls(logits=arr, probs=softmax_channels(arr))

    @property
    def expert_count(self) -> int:
        return self.logits.shape[0] - 1


def decide(field: RoutingField) -> np.ndarray:
    """(H,W) int16 decisions in {0..J}; 0 keeps the pixel with the model."""
    expert_logits = field.logits[1:]
    best_expert = expert_logits.argmax(axis=0).astype(np.int16)
    model_wins = field.logits[0] > expert_logits.max(axis=0)
    return np.where(model_wins, np.int16(0), best_expert + 1)


def expert_argmax_mask(probs: np.ndarray) -> np.ndarray:
    """1 where the argmax routing channel is an expert, 0 where it is the model."""
    return (probs.argmax(axis=0) != 0).astype(np.uint8)


def pseudo_mask(field: RoutingField) -> np.ndarray:
    return expert_argmax_mask(field.probs)


def deferral_heatmap(field: RoutingField) -> ValueGrid:
    """Total expert routing mass per pixel, in [0,1]."""
    return ValueGrid(field.probs[1:].sum(axis=0)[np.newaxis])


@dataclass
class FusedPrediction:
    system_mask: np.ndarray    # (H,W) uint8
    source: np.ndarray         # (H,W) int16 decisions
    model_region: np.ndarray   # (H,W) uint8
    expert_regions: np.ndarray  # (J,H,W) uint8


def threshold(seg_prob) -> np.ndarray:
    arr = seg_prob.plane() if isinstance(seg_prob, ValueGrid) else np.asarray(seg_prob)
    if arr.ndim == 3:
        arr = arr[0]
    return (arr >= 0.5).astype(np.uint8)


def fuse(seg_prob, decisions: np.ndarray, expert_preds: np.ndarray) -> FusedPrediction:
    """Combine branches: model prediction on retained pixels, expert j's on its region."""
    ybar = threshold(seg_prob)
    decisions = np.asarray(decisions)
    if decisions.shape != ybar.shape:
        raise ShapeError(f"decisions {decisions.shape} vs prediction {ybar.shape}")
    n_exp = expert_preds.shape[0]
    if decisions.max(initial=0) > n_exp:
        raise ShapeError(
            f"decision references expert {int(decisions.max())} but only {n_exp} supplied")
    system = ybar.copy()
    regions = np.empty((n_exp,) + ybar.shape, dtype=np.uint8)
    for j in range(1, n_exp + 1):
        sel = decisions == j
        regions[j - 1] = sel
        system[sel] = expert_preds[j - 1][sel]
    return FusedPrediction(
        system_mask=system,
        source=decisions.astype(np.int16),
        model_region=(decisions == 0).astype(np.uint8),
        expert_regions=regions,
    )


# -- export helpers ------------------------------------------------------

def decisions_to_gray(decisions: np.ndarray, expert_count: int) -> np.ndarray:
    """Distinct gray levels per branch for PGM export (0 = model, brightest = last expert)."""
    return np.round(decisions.astype(np.float64) * (255.0 / max(expert_count, 1))).astype(np.uint8)


def heatmap_to_gray(heatmap: ValueGrid) -> np.ndarray:
    return np.round(np.clip(heatmap.plane(), 0.0, 1.0) * 255.0).astype(np.uint8)


def decisions_to_rle(decisions: np.ndarray) -> dict:
    return rle.encode(decisions)


def heatmap_to_rle(heatmap: ValueGrid) -> dict:
    return rle.encode(heatmap_to_gray(heatmap))
