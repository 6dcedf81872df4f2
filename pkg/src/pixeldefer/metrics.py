"""Overlap metrics per branch, the empirical deferral risk, and reports.

Branches: System scores the fused mask on all pixels, Expert-only the fused
mask restricted to deferred pixels, Model-only the thresholded model
prediction on retained pixels. A branch with no pixels, or whose truth has no
foreground inside the region, is reported as undefined and excluded from
dataset averages rather than imputed.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridmath import ShapeError
from .routing import FusedPrediction, RoutingField, threshold

METRIC_NAMES = ("dsc", "jaccard", "sensitivity")
BRANCH_NAMES = ("system", "expert", "model")


def overlap_metrics(pred: np.ndarray, truth: np.ndarray, region: np.ndarray | None = None):
    """(dsc, jaccard, sensitivity) over region pixels; (None,None,None) if undefined."""
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    if pred.shape != truth.shape:
        raise ShapeError(f"pred {pred.shape} vs truth {truth.shape}")
    if region is not None:
        sel = np.asarray(region) > 0
        if sel.shape != pred.shape:
            raise ShapeError(f"region {sel.shape} vs pred {pred.shape}")
        if not sel.any():
            return (None, None, None)
        pred, truth = pred[sel], truth[sel]
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    if tp + fn == 0:  # no foreground in the (restricted) truth
        return (None, None, None)
    dsc = 2.0 * tp / (2.0 * tp + fp + fn)
    jac = tp / (tp + fp + fn)
    sens = tp / (tp + fn)
    return (dsc, jac, sens)


def risk_01(decisions: np.ndarray, seg_thresh: np.ndarray, expert_preds: np.ndarray,
            truth: np.ndarray) -> float:
    """Mean per-pixel 0-1 deferral risk: model errors where retained, expert-j errors
    where routed to j."""
    truth = np.asarray(truth) > 0
    wrong = np.where(decisions == 0, (np.asarray(seg_thresh) > 0) != truth, False)
    for j in range(1, expert_preds.shape[0] + 1):
        sel = decisions == j
        wrong = wrong | (sel & ((expert_preds[j - 1] > 0) != truth))
    return float(wrong.mean())


@dataclass
class BranchScores:
    dsc: float | None
    jaccard: float | None
    sensitivity: float | None
    pixels: int


@dataclass
class BranchMetrics:
    system: BranchScores
    expert: BranchScores
    model: BranchScores
    risk01: float
    workload: tuple  # per-expert mean routing probability mass

    def branch(self, name: str) -> BranchScores:
        return getattr(self, name)


def evaluate_branches(fused: FusedPrediction, seg_prob, expert_preds: np.ndarray,
                      truth: np.ndarray, routing: RoutingField) -> BranchMetrics:
    ybar = threshold(seg_prob)
    deferred = fused.source > 0
    retained = ~deferred
    sys_scores = overlap_metrics(fused.system_mask, truth)
    exp_scores = overlap_metrics(fused.system_mask, truth, region=deferred)
    mod_scores = overlap_metrics(ybar, truth, region=retained)
    rho = tuple(float(routing.probs[j].mean()) for j in range(1, routing.expert_count + 1))
    return BranchMetrics(
        system=BranchScores(*sys_scores, pixels=int(truth.size)),
        expert=BranchScores(*exp_scores, pixels=int(deferred.sum())),
        model=BranchScores(*mod_scores, pixels=int(retained.sum())),
        risk01=risk_01(fused.source, ybar, expert_preds, truth),
        workload=rho,
    )


# -- dataset-level aggregation -------------------------------------------

def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "std": None, "count": 0}
    arr = np.asarray(vals, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "count": int(arr.size)}


def aggregate(per_sample) -> dict:
    """Macro-average over samples; undefined branch values are excluded."""
    report = {"branches": {}, "risk01": _mean_std([m.risk01 for m in per_sample])}
    for branch in BRANCH_NAMES:
        report["branches"][branch] = {
            metric: _mean_std([getattr(m.branch(branch), metric) for m in per_sample])
            for metric in METRIC_NAMES
        }
    if per_sample:
        n_exp = len(per_sample[0].workload)
        report["workload"] = [
            _mean_std([m.workload[j] for m in per_sample]) for j in range(n_exp)
        ]
    else:
        report["workload"] = []
    return report


def report_rows(report: dict, dataset: str, config: str):
    """(dataset, config, branch, metric, mean, std, count) rows for CSV."""
    rows = []
    for branch in BRANCH_NAMES:
        for metric in METRIC_NAMES:
            cell = report["branches"][branch][metric]
            rows.append((dataset, config, branch, metric,
                         cell["mean"], cell["std"], cell["count"]))
    rows.append((dataset, config, "system", "risk01",
                 report["risk01"]["mean"], report["risk01"]["std"], report["risk01"]["count"]))
    for j, cell in enumerate(report["workload"], start=1):
        rows.append((dataset, config, "expert", f"workload_{j}",
                     cell["mean"], cell["std"], cell["count"]))
    return rows


def write_report_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "config", "branch", "metric", "mean", "std", "count"])
        writer.writerows(rows)


def write_report_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
