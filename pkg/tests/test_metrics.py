import numpy as np
import pytest

from pixeldefer.metrics import (
    BranchMetrics, aggregate, evaluate_branches, overlap_metrics, report_rows,
    risk_01, write_report_csv,
)
from pixeldefer.routing import RoutingField, decide, fuse, threshold


class TestOverlap:
    def test_perfect_prediction(self, rng):
        truth = (rng.random((6, 6)) < 0.4).astype(np.uint8)
        truth[0, 0] = 1
        assert overlap_metrics(truth, truth) == (1.0, 1.0, 1.0)

    def test_half_covered_foreground(self):
        truth = np.zeros((4, 4), dtype=np.uint8)
        truth[1, 0:4] = 1  # 4 FG pixels
        pred = np.zeros_like(truth)
        pred[1, 0:2] = 1  # exactly 2 of them, nothing else
        dsc, jac, sens = overlap_metrics(pred, truth)
        assert dsc == pytest.approx(2 * 2 / (2 * 2 + 0 + 2))
        assert jac == pytest.approx(0.5)
        assert sens == pytest.approx(0.5)

    def test_disjoint_prediction(self):
        truth = np.zeros((4, 4), dtype=np.uint8)
        truth[0, 0] = 1
        pred = np.zeros_like(truth)
        pred[3, 3] = 1
        assert overlap_metrics(pred, truth) == (0.0, 0.0, 0.0)

    def test_empty_region_is_undefined(self):
        truth = np.ones((3, 3), dtype=np.uint8)
        region = np.zeros_like(truth)
        assert overlap_metrics(truth, truth, region) == (None, None, None)

    def test_no_foreground_in_region_is_undefined(self):
        truth = np.zeros((3, 3), dtype=np.uint8)
        pred = np.ones_like(truth)
        assert overlap_metrics(pred, truth) == (None, None, None)

    def test_dsc_jaccard_identity(self, rng):
        for _ in range(20):
            truth = (rng.random((8, 8)) < 0.5).astype(np.uint8)
            pred = (rng.random((8, 8)) < 0.5).astype(np.uint8)
            dsc, jac, _ = overlap_metrics(pred, truth)
            if dsc is None:
                continue
            assert abs(dsc - 2 * jac / (1 + jac)) < 1e-9


class TestRisk:
    def test_zero_when_model_perfect_and_retained(self, rng):
        truth = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        decisions = np.zeros((5, 5), dtype=np.int16)
        preds = rng.integers(0, 2, size=(1, 5, 5)).astype(np.uint8)
        assert risk_01(decisions, truth, preds, truth) == 0.0

    def test_zero_when_fully_deferred_to_perfect_expert(self, rng):
        truth = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        decisions = np.ones((5, 5), dtype=np.int16)
        ybar = 1 - truth
        assert risk_01(decisions, ybar, truth[np.newaxis], truth) == 0.0

    def test_matches_brute_force_count(self, rng):
        truth = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        ybar = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        preds = rng.integers(0, 2, size=(2, 6, 6)).astype(np.uint8)
        decisions = rng.integers(0, 3, size=(6, 6)).astype(np.int16)
        wrong = 0
        for yy in range(6):
            for xx in range(6):
                d = decisions[yy, xx]
                value = ybar[yy, xx] if d == 0 else preds[d - 1, yy, xx]
                wrong += int(value != truth[yy, xx])
        assert risk_01(decisions, ybar, preds, truth) == pytest.approx(wrong / 36)

    def test_risk_is_one_minus_system_accuracy(self, rng):
        truth = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        seg = rng.uniform(size=(6, 6))
        preds = rng.integers(0, 2, size=(2, 6, 6)).astype(np.uint8)
        decisions = rng.integers(0, 3, size=(6, 6)).astype(np.int16)
        fused = fuse(seg, decisions, preds)
        risk = risk_01(decisions, threshold(seg), preds, truth)
        accuracy = (fused.system_mask == truth).mean()
        assert risk == pytest.approx(1.0 - accuracy)


def _evaluated(rng, decisions=None):
    truth = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    truth[2, 2] = 1
    logits = rng.normal(size=(3, 6, 6))
    field = RoutingField.from_logits(logits)
    if decisions is None:
        decisions = decide(field)
    seg = rng.uniform(size=(6, 6))
    preds = rng.integers(0, 2, size=(2, 6, 6)).astype(np.uint8)
    fused = fuse(seg, decisions, preds)
    return evaluate_branches(fused, seg, preds, truth, field), fused, seg, preds, truth, field


class TestBranches:
    def test_zero_deferral_makes_system_equal_model(self, rng):
        truth = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        truth[1, 1] = 1
        seg = rng.uniform(size=(6, 6))
        preds = rng.integers(0, 2, size=(2, 6, 6)).astype(np.uint8)
        decisions = np.zeros((6, 6), dtype=np.int16)
        field = RoutingField.from_logits(rng.normal(size=(3, 6, 6)))
        fused = fuse(seg, decisions, preds)
        bm = evaluate_branches(fused, seg, preds, truth, field)
        assert bm.system.dsc == bm.model.dsc
        assert bm.expert.dsc is None
        assert bm.expert.pixels == 0

    def test_full_deferral_to_perfect_expert_scores_one(self, rng):
        truth = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        truth[1, 1] = 1
        decisions = np.ones((6, 6), dtype=np.int16)
        preds = np.stack([truth, 1 - truth])
        field = RoutingField.from_logits(rng.normal(size=(3, 6, 6)))
        fused = fuse(rng.uniform(size=(6, 6)), decisions, preds)
        bm = evaluate_branches(fused, rng.uniform(size=(6, 6)), preds, truth, field)
        assert bm.system.dsc == 1.0
        assert bm.risk01 == 0.0

    def test_branches_match_masked_recomputation(self, rng):
        bm, fused, seg, preds, truth, field = _evaluated(rng)
        deferred = fused.source > 0
        assert bm.expert.dsc == overlap_metrics(fused.system_mask, truth, deferred)[0]
        assert bm.model.dsc == overlap_metrics(threshold(seg), truth, ~deferred)[0]
        assert bm.system.dsc == overlap_metrics(fused.system_mask, truth)[0]
        np.testing.assert_allclose(
            bm.workload, [field.probs[j].mean() for j in (1, 2)])

    def test_expert_relabeling_keeps_system_metrics(self, rng):
        bm, fused, seg, preds, truth, field = _evaluated(rng)
        swapped_logits = field.logits[[0, 2, 1]]
        sw_field = RoutingField.from_logits(swapped_logits)
        sw_decisions = decide(sw_field)
        sw_fused = fuse(seg, sw_decisions, preds[[1, 0]])
        sw = evaluate_branches(sw_fused, seg, preds[[1, 0]], truth, sw_field)
        assert sw.system.dsc == pytest.approx(bm.system.dsc)
        assert sw.risk01 == pytest.approx(bm.risk01)
        np.testing.assert_allclose(sorted(sw.workload), sorted(bm.workload))


class TestAggregate:
    def test_undefined_values_are_excluded_not_imputed(self, rng):
        bms = []
        for decisions in (np.zeros((6, 6), dtype=np.int16), None):
            bm, *_ = _evaluated(rng, decisions=decisions)
            bms.append(bm)
        report = aggregate(bms)
        expert_cell = report["branches"]["expert"]["dsc"]
        assert expert_cell["count"] <= 1  # the all-model sample contributes nothing

    def test_report_row_shape_and_csv(self, rng, tmp_path):
        bm, *_ = _evaluated(rng)
        report = aggregate([bm])
        rows = report_rows(report, "ds", "cfg")
        assert len(rows) == 3 * 3 + 1 + 2  # branches x metrics + risk + workloads
        write_report_csv(tmp_path / "m.csv", rows)
        text = (tmp_path / "m.csv").read_text().splitlines()
        assert text[0].startswith("dataset,config,branch,metric")
        assert len(text) == 1 + len(rows)
