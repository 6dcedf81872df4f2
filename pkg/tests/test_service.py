import numpy as np
import pytest
from fastapi.testclient import TestClient

from pixeldefer import model, rle
from pixeldefer.service import create_app
from pixeldefer.synthdata import DatasetSpec, generate

H = W = 16


@pytest.fixture(scope="module")
def sample():
    return generate(DatasetSpec(count=1, height=H, width=W, seed=17))[0]


def _zero_net(expert_count=2):
    net = model.DeferralNet(expert_count=expert_count, encoder_channels=8,
                            deferral_hidden=4, height=H, width=W, seed=0)
    for _, p in net.parameters():
        p.value.data[...] = 0.0
    return net


def _random_net(expert_count=2, seed=5):
    return model.DeferralNet(expert_count=expert_count, encoder_channels=8,
                             deferral_hidden=4, height=H, width=W, seed=seed)


def _image_payload(sample):
    return rle.encode(np.round(sample.image.plane() * 255).astype(np.uint8))


def _truth_payload(sample):
    return rle.encode(sample.mask)


def _create(client, sample, with_truth=True, **extra):
    body = {"image": _image_payload(sample)}
    if with_truth:
        body["truth"] = _truth_payload(sample)
    body.update(extra)
    resp = client.post("/v1/sessions", json=body)
    return resp


class TestHealthAndCreate:
    def test_healthz_on_both_paths(self):
        client = TestClient(create_app(_random_net()))
        for path in ("/healthz", "/v1/healthz"):
            resp = client.get(path)
            assert resp.status_code == 200
            assert resp.json()["status"] == "ok"

    def test_create_returns_partition(self, sample):
        client = TestClient(create_app(_random_net()))
        resp = _create(client, sample)
        assert resp.status_code == 201
        body = resp.json()
        assert body["state"] == "inferred"
        model_region = rle.decode(body["model_region"])
        coverage = model_region.astype(int)
        for region in body["regions"]:
            decoded = rle.decode(region["mask"])
            assert int(decoded.sum()) == region["pixel_count"]
            coverage += decoded
        np.testing.assert_array_equal(coverage, 1)  # regions partition the grid

    def test_zero_init_defers_everything_to_first_expert(self, sample):
        # uniform logits: the model never wins strictly, ties go to expert 1
        client = TestClient(create_app(_zero_net()))
        body = _create(client, sample).json()
        assert rle.decode(body["model_region"]).sum() == 0
        assert body["regions"][0]["pixel_count"] == H * W
        assert body["regions"][1]["pixel_count"] == 0

    def test_expert_count_mismatch(self, sample):
        client = TestClient(create_app(_random_net(expert_count=2)))
        resp = _create(client, sample, expert_count=3)
        assert resp.status_code == 422
        assert resp.json()["detail"]["code"] == "expert-count-mismatch"

    def test_image_shape_mismatch(self):
        client = TestClient(create_app(_random_net()))
        bad = rle.encode(np.zeros((8, 8), dtype=np.uint8))
        resp = client.post("/v1/sessions", json={"image": bad})
        assert resp.status_code == 422
        assert resp.json()["detail"]["code"] == "image-shape-mismatch"

    def test_unknown_session_404(self):
        client = TestClient(create_app(_random_net()))
        assert client.get("/v1/sessions/nope").status_code == 404

    def test_session_listing(self, sample):
        client = TestClient(create_app(_random_net()))
        assert client.get("/v1/sessions").json() == {"sessions": []}
        sid = _create(client, sample).json()["session_id"]
        listing = client.get("/v1/sessions").json()["sessions"]
        assert [s["session_id"] for s in listing] == [sid]
        assert listing[0]["state"] == "inferred"
        assert listing[0]["has_truth"] is True


class TestCorrections:
    def test_stroke_outside_region_accepts_zero_and_changes_nothing(self, sample):
        client = TestClient(create_app(_zero_net()))
        sid = _create(client, sample).json()["session_id"]
        # expert 2's region is empty under the zero net: anything is clipped
        full = rle.encode(np.ones((H, W), dtype=np.uint8))
        resp = client.post(f"/v1/sessions/{sid}/corrections/2", json={"mask": full})
        assert resp.status_code == 200
        assert resp.json()["accepted_pixels"] == 0
        fused = client.post(f"/v1/sessions/{sid}/fuse").json()
        baseline_client = TestClient(create_app(_zero_net()))
        bare = _create(baseline_client, sample).json()["session_id"]
        bare_fused = baseline_client.post(f"/v1/sessions/{bare}/fuse").json()
        assert fused["system_mask"] == bare_fused["system_mask"]

    def test_flood_fill_accepts_region_pixel_count(self, sample):
        client = TestClient(create_app(_random_net()))
        body = _create(client, sample).json()
        sid = body["session_id"]
        region_pixels = body["regions"][0]["pixel_count"]
        full = rle.encode(np.ones((H, W), dtype=np.uint8))
        resp = client.post(f"/v1/sessions/{sid}/corrections/1", json={"mask": full})
        assert resp.json()["accepted_pixels"] == region_pixels
        assert resp.json()["state"] == "partially-annotated"

    def test_truth_corrections_give_perfect_system(self, sample):
        client = TestClient(create_app(_zero_net()))
        sid = _create(client, sample).json()["session_id"]
        resp = client.post(f"/v1/sessions/{sid}/corrections/1",
                           json={"mask": _truth_payload(sample)})
        assert resp.status_code == 200
        fused = client.post(f"/v1/sessions/{sid}/fuse").json()
        assert fused["metrics"]["system"]["dsc"] == pytest.approx(1.0)
        assert fused["metrics"]["risk01"] == 0.0
        np.testing.assert_array_equal(rle.decode(fused["system_mask"]), sample.mask)

    def test_resubmission_replaces_previous(self, sample):
        client = TestClient(create_app(_zero_net()))
        sid = _create(client, sample).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/corrections/1",
                    json={"mask": rle.encode(np.ones((H, W), dtype=np.uint8))})
        client.post(f"/v1/sessions/{sid}/corrections/1",
                    json={"mask": _truth_payload(sample)})
        fused = client.post(f"/v1/sessions/{sid}/fuse").json()
        np.testing.assert_array_equal(rle.decode(fused["system_mask"]), sample.mask)

    def test_unknown_expert_index(self, sample):
        client = TestClient(create_app(_random_net()))
        sid = _create(client, sample).json()["session_id"]
        mask = rle.encode(np.zeros((H, W), dtype=np.uint8))
        assert client.post(f"/v1/sessions/{sid}/corrections/9",
                           json={"mask": mask}).status_code == 404


class TestFuse:
    def test_no_corrections_falls_back_to_model(self, sample):
        client = TestClient(create_app(_random_net()))
        body = _create(client, sample).json()
        fused = client.post(f"/v1/sessions/{body['session_id']}/fuse").json()
        np.testing.assert_array_equal(rle.decode(fused["system_mask"]),
                                      rle.decode(body["base_prediction"]))

    def test_fuse_is_idempotent_and_byte_identical(self, sample):
        client = TestClient(create_app(_random_net()))
        sid = _create(client, sample).json()["session_id"]
        first = client.post(f"/v1/sessions/{sid}/fuse")
        second = client.post(f"/v1/sessions/{sid}/fuse")
        assert first.content == second.content
        result = client.get(f"/v1/sessions/{sid}/result")
        assert result.content == first.content

    def test_metrics_omitted_without_truth(self, sample):
        client = TestClient(create_app(_random_net()))
        sid = _create(client, sample, with_truth=False).json()["session_id"]
        fused = client.post(f"/v1/sessions/{sid}/fuse").json()
        assert "metrics" not in fused

    def test_corrections_rejected_after_fuse(self, sample):
        client = TestClient(create_app(_random_net()))
        sid = _create(client, sample).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/fuse")
        mask = rle.encode(np.zeros((H, W), dtype=np.uint8))
        resp = client.post(f"/v1/sessions/{sid}/corrections/1", json={"mask": mask})
        assert resp.status_code == 409
        assert resp.json()["detail"]["code"] == "already-fused"

    def test_result_before_fuse_is_conflict(self, sample):
        client = TestClient(create_app(_random_net()))
        sid = _create(client, sample).json()["session_id"]
        assert client.get(f"/v1/sessions/{sid}/result").status_code == 409


class TestPersistence:
    def test_sessions_survive_restart(self, sample, tmp_path):
        net = _random_net(seed=9)
        client = TestClient(create_app(net, persist_dir=tmp_path))
        body = _create(client, sample).json()
        sid = body["session_id"]
        client.post(f"/v1/sessions/{sid}/corrections/1",
                    json={"mask": _truth_payload(sample)})
        fused = client.post(f"/v1/sessions/{sid}/fuse").json()

        revived = TestClient(create_app(_random_net(seed=9), persist_dir=tmp_path))
        resp = revived.get(f"/v1/sessions/{sid}")
        assert resp.status_code == 200
        assert resp.json()["state"] == "fused"
        assert revived.get(f"/v1/sessions/{sid}/result").json() == fused
