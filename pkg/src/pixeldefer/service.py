"""Session API for human-in-the-loop annotation.

Workflow per session: (1) run the segmentor, partition pixels into a
model-only region plus one region per expert; (2) accept per-expert
correction masks, clipped to the submitting expert's region; (3) fuse
corrections with the model branch under the same routing rule and, when a
ground truth was attached, score all branches.

Endpoints (JSON, versioned under /v1):
    POST /v1/sessions                     create from an image (RLE or PGM b64)
    GET  /v1/sessions                     list session summaries (for browsers)
    GET  /v1/sessions/{id}                state summary
    POST /v1/sessions/{id}/corrections/{j} submit expert j's mask
    POST /v1/sessions/{id}/fuse           fuse (idempotent; repeats replay)
    GET  /v1/sessions/{id}/result         stored fused result
    GET  /healthz, /v1/healthz

Grids travel as {"shape": [H, W], "rle": [value, run, ...]}; previews as
base64 PGM. Sessions are in-memory with optional directory persistence.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import metrics, model, pgmio, rle, routing
from .errors import DataError
from .gridmath import ValueGrid

STATE_INFERRED = "inferred"
STATE_PARTIAL = "partially-annotated"
STATE_FUSED = "fused"


class GridPayload(BaseModel):
    shape: list[int]
    rle: list[int]


class CreateSessionRequest(BaseModel):
    image: GridPayload | None = None
    image_pgm_b64: str | None = None
    truth: GridPayload | None = None
    expert_count: int | None = None


class CorrectionRequest(BaseModel):
    mask: GridPayload


@dataclass
class Session:
    id: str
    image: np.ndarray          # (H,W) float in [0,1]
    truth: np.ndarray | None   # (H,W) uint8 or None
    seg_prob: np.ndarray       # (H,W)
    field: routing.RoutingField
    decisions: np.ndarray
    state: str = STATE_INFERRED
    corrections: dict = dc_field(default_factory=dict)  # expert idx -> (H,W) uint8
    fused_payload: dict | None = None

    def region(self, j: int) -> np.ndarray:
        return (self.decisions == j).astype(np.uint8)


def _http_error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _decode_grid(payload: GridPayload) -> np.ndarray:
    try:
        return rle.decode({"shape": payload.shape, "rle": payload.rle})
    except DataError as exc:
        raise _http_error(422, "bad-grid", str(exc))


class SessionStore:
    """Thread-safe session registry with optional directory persistence."""

    def __init__(self, net: model.DeferralNet, persist_dir=None):
        self.net = net
        self.persist_dir = Path(persist_dir) if persist_dir else None
        self.sessions: dict[str, Session] = {}
        self.lock = threading.RLock()
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            self._load_persisted()

    # -- workflow ------------------------------------------------------

    def create(self, image: np.ndarray, truth: np.ndarray | None) -> Session:
        out = model.forward(self.net, ValueGrid(image[np.newaxis]))
        field = routing.RoutingField.from_logits(out.routing_logits.value)
        session = Session(
            id=uuid.uuid4().hex[:12],
            image=image,
            truth=truth,
            seg_prob=out.seg_prob.value.plane().copy(),
            field=field,
            decisions=routing.decide(field),
        )
        with self.lock:
            self.sessions[session.id] = session
            self._persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            if session_id not in self.sessions:
                raise _http_error(404, "unknown-session", f"no session {session_id}")
            return self.sessions[session_id]

    def submit(self, session_id: str, expert_idx: int, mask: np.ndarray) -> int:
        with self.lock:
            session = self.get(session_id)
            if session.state == STATE_FUSED:
                raise _http_error(409, "already-fused",
                                  "corrections are closed once the session is fused")
            if not (1 <= expert_idx <= self.net.expert_count):
                raise _http_error(404, "unknown-expert",
                                  f"expert index must lie in 1..{self.net.expert_count}")
            if mask.shape != session.decisions.shape:
                raise _http_error(422, "mask-shape-mismatch",
                                  f"mask {mask.shape} vs image {session.decisions.shape}")
            clipped = ((mask > 0) & (session.decisions == expert_idx)).astype(np.uint8)
            session.corrections[expert_idx] = clipped
            session.state = STATE_PARTIAL
            self._persist(session)
            return int(clipped.sum())

    def fuse(self, session_id: str) -> dict:
        with self.lock:
            session = self.get(session_id)
            if session.fused_payload is not None:
                return session.fused_payload
            ybar = routing.threshold(session.seg_prob)
            preds = np.empty((self.net.expert_count,) + ybar.shape, dtype=np.uint8)
            for j in range(1, self.net.expert_count + 1):
                # un-annotated regions fall back to the model's own prediction
                preds[j - 1] = session.corrections.get(j, ybar)
            fused = routing.fuse(session.seg_prob, session.decisions, preds)
            payload = {
                "session_id": session.id,
                "state": STATE_FUSED,
                "system_mask": rle.encode(fused.system_mask),
                "source": rle.encode(fused.source),
                "corrected_experts": sorted(session.corrections),
            }
            if session.truth is not None:
                branch = metrics.evaluate_branches(fused, session.seg_prob, preds,
                                                   session.truth, session.field)
                payload["metrics"] = _metrics_dict(branch)
            session.fused_payload = payload
            session.state = STATE_FUSED
            self._persist(session)
            return payload

    # -- persistence -----------------------------------------------------

    def _persist(self, session: Session) -> None:
        if not self.persist_dir:
            return
        doc = {
            "id": session.id,
            "state": session.state,
            "image_pgm_b64": pgmio.to_base64(np.round(session.image * 255).astype(np.uint8)),
            "truth": rle.encode(session.truth) if session.truth is not None else None,
            "corrections": {str(j): rle.encode(m) for j, m in session.corrections.items()},
            "fused_payload": session.fused_payload,
        }
        (self.persist_dir / f"{session.id}.json").write_text(json.dumps(doc) + "\n")

    def _load_persisted(self) -> None:
        for path in sorted(self.persist_dir.glob("*.json")):
            doc = json.loads(path.read_text())
            image = pgmio.from_base64(doc["image_pgm_b64"]).astype(np.float64) / 255.0
            truth = rle.decode(doc["truth"]).astype(np.uint8) if doc["truth"] else None
            out = model.forward(self.net, ValueGrid(image[np.newaxis]))
            field = routing.RoutingField.from_logits(out.routing_logits.value)
            session = Session(
                id=doc["id"], image=image, truth=truth,
                seg_prob=out.seg_prob.value.plane().copy(),
                field=field, decisions=routing.decide(field),
                state=doc["state"],
                corrections={int(j): rle.decode(m).astype(np.uint8)
                             for j, m in doc["corrections"].items()},
                fused_payload=doc["fused_payload"],
            )
            self.sessions[session.id] = session


def _metrics_dict(branch: metrics.BranchMetrics) -> dict:
    def scores(s):
        return {"dsc": s.dsc, "jaccard": s.jaccard, "sensitivity": s.sensitivity,
                "pixels": s.pixels}
    return {
        "system": scores(branch.system),
        "expert": scores(branch.expert),
        "model": scores(branch.model),
        "risk01": branch.risk01,
        "workload": list(branch.workload),
    }


def _session_summary(store: SessionStore, session: Session) -> dict:
    heat = routing.deferral_heatmap(session.field)
    return {
        "session_id": session.id,
        "state": session.state,
        "expert_count": store.net.expert_count,
        "shape": list(session.decisions.shape),
        "has_truth": session.truth is not None,
        "base_prediction": rle.encode(routing.threshold(session.seg_prob)),
        "model_region": rle.encode(session.region(0)),
        "regions": [
            {"expert": j, "mask": rle.encode(session.region(j)),
             "pixel_count": int((session.decisions == j).sum())}
            for j in range(1, store.net.expert_count + 1)
        ],
        "heatmap": routing.heatmap_to_rle(heat),
        "corrected_experts": sorted(session.corrections),
        "previews": {
            "image_pgm_b64": pgmio.to_base64(np.round(session.image * 255).astype(np.uint8)),
            "seg_prob_pgm_b64": pgmio.to_base64(
                np.round(session.seg_prob * 255).astype(np.uint8)),
            "decisions_pgm_b64": pgmio.to_base64(
                routing.decisions_to_gray(session.decisions, store.net.expert_count)),
            "heatmap_pgm_b64": pgmio.to_base64(routing.heatmap_to_gray(heat)),
        },
    }


def create_app(checkpoint, persist_dir=None) -> FastAPI:
    """App factory; ``checkpoint`` is a path or an in-memory DeferralNet."""
    net = checkpoint if isinstance(checkpoint, model.DeferralNet) \
        else model.load_checkpoint(checkpoint)
    store = SessionStore(net, persist_dir=persist_dir)
    app = FastAPI(title="pixeldefer annotation service")
    app.state.store = store

    @app.get("/healthz")
    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "expert_count": net.expert_count,
                "shape": [net.height, net.width]}

    @app.get("/v1/sessions")
    def list_sessions():
        with store.lock:
            return {"sessions": [
                {"session_id": s.id, "state": s.state,
                 "has_truth": s.truth is not None,
                 "corrected_experts": sorted(s.corrections)}
                for s in store.sessions.values()
            ]}

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if req.expert_count is not None and req.expert_count != net.expert_count:
            raise _http_error(422, "expert-count-mismatch",
                              f"checkpoint carries {net.expert_count} experts, "
                              f"request expects {req.expert_count}")
        if (req.image is None) == (req.image_pgm_b64 is None):
            raise _http_error(422, "bad-request",
                              "provide exactly one of image or image_pgm_b64")
        if req.image is not None:
            raw = _decode_grid(req.image)
        else:
            try:
                raw = pgmio.from_base64(req.image_pgm_b64)
            except (DataError, ValueError) as exc:
                raise _http_error(422, "bad-image", str(exc))
        if raw.shape != (net.height, net.width):
            raise _http_error(422, "image-shape-mismatch",
                              f"checkpoint expects {net.height}x{net.width}, "
                              f"got {raw.shape[0]}x{raw.shape[1]}")
        image = np.clip(raw.astype(np.float64) / 255.0, 0.0, 1.0)
        truth = None
        if req.truth is not None:
            t = _decode_grid(req.truth)
            if t.shape != raw.shape:
                raise _http_error(422, "truth-shape-mismatch",
                                  f"truth {t.shape} vs image {raw.shape}")
            truth = (t > 0).astype(np.uint8)
        session = store.create(image, truth)
        return _session_summary(store, session)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_summary(store, store.get(session_id))

    @app.post("/v1/sessions/{session_id}/corrections/{expert_idx}")
    def submit_correction(session_id: str, expert_idx: int, req: CorrectionRequest):
        mask = _decode_grid(req.mask)
        accepted = store.submit(session_id, expert_idx, mask)
        return {"session_id": session_id, "expert": expert_idx,
                "accepted_pixels": accepted, "state": store.get(session_id).state}

    @app.post("/v1/sessions/{session_id}/fuse")
    def fuse_session(session_id: str):
        return store.fuse(session_id)

    @app.get("/v1/sessions/{session_id}/result")
    def session_result(session_id: str):
        session = store.get(session_id)
        if session.fused_payload is None:
            raise _http_error(409, "not-fused", "call fuse first")
        return session.fused_payload

    return app
