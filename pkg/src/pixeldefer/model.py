"""The deferral-aware segmentor.

A two-layer convolutional encoder feeds three heads:
  * seg head: 1x1 conv + sigmoid -> per-pixel foreground probability;
  * routing head: 1x1 conv -> J+1 per-pixel routing logits (channel 0 keeps
    the pixel, channels 1..J defer it to an expert);
  * deferral head: 3x3 conv + ReLU + 1x1 conv + sigmoid -> a smooth
    single-channel deferral map, supervised for spatial coherence.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .gridmath import DualGrid, GridError, ShapeError, Tape, ValueGrid, as_grid

_MAGIC = b"PDFN"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIQ")  # magic, version, J, C, C', H, W, seed

# (name, out_channels, in_channels, kernel) in serialization order
def _layer_specs(J: int, C: int, Cp: int):
    return (
        ("enc1", 8, 1, 3),
        ("enc2", C, 8, 3),
        ("seg", 1, C, 1),
        ("route", J + 1, C, 1),
        ("defer1", Cp, C, 3),
        ("defer2", 1, Cp, 1),
    )


@dataclass
class ForwardOutputs:
    seg_prob: DualGrid       # (1,H,W) in (0,1)
    routing_logits: DualGrid  # (J+1,H,W)
    deferral_map: DualGrid   # (1,H,W) in (0,1)
    features: DualGrid       # (C,H,W)


class DeferralNet:
    """Parameter store plus architecture hyperparameters."""

    def __init__(self, expert_count: int, encoder_channels: int = 16,
                 deferral_hidden: int = 8, height: int = 64, width: int = 64,
                 seed: int = 0):
        if expert_count < 1:
            raise ConfigError("at least one expert routing channel is required")
        self.expert_count = expert_count
        self.encoder_channels = encoder_channels
        self.deferral_hidden = deferral_hidden
        self.height = height
        self.width = width
        self.seed = seed
        self.params = {}
        rng = np.random.default_rng(seed)
        for name, out_ch, in_ch, k in _layer_specs(expert_count, encoder_channels, deferral_hidden):
            fan_in = in_ch * k * k
            bound = np.sqrt(3.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(out_ch * in_ch, k, k))
            self.params[f"{name}.w"] = DualGrid(ValueGrid(w, copy=False))
            self.params[f"{name}.b"] = DualGrid(ValueGrid.zeros(out_ch, 1, 1))

    @property
    def param_order(self):
        return [f"{name}.{p}" for name, *_ in
                _layer_specs(self.expert_count, self.encoder_channels, self.deferral_hidden)
                for p in ("w", "b")]

    def parameters(self):
        return [(k, self.params[k]) for k in self.param_order]

    def zero_grads(self) -> None:
        for _, p in self.parameters():
            p.reset_grad()

    def state_arrays(self) -> dict:
        return {k: p.value.data.copy() for k, p in self.parameters()}

    def load_state_arrays(self, state: dict) -> None:
        for k, p in self.parameters():
            src = state[k]
            if src.shape != p.value.shape:
                raise ShapeError(f"{k}: stored {src.shape} vs expected {p.value.shape}")
            p.value.data[...] = src


def forward(net: DeferralNet, image, tape: Tape | None = None) -> ForwardOutputs:
    """Run the segmentor; pass a recording tape to make outputs differentiable."""
    t = tape if tape is not None else Tape(record=False)
    img = as_grid(image)
    if img.channels != 1:
        raise ShapeError(f"expected a single-channel image, got {img.channels} channels")
    if img.data.min() < 0.0 or img.data.max() > 1.0:
        raise GridError("image intensities must lie in [0,1]")
    p = net.params
    x = t.dual(img, needs_grad=False)
    h = t.relu(t.conv2d(x, p["enc1.w"], p["enc1.b"], padding=1))
    feats = t.relu(t.conv2d(h, p["enc2.w"], p["enc2.b"], padding=1))
    seg = t.sigmoid(t.conv2d(feats, p["seg.w"], p["seg.b"], padding=0))
    logits = t.conv2d(feats, p["route.w"], p["route.b"], padding=0)
    d = t.relu(t.conv2d(feats, p["defer1.w"], p["defer1.b"], padding=1))
    dmap = t.sigmoid(t.conv2d(d, p["defer2.w"], p["defer2.b"], padding=0))
    for out in (seg, logits, dmap):
        out.value.validate()
    return ForwardOutputs(seg_prob=seg, routing_logits=logits,
                          deferral_map=dmap, features=feats)


# -- checkpoints ---------------------------------------------------------
#
# Binary layout: header (magic, version, J, C, C', H, W, seed as
# little-endian u32/u64) followed by each parameter's float64 little-endian
# buffer in param_order. A JSON sidecar describes the architecture.

def save_checkpoint(net: DeferralNet, path) -> None:
    path = Path(path)
    header = _HEADER.pack(_MAGIC, _VERSION, net.expert_count, net.encoder_channels,
                          net.deferral_hidden, net.height, net.width, net.seed)
    blobs = [np.ascontiguousarray(p.value.data, dtype="<f8").tobytes()
             for _, p in net.parameters()]
    path.write_bytes(header + b"".join(blobs))
    sidecar = {
        "format": "pixeldefer-checkpoint",
        "version": _VERSION,
        "expert_count": net.expert_count,
        "encoder_channels": net.encoder_channels,
        "deferral_hidden": net.deferral_hidden,
        "height": net.height,
        "width": net.width,
        "init_seed": net.seed,
        "dtype": "float64 little-endian",
        "parameters": [{"name": k, "shape": list(p.value.shape)}
                       for k, p in net.parameters()],
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(path) -> DeferralNet:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ConfigError(f"checkpoint {path} is truncated")
    magic, version, j, c, cp, h, w, seed = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ConfigError(f"{path} is not a checkpoint (bad magic)")
    if version != _VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    net = DeferralNet(expert_count=j, encoder_channels=c, deferral_hidden=cp,
                      height=h, width=w, seed=seed)
    offset = _HEADER.size
    for name, p in net.parameters():
        n = p.value.size
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        offset += n * 8
        p.value.data[...] = arr.reshape(p.value.shape)
    if offset != len(blob):
        raise ConfigError(f"checkpoint {path} has trailing bytes")
    return net
