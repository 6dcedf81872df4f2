"""Run configuration: one JSON file drives gen-data / train / eval / sweep.

Layout:
    {
      "dataset":  {... DatasetSpec fields ...},
      "experts":  {"pool": "comparative", "subset": ["expert1"]}
                  | {"name": "...", "mode": "...", "experts": [{...}]},
      "loss":     {... LossConfig keys ...},
      "training": {... TrainingConfig fields except loss/expert refs ...}
    }
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from . import experts
from .errors import ConfigError
from .losses import LossConfig
from .synthdata import DatasetSpec
from .trainer import TrainingConfig


@dataclass
class RunConfig:
    dataset: DatasetSpec
    training: TrainingConfig
    inline_pool: tuple | None = None  # profiles when the config embeds them

    def profiles(self):
        if self.inline_pool is not None:
            if self.training.expert_subset:
                by_name = {p.name: p for p in self.inline_pool}
                try:
                    return tuple(by_name[n] for n in self.training.expert_subset)
                except KeyError as exc:
                    raise ConfigError(f"inline pool has no expert {exc.args[0]!r}") from exc
            return self.inline_pool
        return experts.pool(self.training.expert_pool, self.training.expert_subset)

    def to_json_dict(self) -> dict:
        training = self.training.to_json_dict()
        loss = training.pop("loss")
        expert_section: dict = {"pool": training.pop("expert_pool")}
        subset = training.pop("expert_subset")
        if subset:
            expert_section["subset"] = list(subset)
        if self.inline_pool is not None:
            expert_section = experts.to_json_dict("inline", self.inline_pool)
            if subset:
                expert_section["subset"] = list(subset)
        return {
            "dataset": {k: getattr(self.dataset, k) for k in
                        ("count", "height", "width", "family", "noise_sigma",
                         "blur_radius", "band_width", "seed")},
            "experts": expert_section,
            "loss": loss,
            "training": training,
        }

    def hash(self) -> str:
        canonical = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def parse_run_config(payload: dict) -> RunConfig:
    try:
        dataset = DatasetSpec(**payload.get("dataset", {"count": 200}))
    except TypeError as exc:
        raise ConfigError(f"bad dataset section: {exc}") from exc
    expert_section = dict(payload.get("experts", {"pool": "comparative"}))
    subset = expert_section.pop("subset", None)
    inline_pool = None
    if "experts" in expert_section:
        inline_pool = experts.from_json_dict(expert_section)
        pool_name = expert_section.get("name", "inline")
    elif "pool" in expert_section:
        pool_name = expert_section["pool"]
    else:
        raise ConfigError("experts section needs either 'pool' or inline 'experts'")
    training_section = dict(payload.get("training", {}))
    training_section["loss"] = payload.get("loss", {})
    training_section["expert_pool"] = pool_name
    if subset is not None:
        training_section["expert_subset"] = tuple(subset)
    training = TrainingConfig.from_json_dict(training_section)
    return RunConfig(dataset=dataset, training=training, inline_pool=inline_pool)


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    return parse_run_config(payload)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """key=value overrides for scalar fields, dotted into sections,
    e.g. training.seed=7 loss.lambda2=0 dataset.count=50."""
    payload = cfg.to_json_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        target = payload
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(f"unknown override section {key!r}")
            target = target[part]
        leaf = parts[-1]
        if leaf not in target:
            raise ConfigError(f"unknown override key {key!r}")
        if isinstance(target[leaf], (dict, list)):
            raise ConfigError(f"override {key!r} is not a scalar field")
        try:
            target[leaf] = json.loads(raw)
        except json.JSONDecodeError:
            target[leaf] = raw  # bare strings
    return parse_run_config(payload)
