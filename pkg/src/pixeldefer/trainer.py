"""Mini-batch training with decoupled weight decay, step-decayed learning
rate, dual early stopping (validation DSC plateau + deferral-ratio
stability), and the grid / expert-subset sweep runners.

Early-stopping interpretation (recorded in every log header): the DSC counter
resets whenever best validation System DSC improves; the ratio counter resets
whenever the validation-mean total deferral ratio moves by more than
``rho_stability_tol`` between consecutive epochs. Training stops once both
counters reach their patience. The returned net carries the best-DSC
parameters.
"""
from __future__ import annotations

import csv
import itertools
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import experts, losses, metrics, model, routing
from .errors import ConfigError, TrainAbortError
from .gridmath import BACKEND, GridError, Tape, scalar
from .losses import LossConfig


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    lr_gamma: float = 0.8
    lr_step_epochs: int = 2
    batch_size: int = 2
    grad_accumulation: int = 4
    max_epochs: int = 200
    patience_dsc: int = 50
    patience_rho: int = 50
    rho_stability_tol: float = 0.005
    seed: int = 0
    augment: bool = True
    objective: str = "deferral"  # "deferral" | "bce-only"
    encoder_channels: int = 16
    deferral_hidden: int = 8
    expert_pool: str = "comparative"
    expert_subset: tuple | None = None
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        for name in ("learning_rate", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("lr_step_epochs", "batch_size", "grad_accumulation", "max_epochs",
                     "patience_dsc", "patience_rho"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 < self.lr_gamma <= 1.0):
            raise ConfigError("lr_gamma must lie in (0,1]")
        if max(self.patience_dsc, self.patience_rho) > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if self.objective not in ("deferral", "bce-only"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.expert_subset is not None:
            self.expert_subset = tuple(self.expert_subset)

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_gamma ** (epoch // self.lr_step_epochs)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["loss"] = self.loss.to_json_dict()
        if self.expert_subset is not None:
            out["expert_subset"] = list(self.expert_subset)
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "TrainingConfig":
        kwargs = dict(payload)
        if "loss" in kwargs:
            kwargs["loss"] = LossConfig.from_json_dict(kwargs["loss"])
        unknown = set(kwargs) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**kwargs)


class AdamW:
    """Adam moments with decoupled multiplicative weight decay."""

    def __init__(self, params, lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros(p.value.shape) for k, p in self.params}
        self.v = {k: np.zeros(p.value.shape) for k, p in self.params}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params:
            g = p.grad.data
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            # decay is applied to the weights directly, scaled by lr, so a
            # zero learning rate leaves parameters exactly unchanged
            p.value.data *= 1.0 - self.lr * self.weight_decay
            p.value.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grads(self) -> None:
        for _, p in self.params:
            p.reset_grad()


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def augment_sample(image: np.ndarray, mask: np.ndarray, band: np.ndarray, seed: int):
    """Random h/v flips and quarter rotations, identical across the three grids."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(4))
    flip_h = bool(rng.integers(2))
    flip_v = bool(rng.integers(2))
    img, msk, bnd = image, mask, band
    if k:
        img = np.rot90(img, k, axes=(1, 2))
        msk = np.rot90(msk, k)
        bnd = np.rot90(bnd, k)
    if flip_h:
        img, msk, bnd = img[:, :, ::-1], msk[:, ::-1], bnd[:, ::-1]
    if flip_v:
        img, msk, bnd = img[:, ::-1, :], msk[::-1, :], bnd[::-1, :]
    return (np.ascontiguousarray(img), np.ascontiguousarray(msk),
            np.ascontiguousarray(bnd))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_dc: float
    loss_sc: float
    loss_lb: float
    loss_total: float
    val_system_dsc: float | None
    val_expert_dsc: float | None
    val_model_dsc: float | None
    val_risk01: float
    rho: tuple
    rho_total: float
    seconds: float


@dataclass
class TrainLog:
    header: dict
    epochs: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"header": self.header, "epochs": [asdict(e) for e in self.epochs]}

    def write_csv(self, path) -> None:
        n_exp = len(self.epochs[0].rho) if self.epochs else 0
        cols = ["epoch", "lr", "loss_dc", "loss_sc", "loss_lb", "loss_total",
                "val_system_dsc", "val_expert_dsc", "val_model_dsc", "val_risk01",
                "rho_total"] + [f"rho_{j}" for j in range(1, n_exp + 1)] + ["seconds"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["# " + json.dumps(self.header, sort_keys=True)])
            writer.writerow(cols)
            for e in self.epochs:
                writer.writerow([e.epoch, e.lr, e.loss_dc, e.loss_sc, e.loss_lb,
                                 e.loss_total, e.val_system_dsc, e.val_expert_dsc,
                                 e.val_model_dsc, e.val_risk01, e.rho_total,
                                 *e.rho, e.seconds])


def split_by_id(samples, val_fraction: float = 0.2):
    """Deterministic 80/20 split keyed on a hash of each sample id."""
    import hashlib
    train, val = [], []
    for s in samples:
        h = int.from_bytes(hashlib.sha1(s.id.encode()).digest()[:4], "big")
        (val if (h / 2 ** 32) < val_fraction else train).append(s)
    if not train or not val:
        raise ConfigError("split produced an empty train or validation set")
    return train, val


def _validation_expert_draws(val_samples, profiles, seed: int):
    return [experts.simulate(s.mask, s.boundary_band, profiles,
                             _derived_seed(seed, 11, i)).predictions
            for i, s in enumerate(val_samples)]


def evaluate_net(net, samples, expert_draws, force_model: bool = False):
    """Branch metrics per sample plus the aggregate report.

    ``force_model`` scores the segmentor on every pixel (used for plain
    BCE baselines, whose routing channels are untrained noise).
    """
    per = []
    for s, preds in zip(samples, expert_draws):
        out = model.forward(net, s.image)
        fieldr = routing.RoutingField.from_logits(out.routing_logits.value)
        if force_model:
            decisions = np.zeros(s.mask.shape, dtype=np.int16)
        else:
            decisions = routing.decide(fieldr)
        fused = routing.fuse(out.seg_prob.value, decisions, preds)
        per.append(metrics.evaluate_branches(fused, out.seg_prob.value, preds,
                                             s.mask, fieldr))
    return per, metrics.aggregate(per)


def _bce_only_loss(tape, outputs_batch, truths):
    nodes = [losses.bce_loss(tape, out.seg_prob, (np.asarray(y) > 0))
             for out, y in zip(outputs_batch, truths)]
    acc = nodes[0]
    for n in nodes[1:]:
        acc = tape.add(acc, n)
    return tape.affine(acc, 1.0 / len(nodes))


def train(net: model.DeferralNet, train_samples, val_samples, cfg: TrainingConfig,
          profiles):
    """Optimize the net; returns (net with best-DSC parameters, TrainLog)."""
    profiles = tuple(profiles)
    j = len(profiles)
    if cfg.objective == "deferral":
        if j != net.expert_count:
            raise ConfigError(f"net has {net.expert_count} expert channels, pool has {j}")
        cfg.loss.bounds_for(j)  # fail fast on mismatched bounds
    if not train_samples or not val_samples:
        raise ConfigError("train and validation sets must be nonempty")

    opt = AdamW(net.parameters(), cfg.learning_rate, cfg.weight_decay)
    order_rng = np.random.default_rng(_derived_seed(cfg.seed, 3))
    val_draws = _validation_expert_draws(val_samples, profiles, cfg.seed)

    log = TrainLog(header={
        "config": cfg.to_json_dict(),
        "experts": [p.name for p in profiles],
        "backend": BACKEND,
        "early_stopping": ("dsc counter resets on best-DSC improvement; rho counter "
                           f"resets when |mean deferral ratio delta| > {cfg.rho_stability_tol}; "
                           "stop when both reach patience"),
    })

    best_dsc = -np.inf
    best_state = net.state_arrays()
    stale_dsc = 0
    stable_rho = 0
    prev_rho_total = None

    for epoch in range(cfg.max_epochs):
        t_start = time.perf_counter()
        opt.lr = cfg.lr_at(epoch)
        order = order_rng.permutation(len(train_samples))
        sums = np.zeros(4)
        n_batches = 0
        accum = 0
        opt.zero_grads()
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            outputs, truths, preds_batch = [], [], []
            tape = Tape()
            try:
                for si in batch_idx:
                    s = train_samples[si]
                    img, msk, bnd = s.image.data, s.mask, s.boundary_band
                    if cfg.augment:
                        img, msk, bnd = augment_sample(
                            img, msk, bnd, _derived_seed(cfg.seed, 5, epoch, int(si)))
                    preds = experts.simulate(
                        msk, bnd, profiles,
                        _derived_seed(cfg.seed, 7, epoch, int(si))).predictions
                    outputs.append(model.forward(net, img, tape))
                    truths.append(msk)
                    preds_batch.append(preds)
                if cfg.objective == "bce-only":
                    node = _bce_only_loss(tape, outputs, truths)
                    breakdown = losses.LossBreakdown(dc=scalar(node), sc=0.0, lb=0.0,
                                                     total=scalar(node))
                else:
                    node, breakdown, _ = losses.total_loss(tape, outputs, truths,
                                                           preds_batch, cfg.loss)
            except GridError as exc:  # overflow inside the forward pass
                raise TrainAbortError(
                    f"non-finite forward pass: {exc}",
                    snapshot={"epoch": epoch,
                              "samples": [train_samples[si].id for si in batch_idx],
                              "lr": opt.lr}) from exc
            if not np.isfinite(breakdown.total):
                raise TrainAbortError(
                    "non-finite loss",
                    snapshot={"epoch": epoch,
                              "samples": [train_samples[si].id for si in batch_idx],
                              "breakdown": asdict(breakdown), "lr": opt.lr})
            tape.backward(tape.affine(node, 1.0 / cfg.grad_accumulation))
            sums += (breakdown.dc, breakdown.sc, breakdown.lb, breakdown.total)
            n_batches += 1
            accum += 1
            if accum == cfg.grad_accumulation:
                opt.step()
                opt.zero_grads()
                accum = 0
        if accum:
            opt.step()
            opt.zero_grads()

        per, report = evaluate_net(net, val_samples, val_draws,
                                   force_model=cfg.objective == "bce-only")
        sys_dsc = report["branches"]["system"]["dsc"]["mean"]
        exp_dsc = report["branches"]["expert"]["dsc"]["mean"]
        mod_dsc = report["branches"]["model"]["dsc"]["mean"]
        risk = report["risk01"]["mean"]
        rho = tuple(w["mean"] for w in report["workload"])
        rho_total = float(sum(rho))
        log.epochs.append(EpochRecord(
            epoch=epoch, lr=opt.lr, loss_dc=sums[0] / n_batches,
            loss_sc=sums[1] / n_batches, loss_lb=sums[2] / n_batches,
            loss_total=sums[3] / n_batches,
            val_system_dsc=sys_dsc, val_expert_dsc=exp_dsc, val_model_dsc=mod_dsc,
            val_risk01=risk, rho=rho, rho_total=rho_total,
            seconds=time.perf_counter() - t_start))

        if sys_dsc is not None and sys_dsc > best_dsc + 1e-12:
            best_dsc = sys_dsc
            best_state = net.state_arrays()
            stale_dsc = 0
        else:
            stale_dsc += 1
        if prev_rho_total is not None and abs(rho_total - prev_rho_total) > cfg.rho_stability_tol:
            stable_rho = 0
        else:
            stable_rho += 1
        prev_rho_total = rho_total
        if stale_dsc >= cfg.patience_dsc and stable_rho >= cfg.patience_rho:
            log.header["stopped_early_at"] = epoch
            break

    net.load_state_arrays(best_state)
    log.header["best_val_system_dsc"] = None if best_dsc == -np.inf else best_dsc
    return net, log


# -- sweep runners ---------------------------------------------------------

LAMBDA_GRID_VALUES = (0.1, 1.0, 5.0, 10.0)

SCALABILITY_SUBSETS = {
    1: ("E1",),
    2: ("E2", "E3"),
    3: ("E1", "E2", "E3"),
    4: ("E2", "E3", "E4", "E5"),
    5: ("E1", "E2", "E3", "E4", "E5"),
}

COMPLEMENTARY_SUBSETS = {
    1: ("E1",),
    2: ("E1", "E6"),
    3: ("E1", "E2", "E3"),
    4: ("E1", "E2", "E3", "E4"),
    5: ("E1", "E2", "E3", "E4", "E5"),
}


def lambda_grid_cells(values=LAMBDA_GRID_VALUES):
    return [{"lambda1": l1, "lambda2": l2}
            for l1, l2 in itertools.product(values, values)]


def expert_subset_cells(study: str):
    if study == "scalability":
        table, pool_name = SCALABILITY_SUBSETS, "scalability"
    elif study == "complementary":
        table, pool_name = COMPLEMENTARY_SUBSETS, "complementary"
    else:
        raise ConfigError(f"unknown subset study {study!r}")
    return [{"experts": list(names), "pool": pool_name, "expert_count": jj}
            for jj, names in sorted(table.items())]


def _cell_config(base_cfg: TrainingConfig, cell: dict) -> TrainingConfig:
    cfg = TrainingConfig.from_json_dict(base_cfg.to_json_dict())
    if "lambda1" in cell:
        loss_kwargs = cfg.loss.to_json_dict()
        loss_kwargs["lambda1"] = cell["lambda1"]
        loss_kwargs["lambda2"] = cell["lambda2"]
        cfg.loss = LossConfig.from_json_dict(loss_kwargs)
    if "experts" in cell:
        cfg.expert_pool = cell["pool"]
        cfg.expert_subset = tuple(cell["experts"])
    return cfg


def run_cell(cell: dict, base_cfg: TrainingConfig, train_samples, val_samples) -> dict:
    cfg = _cell_config(base_cfg, cell)
    profiles = experts.pool(cfg.expert_pool, cfg.expert_subset)
    net = model.DeferralNet(expert_count=len(profiles),
                            encoder_channels=cfg.encoder_channels,
                            deferral_hidden=cfg.deferral_hidden,
                            height=train_samples[0].mask.shape[0],
                            width=train_samples[0].mask.shape[1],
                            seed=cfg.seed)
    net, log = train(net, train_samples, val_samples, cfg, profiles)
    _, report = evaluate_net(net, val_samples,
                             _validation_expert_draws(val_samples, profiles, cfg.seed))
    row = dict(cell)
    row["status"] = "ok"
    for branch in metrics.BRANCH_NAMES:
        for metric in metrics.METRIC_NAMES:
            cellv = report["branches"][branch][metric]
            row[f"{branch}_{metric}_mean"] = cellv["mean"]
            row[f"{branch}_{metric}_std"] = cellv["std"]
    row["risk01_mean"] = report["risk01"]["mean"]
    for jj, w in enumerate(report["workload"], start=1):
        row[f"rho_{jj}"] = w["mean"]
    row["epochs_run"] = len(log.epochs)
    return row


def sweep(cells, base_cfg: TrainingConfig, train_samples, val_samples) -> list:
    """One result row per cell; a failing cell is recorded, not fatal."""
    rows = []
    for cell in cells:
        try:
            rows.append(run_cell(cell, base_cfg, train_samples, val_samples))
        except Exception as exc:  # isolate cell failures
            row = dict(cell)
            row["status"] = f"failed: {exc}"
            rows.append(row)
    return rows


def write_sweep_csv(path, rows) -> None:
    keys = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
