"""Training objectives for deferral-aware segmentation.

Three terms, all differentiable through the tape:

  * collaboration loss: per-pixel routing supervision over the J+1 channel
    softmax (reward channels whose branch is correct, penalize routing to a
    wrong expert) plus BCE on the segmentor output. Indicator coefficients
    (expert correct / model correct) are supervision constants, not
    differentiated.
  * coherence loss: BCE pulling the smooth deferral map toward the hard
    routed-to-expert mask, an MSE tying it to the total expert routing mass,
    and a rate term that taxes deferral.
  * load-balance penalty: hinge on each expert's batch-mean routing mass
    against configured lower/upper workload bounds.

Total = collaboration + lambda1 * coherence + lambda2 * balance; with a single
expert the balance term is computed but weighted 0 unless explicitly enabled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gridmath import DualGrid, ShapeError, Tape, scalar
from .routing import expert_argmax_mask, softmax_channels

#: workload bounds used by the three-expert studies
DEFAULT_LB_LOWER_3 = (0.15, 0.10, 0.10)
DEFAULT_LB_UPPER_3 = (0.35, 0.25, 0.30)


def default_bounds(expert_count: int):
    """Workload bounds when a config does not pin them: the tabulated
    three-expert values, otherwise a loose generic band."""
    if expert_count == 3:
        return DEFAULT_LB_LOWER_3, DEFAULT_LB_UPPER_3
    lower = (0.05,) * expert_count
    upper = (min(0.9, 1.5 / expert_count),) * expert_count
    return lower, upper


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 5.0
    beta1: float = 0.5
    beta2: float = 0.1
    lb_lower: tuple | None = None  # None -> default_bounds(J)
    lb_upper: tuple | None = None
    lb_single_expert: bool = False  # keep the balance term active at J=1

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if (self.lb_lower is None) != (self.lb_upper is None):
            raise ConfigError("lb_lower and lb_upper must be given together")
        if self.lb_lower is not None:
            lo, hi = tuple(self.lb_lower), tuple(self.lb_upper)
            if len(lo) != len(hi):
                raise ConfigError("lb_lower and lb_upper must have equal length")
            for l, u in zip(lo, hi):
                if not (0.0 <= l <= u <= 1.0):
                    raise ConfigError(f"need 0 <= lower <= upper <= 1, got ({l}, {u})")
            object.__setattr__(self, "lb_lower", lo)
            object.__setattr__(self, "lb_upper", hi)

    def bounds_for(self, expert_count: int):
        if self.lb_lower is None:
            return default_bounds(expert_count)
        if len(self.lb_lower) != expert_count:
            raise ConfigError(
                f"workload bounds sized {len(self.lb_lower)} but there are "
                f"{expert_count} experts")
        return self.lb_lower, self.lb_upper

    def effective_lambda2(self, expert_count: int) -> float:
        if expert_count == 1 and not self.lb_single_expert:
            return 0.0
        return self.lambda2

    def to_json_dict(self) -> dict:
        out = {"lambda1": self.lambda1, "lambda2": self.lambda2,
               "beta1": self.beta1, "beta2": self.beta2}
        if self.lb_lower is not None:
            out["lb_lower"] = list(self.lb_lower)
            out["lb_upper"] = list(self.lb_upper)
        if self.lb_single_expert:
            out["lb_single_expert"] = True
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "LossConfig":
        kwargs = dict(payload)
        if "lb_lower" in kwargs:
            kwargs["lb_lower"] = tuple(kwargs["lb_lower"])
        if "lb_upper" in kwargs:
            kwargs["lb_upper"] = tuple(kwargs["lb_upper"])
        unknown = set(kwargs) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"unknown loss config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class LossBreakdown:
    dc: float
    sc: float
    lb: float
    total: float


@dataclass
class WorkloadReport:
    rho: tuple
    lower: tuple
    upper: tuple


# -- supervision constants -------------------------------------------------

def dc_supervision(seg_prob: np.ndarray, truth: np.ndarray,
                   expert_preds: np.ndarray) -> np.ndarray:
    """Constant (J+1,H,W) coefficient grid multiplying the routing log-probs.

    Channel 0 carries -1 where the thresholded segmentor agrees with the
    truth; channel j carries -1 where expert j agrees and +1 where it
    disagrees (wrong experts are actively pushed away).
    """
    prob = seg_prob[0] if seg_prob.ndim == 3 else seg_prob
    y = np.asarray(truth) > 0
    ybar = prob >= 0.5
    j = expert_preds.shape[0]
    coef = np.empty((j + 1,) + y.shape)
    coef[0] = -(ybar == y).astype(np.float64)
    coef[1:] = 1.0 - 2.0 * ((expert_preds > 0) == y)
    return coef


def sc_supervision(routing_probs: np.ndarray) -> np.ndarray:
    """Constant (H,W) 0/1 mask: 1 where the argmax routing channel is an expert."""
    return expert_argmax_mask(routing_probs).astype(np.float64)


def snapshot_supervision(outputs, truths, expert_preds):
    """Per-sample (coefficient grid, pseudo mask) pairs frozen at the current
    outputs, for reuse across re-evaluations of the same step."""
    if not isinstance(outputs, (list, tuple)):
        outputs, truths, expert_preds = [outputs], [truths], [expert_preds]
    pairs = []
    for o, y, m in zip(outputs, truths, expert_preds):
        coef = dc_supervision(o.seg_prob.value.data, y, m)
        pseudo = sc_supervision(softmax_channels(o.routing_logits.value.data))
        pairs.append((coef, pseudo))
    return pairs


# -- tape-composed losses ---------------------------------------------------

def _bce_sum(tape: Tape, prob: DualGrid, target: np.ndarray) -> DualGrid:
    """Sum over entries of -(t log p + (1-t) log(1-p)) with clamped logs."""
    log_p = tape.clamped_log(prob)
    log_q = tape.clamped_log(tape.affine(prob, -1.0, 1.0))
    pos = tape.total_sum(tape.mul_const(log_p, target))
    neg = tape.total_sum(tape.mul_const(log_q, 1.0 - target))
    return tape.affine(tape.add(pos, neg), -1.0)


def bce_loss(tape: Tape, prob: DualGrid, target: np.ndarray) -> DualGrid:
    """Mean binary cross-entropy of a probability grid against a 0/1 target."""
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 2:
        t = t[np.newaxis]
    return tape.affine(_bce_sum(tape, prob, t), 1.0 / prob.value.size)


def dc_loss(tape: Tape, seg_prob: DualGrid, routing_logits: DualGrid,
            truth: np.ndarray, expert_preds: np.ndarray, *,
            probs: DualGrid | None = None,
            supervision: np.ndarray | None = None) -> DualGrid:
    """Routing collaboration loss, averaged over pixels."""
    j = routing_logits.value.channels - 1
    if expert_preds.shape[0] != j:
        raise ShapeError(
            f"routing has {j} expert channels but {expert_preds.shape[0]} prediction maps")
    if supervision is None:
        supervision = dc_supervision(seg_prob.value.data, truth, expert_preds)
    if probs is None:
        probs = tape.channel_softmax(routing_logits)
    logp = tape.clamped_log(probs)
    routing_term = tape.total_sum(tape.mul_const(logp, supervision))
    target = (np.asarray(truth) > 0).astype(np.float64)[np.newaxis]
    bce = _bce_sum(tape, seg_prob, target)
    n = seg_prob.value.height * seg_prob.value.width
    return tape.affine(tape.add(routing_term, bce), 1.0 / n)


def sc_loss(tape: Tape, deferral_map: DualGrid, routing_probs: DualGrid,
            cfg: LossConfig, *, pseudo: np.ndarray | None = None) -> DualGrid:
    """Coherence loss between the smooth deferral map and the routed mask."""
    j1 = routing_probs.value.channels
    if pseudo is None:
        pseudo = sc_supervision(routing_probs.value.data)
    target = pseudo[np.newaxis]
    bce = _bce_sum(tape, deferral_map, target)
    expert_mass = tape.channel_sum(routing_probs, 1, j1)
    diff = tape.add(deferral_map, tape.affine(expert_mass, -1.0))
    mse = tape.total_sum(tape.mul(diff, diff))
    rate = tape.total_sum(deferral_map)
    n = deferral_map.value.height * deferral_map.value.width
    combined = tape.add(bce, tape.add(tape.affine(mse, cfg.beta1),
                                      tape.affine(rate, cfg.beta2)))
    return tape.affine(combined, 1.0 / n)


def lb_penalty(tape: Tape, routing_probs_batch, cfg: LossConfig):
    """Hinge penalty on batch-mean expert workloads; also reports the ratios."""
    batch = list(routing_probs_batch) if isinstance(routing_probs_batch, (list, tuple)) \
        else [routing_probs_batch]
    j1 = batch[0].value.channels
    j = j1 - 1
    lower, upper = cfg.bounds_for(j)
    total = None
    n_pixels = 0
    for p in batch:
        if p.value.channels != j1:
            raise ShapeError("inconsistent channel counts across the batch")
        s = tape.spatial_sum(p)
        total = s if total is None else tape.add(total, s)
        n_pixels += p.value.height * p.value.width
    rho_all = tape.affine(total, 1.0 / n_pixels)  # (J+1,1,1)
    rho = tape.channel_slice(rho_all, 1, j1)
    u = np.asarray(upper).reshape(j, 1, 1)
    l = np.asarray(lower).reshape(j, 1, 1)
    over = tape.relu(tape.add_const(rho, -u))
    under = tape.relu(tape.add_const(tape.affine(rho, -1.0), l))
    penalty = tape.total_sum(tape.add(over, under))
    report = WorkloadReport(rho=tuple(float(v) for v in rho.value.data[:, 0, 0]),
                            lower=tuple(lower), upper=tuple(upper))
    return penalty, report


def total_loss(tape: Tape, outputs, truths, expert_preds, cfg: LossConfig, *,
               frozen_supervision=None):
    """Batch objective; returns (scalar node, LossBreakdown, WorkloadReport).

    ``outputs`` may be a single forward result or a list (a mini-batch);
    truths/expert_preds follow the same arity. ``frozen_supervision`` reuses
    per-sample (coefficient grid, pseudo mask) pairs instead of deriving them
    from the current outputs; gradient checks rely on this because the
    supervision indicators are constants of the step being differentiated.
    """
    if not isinstance(outputs, (list, tuple)):
        outputs, truths, expert_preds = [outputs], [truths], [expert_preds]
    b = len(outputs)
    j = outputs[0].routing_logits.value.channels - 1
    if frozen_supervision is None:
        frozen_supervision = [(None, None)] * b
    probs = [tape.channel_softmax(o.routing_logits) for o in outputs]
    dc_nodes = [dc_loss(tape, o.seg_prob, o.routing_logits, y, m, probs=p,
                        supervision=sup)
                for o, y, m, p, (sup, _) in
                zip(outputs, truths, expert_preds, probs, frozen_supervision)]
    sc_nodes = [sc_loss(tape, o.deferral_map, p, cfg, pseudo=pseudo)
                for o, p, (_, pseudo) in zip(outputs, probs, frozen_supervision)]
    dc = tape.affine(_sum_nodes(tape, dc_nodes), 1.0 / b)
    sc = tape.affine(_sum_nodes(tape, sc_nodes), 1.0 / b)
    lb, workload = lb_penalty(tape, probs, cfg)
    lam2 = cfg.effective_lambda2(j)
    total = tape.add(dc, tape.add(tape.affine(sc, cfg.lambda1), tape.affine(lb, lam2)))
    breakdown = LossBreakdown(dc=scalar(dc), sc=scalar(sc), lb=scalar(lb),
                              total=scalar(total))
    return total, breakdown, workload


def _sum_nodes(tape: Tape, nodes):
    acc = nodes[0]
    for n in nodes[1:]:
        acc = tape.add(acc, n)
    return acc


# -- instance-level softmax surrogate (reference implementation) ------------

def instance_deferral_loss(class_logits, defer_logits, label: int,
                           expert_labels) -> float:
    """Whole-instance deferral surrogate over the augmented label space.

    Softmax over K class scores plus J deferral scores; the loss rewards the
    true class score and every deferral score whose expert is correct. Kept
    free of the tape so it can serve as an independent oracle.
    """
    f = np.concatenate([np.asarray(class_logits, dtype=np.float64).ravel(),
                        np.asarray(defer_logits, dtype=np.float64).ravel()])
    k = len(np.ravel(class_logits))
    if k < 2:
        raise ConfigError("need at least two class scores")
    shifted = f - f.max()
    p = np.exp(shifted)
    p /= p.sum()
    p = np.clip(p, 1e-12, 1.0)
    loss = -np.log(p[label])
    for jj, m in enumerate(np.ravel(expert_labels)):
        if int(m) == int(label):
            loss -= np.log(p[k + jj])
    return float(loss)
