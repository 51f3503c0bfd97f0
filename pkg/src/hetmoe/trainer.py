"""AdamW optimization, the seeded epoch loop, and evaluation.

A run is fully determined by (seed, config, dataset): the run RNG drives
parameter init (done by the caller via `build_model`), per-epoch
shuffling, routing samples, and dropout.  Reported wall-clock latency is
the one field exempt from the bitwise-determinism contract.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import analytics
from .autodiff import backward
from .encoder import TokenBatch
from .errors import DataError, ModeError, NumericError, ParameterError
from .losses import LossWeights


@dataclass
class TrainConfig:
    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 16
    epochs: int = 5
    seeds: tuple = (1, 2, 3)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    frozen_encoder: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")


class AdamWState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.step = 0


def adamw_step(params, grads, state: AdamWState, cfg: TrainConfig, frozen=()):
    """Decoupled-weight-decay update; parameters named in `frozen` are untouched."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    for name, p in params.items():
        if name in frozen:
            continue
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = p.data - cfg.learning_rate * (
            m_hat / (np.sqrt(v_hat) + cfg.eps_adam) + cfg.weight_decay * p.data)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    metrics: dict
    gate_entropy_nats: float
    gate_entropy_bits: float
    usage_hard_pct: list
    usage_soft_pct: list
    classwise_labels: list
    classwise_matrix: list
    latency_ms_per_sample: float


@dataclass
class RunReport:
    seed: int
    mode: str
    eval_split: str
    epochs: list
    param_checksum: str = ""
    encoder_checksum: str = ""

    def to_dict(self):
        return {
            "seed": self.seed,
            "mode": self.mode,
            "eval_split": self.eval_split,
            "epochs": [vars(e).copy() for e in self.epochs],
            "final": {
                "param_checksum": self.param_checksum,
                "encoder_checksum": self.encoder_checksum,
            },
        }


def _batches(dataset, order, batch_size):
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield [dataset[i] for i in idx]


def _targets(model, examples):
    if model.mode == "classification":
        targets = [ex.target for ex in examples]
        if any(isinstance(t, float) and not float(t).is_integer() for t in targets):
            raise ModeError("classification model got fractional targets")
        return np.asarray([int(t) for t in targets])
    return np.asarray([float(ex.target) for ex in examples], dtype=np.float64)


def evaluate(model, dataset, batch_size=64):
    """Deterministic eval pass: argmax routing, dropout off.

    Returns (metrics, decisions, gate_rows, predictions).
    """
    if not dataset:
        raise DataError("cannot evaluate on an empty dataset")
    decisions = []
    gate_rows = []
    preds = []
    targets = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        batch = TokenBatch.from_examples(chunk)
        result = model.forward(batch, phase="eval")
        decisions.extend(result.decisions)
        gate_rows.append(result.gate_probs.data)
        t = _targets(model, chunk)
        targets.append(t)
        if model.mode == "classification":
            preds.append(result.predictions.data.argmax(axis=1))
        else:
            preds.append(result.predictions.data)
    preds = np.concatenate(preds)
    targets = np.concatenate(targets)
    gate_rows = np.concatenate(gate_rows, axis=0)
    if model.mode == "classification":
        metrics = analytics.task_metrics(preds, targets, "classification",
                                         num_classes=model.num_classes)
    else:
        metrics = analytics.task_metrics(preds, targets, "regression")
    return metrics, decisions, gate_rows, preds


def train(model, dataset, cfg: TrainConfig, seed, eval_set=None, rng=None) -> RunReport:
    """Run the full epoch loop and collect per-epoch analytics.

    Per-epoch metrics are computed on `eval_set` when given (labelled
    "held_out" in the report), otherwise on the training set itself.
    """
    if not dataset:
        raise DataError("cannot train on an empty dataset")
    if rng is None:
        rng = np.random.default_rng(seed)
    if cfg.frozen_encoder:
        model.encoder.set_frozen(True)

    state = AdamWState()
    params = model.parameters()
    report_set = eval_set if eval_set is not None else dataset
    report = RunReport(seed=seed, mode=model.mode,
                       eval_split="held_out" if eval_set is not None else "train",
                       epochs=[])

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(dataset))
        losses = []
        frozen = model.frozen_names()
        for chunk in _batches(dataset, order, cfg.batch_size):
            batch = TokenBatch.from_examples(chunk)
            targets = _targets(model, chunk)
            model.zero_grad()
            loss, _ = model.training_loss(batch, targets, cfg.loss_weights, rng=rng)
            backward(loss)
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adamw_step(params, grads, state, cfg, frozen=frozen)
            losses.append(float(loss.data))

        t0 = time.perf_counter()
        metrics, decisions, gate_rows, _ = evaluate(model, report_set)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0 / len(report_set)

        groups = [ex.tag if ex.tag is not None else ex.target for ex in report_set]
        stats = analytics.routing_stats(decisions, gate_rows, groups)
        report.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            metrics=metrics,
            gate_entropy_nats=stats.mean_entropy_nats,
            gate_entropy_bits=stats.mean_entropy_bits,
            usage_hard_pct=(stats.usage_hard * 100.0).tolist(),
            usage_soft_pct=(stats.usage_soft * 100.0).tolist(),
            classwise_labels=stats.classwise_labels,
            classwise_matrix=stats.classwise.tolist(),
            latency_ms_per_sample=elapsed_ms,
        ))

    report.param_checksum = model.param_checksum()
    report.encoder_checksum = model.encoder_checksum()
    return report
