"""Measurements and report serialization.

Everything the library reports lives here: expert usage (hard selections
and soft gate mass, both emitted and labelled), mean gate entropy in
nats and bits, classwise mean routing probabilities, task metrics
(accuracy + macro-F1 for classification, MSE + Pearson r for
regression), latency profiling, and stable JSON/CSV emission.

Report schemas (also documented in the README):

* run report JSON: keys seed, mode, eval_split, epochs[], final
  {param_checksum, encoder_checksum}; each epochs[] entry carries
  EPOCH_FIELDS below.
* per-run CSV: one row per epoch with EPOCH_CSV_COLUMNS plus one
  usage_e<k>_pct column per expert.
* classwise CSV: rows = epochs, first column "epoch", one column per
  class/tag; values are the mean gate probability (as a percentage)
  for one expert, matching the epoch-by-class layout used for routing
  drift analysis.
"""

import csv
import io
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .encoder import TokenBatch
from .errors import DataError, ModeError, ParameterError

LN2 = float(np.log(2.0))

EPOCH_FIELDS = (
    "epoch", "train_loss", "metrics", "gate_entropy_nats", "gate_entropy_bits",
    "usage_hard_pct", "usage_soft_pct", "classwise_labels", "classwise_matrix",
    "latency_ms_per_sample",
)

EPOCH_CSV_COLUMNS = (
    "epoch", "train_loss", "metric_primary", "metric_secondary",
    "gate_entropy_nats", "gate_entropy_bits", "latency_ms_per_sample",
)


@dataclass
class RoutingStats:
    """One evaluation pass of routing behavior.

    usage_hard: fraction of samples whose selected set contains each
    expert (selected-set convention); usage_soft: mean gate mass per
    expert; classwise: mean gate row per class/tag, row-stochastic.
    """
    usage_hard: np.ndarray
    usage_soft: np.ndarray
    mean_entropy_nats: float
    mean_entropy_bits: float
    classwise_labels: list
    classwise: np.ndarray


def routing_stats(decisions, gate_rows, groups) -> RoutingStats:
    gate_rows = np.asarray(gate_rows, dtype=np.float64)
    nats, bits = mean_gate_entropy(gate_rows)
    labels, matrix = classwise_routing(gate_rows, groups)
    return RoutingStats(
        usage_hard=expert_usage(decisions, gate_rows.shape[1]),
        usage_soft=gate_rows.mean(axis=0),
        mean_entropy_nats=nats,
        mean_entropy_bits=bits,
        classwise_labels=labels,
        classwise=matrix,
    )


def expert_usage(decisions, num_experts):
    """Fraction of samples whose selected set contains each expert.

    Under top-1 the fractions partition the batch; under top-2 they sum
    to 2 (the selected-set convention).  Use `normalize_usage` for the
    partition view.
    """
    if not decisions:
        raise DataError("expert_usage needs at least one routing decision")
    counts = np.zeros(num_experts)
    for d in decisions:
        for k in d.selected:
            counts[k] += 1.0
    return counts / len(decisions)


def normalize_usage(usage):
    total = usage.sum()
    return usage / total if total > 0 else usage


def mean_gate_entropy(gate_rows):
    """Mean row entropy of gate probabilities, as (nats, bits)."""
    g = np.asarray(gate_rows, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] == 0:
        raise DataError(f"gate probabilities must be nonempty B x K, got {g.shape}")
    safe = np.maximum(g, 1e-12)
    nats = float(-(g * np.log(safe)).sum(axis=1).mean())
    return nats, nats / LN2


def classwise_routing(gate_rows, groups):
    """Mean soft gate probability per expert, grouped by class or tag.

    Returns (sorted group labels, matrix [group x expert]); each row is a
    convex combination of gate rows and therefore sums to 1.
    """
    g = np.asarray(gate_rows, dtype=np.float64)
    if len(groups) != g.shape[0]:
        raise DataError(f"{len(groups)} group labels for {g.shape[0]} gate rows")
    labels = sorted(set(groups), key=str)
    matrix = np.zeros((len(labels), g.shape[1]))
    for i, label in enumerate(labels):
        mask = np.array([grp == label for grp in groups])
        matrix[i] = g[mask].mean(axis=0)
    return labels, matrix


def _macro_f1(pred, true, num_classes):
    f1s = []
    for c in range(num_classes):
        tp = int(((pred == c) & (true == c)).sum())
        fp = int(((pred == c) & (true != c)).sum())
        fn = int(((pred != c) & (true == c)).sum())
        denom = 2 * tp + fp + fn
        f1s.append(2.0 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(f1s))


def pearson_r(x, y):
    """Centered correlation; None when either argument has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float((xc * xc).sum())
    vy = float((yc * yc).sum())
    if vx == 0.0 or vy == 0.0:
        return None
    return float((xc * yc).sum() / np.sqrt(vx * vy))


def task_metrics(predictions, targets, mode, num_classes=None):
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.shape != targets.shape:
        raise DataError(f"predictions shape {predictions.shape} vs targets {targets.shape}")
    if predictions.size == 0:
        raise DataError("task_metrics needs at least one sample")
    if mode == "classification":
        if num_classes is None:
            num_classes = int(max(predictions.max(), targets.max())) + 1
        accuracy = float((predictions == targets).mean())
        return {"accuracy": accuracy,
                "macro_f1": _macro_f1(predictions, targets, num_classes)}
    if mode == "regression":
        diff = predictions - targets
        return {"mse": float((diff * diff).mean()),
                "pearson_r": pearson_r(predictions, targets)}
    raise ModeError(f"unknown metric mode {mode!r}")


def latency_profile(model, dataset, repetitions):
    """Mean wall-clock ms per single-sample eval forward, per routed expert.

    One warm-up pass over the dataset is excluded from timing.
    """
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    if not dataset:
        raise DataError("latency_profile needs a nonempty dataset")
    batches = [TokenBatch.from_examples([ex]) for ex in dataset]
    for batch in batches:
        model.forward(batch, phase="eval")
    sums = {}
    counts = {}
    overall_time = 0.0
    n = 0
    for _ in range(repetitions):
        for batch in batches:
            t0 = time.perf_counter()
            result = model.forward(batch, phase="eval")
            dt = (time.perf_counter() - t0) * 1000.0
            key = result.decisions[0].selected
            sums[key] = sums.get(key, 0.0) + dt
            counts[key] = counts.get(key, 0) + 1
            overall_time += dt
            n += 1
    per_path = {"+".join(str(k) for k in key): sums[key] / counts[key]
                for key in sorted(sums)}
    return {"overall_ms": overall_time / n, "per_path_ms": per_path,
            "path_counts": {"+".join(str(k) for k in key): counts[key]
                            for key in sorted(counts)}}


# ---------------------------------------------------------------------------
# emission


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_report(report_dict, fmt, path):
    """Serialize a run report with stable field ordering.

    Re-emitting the same report produces byte-identical output.
    """
    if fmt == "json":
        _atomic_write(path, json.dumps(report_dict, indent=2) + "\n")
        return
    if fmt == "csv":
        rows = []
        for ep in report_dict["epochs"]:
            metrics = ep["metrics"]
            if "accuracy" in metrics:
                primary, secondary = metrics["accuracy"], metrics["macro_f1"]
            else:
                primary = metrics["mse"]
                secondary = metrics["pearson_r"]
            row = {
                "epoch": ep["epoch"],
                "train_loss": ep["train_loss"],
                "metric_primary": primary,
                "metric_secondary": "" if secondary is None else secondary,
                "gate_entropy_nats": ep["gate_entropy_nats"],
                "gate_entropy_bits": ep["gate_entropy_bits"],
                "latency_ms_per_sample": ep["latency_ms_per_sample"],
            }
            for k, pct in enumerate(ep["usage_hard_pct"]):
                row[f"usage_e{k}_pct"] = pct
            rows.append(row)
        n_experts = len(report_dict["epochs"][0]["usage_hard_pct"])
        columns = list(EPOCH_CSV_COLUMNS) + [f"usage_e{k}_pct" for k in range(n_experts)]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        _atomic_write(path, buf.getvalue())
        return
    raise ParameterError(f"unknown report format {fmt!r}")


def classwise_csv(report_dict, expert_index, path):
    """Epoch-by-class CSV of mean routing share (%) to one expert."""
    epochs = report_dict["epochs"]
    if not epochs:
        raise DataError("report has no epochs")
    labels = [str(x) for x in epochs[0]["classwise_labels"]]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch"] + labels)
    for ep in epochs:
        shares = [row[expert_index] * 100.0 for row in ep["classwise_matrix"]]
        writer.writerow([ep["epoch"]] + [f"{s:.4f}" for s in shares])
    _atomic_write(path, buf.getvalue())


def strip_timing(report_dict):
    """Copy of a report with wall-clock fields removed (determinism view)."""
    out = json.loads(json.dumps(report_dict))
    for ep in out["epochs"]:
        ep.pop("latency_ms_per_sample", None)
    return out
