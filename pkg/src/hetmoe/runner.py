"""Turn a resolved configuration into models, runs, and report files.

One seed produces one run directory:

    <out>/seed_<s>/report.json     full RunReport
    <out>/seed_<s>/report.csv      per-epoch rows
    <out>/seed_<s>/classwise_e<k>.csv   epoch-by-class routing share per expert
    <out>/seed_<s>/checkpoint.npz  parameter registry + embedded model meta

plus, at the top level, the fully resolved config echo (config.ini) and
a seed-averaged summary.json.
"""

import json
import os

import numpy as np

from . import analytics
from .encoder import EncoderConfig
from .errors import DataError, ModeError
from .losses import LossWeights
from .model import GateConfig, MoEModel
from .presets import config_to_ini
from .tasks import num_classes as infer_num_classes, train_eval_split
from .trainer import TrainConfig, evaluate, train

CHECKPOINT_META_KEY = "__meta__"


def model_spec_from_config(config, dataset=None):
    """Reduce a full config to the kwargs needed to rebuild the model."""
    task = config["task"]
    mode = task["mode"]
    if mode not in ("classification", "regression"):
        raise DataError(f"unknown task mode {mode!r}")
    if mode == "classification":
        if task["num_classes"] == "auto":
            if dataset is None:
                raise DataError("num_classes=auto needs a dataset to inspect")
            n_classes = infer_num_classes(dataset)
        else:
            n_classes = int(task["num_classes"])
    else:
        n_classes = 1
    enc = config["encoder"]
    gate = config["gate"]
    experts = config["experts"]
    return {
        "encoder": {"vocab_size": enc["vocab_size"], "d_embed": enc["d_embed"],
                    "max_len": enc["max_len"], "frozen": enc["frozen"]},
        "gate": {"num_experts": len(experts["pool"]), "tau": gate["tau"],
                 "input_mode": gate["input_mode"], "policy": gate["policy"],
                 "d_hidden": gate["d_hidden"]},
        "pool": list(experts["pool"]),
        "d_proj": experts["d_proj"],
        "d_hid": experts["d_hid"],
        "tcn_dropout": experts["tcn_dropout"],
        "mode": mode,
        "num_classes": n_classes,
    }


def build_model(spec, rng):
    return MoEModel(
        EncoderConfig(**spec["encoder"]),
        GateConfig(**spec["gate"]),
        spec["pool"],
        d_proj=spec["d_proj"],
        d_hid=spec["d_hid"],
        rng=rng,
        mode=spec["mode"],
        num_classes=spec["num_classes"],
        tcn_dropout=spec["tcn_dropout"],
    )


def train_config_from(config):
    tr = config["trainer"]
    loss = config["loss"]
    return TrainConfig(
        learning_rate=tr["learning_rate"],
        beta1=tr["beta1"],
        beta2=tr["beta2"],
        eps_adam=tr["eps_adam"],
        weight_decay=tr["weight_decay"],
        batch_size=tr["batch_size"],
        epochs=tr["epochs"],
        seeds=tuple(tr["seeds"]),
        loss_weights=LossWeights(loss["lambda_ent"], loss["lambda_div"]),
        frozen_encoder=config["encoder"]["frozen"],
    )


def run_seed(config, dataset, seed):
    """One fully seeded run: split, init, train. Returns (model, report, spec)."""
    spec = model_spec_from_config(config, dataset)
    rng = np.random.default_rng(seed)
    train_set, eval_set = train_eval_split(
        dataset, config["trainer"]["eval_fraction"], rng)
    model = build_model(spec, rng)
    cfg = train_config_from(config)
    report = train(model, train_set, cfg, seed, eval_set=eval_set, rng=rng)
    return model, report, spec


def save_checkpoint(model, spec, path):
    arrays = model.state_arrays()
    arrays[CHECKPOINT_META_KEY] = np.array(json.dumps(spec))
    np.savez(path, **arrays)


def load_checkpoint(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        spec = json.loads(str(data[CHECKPOINT_META_KEY]))
        arrays = {name: data[name] for name in data.files
                  if name != CHECKPOINT_META_KEY}
    model = build_model(spec, np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model, spec


def write_run_outputs(out_dir, model, report, spec):
    os.makedirs(out_dir, exist_ok=True)
    report_dict = report.to_dict()
    analytics.emit_report(report_dict, "json", os.path.join(out_dir, "report.json"))
    analytics.emit_report(report_dict, "csv", os.path.join(out_dir, "report.csv"))
    for k in range(len(spec["pool"])):
        analytics.classwise_csv(report_dict, k,
                                os.path.join(out_dir, f"classwise_e{k}.csv"))
    save_checkpoint(model, spec, os.path.join(out_dir, "checkpoint.npz"))
    return report_dict


def _final_metrics(report_dict):
    last = report_dict["epochs"][-1]
    out = {"gate_entropy_nats": last["gate_entropy_nats"],
           "gate_entropy_bits": last["gate_entropy_bits"],
           "latency_ms_per_sample": last["latency_ms_per_sample"]}
    out.update(last["metrics"])
    for k, pct in enumerate(last["usage_hard_pct"]):
        out[f"usage_e{k}_pct"] = pct
    return out


def summarize_runs(report_dicts):
    """Seed-averaged view of the final epoch: mean and population std."""
    keys = sorted(_final_metrics(report_dicts[0]))
    summary = {"num_seeds": len(report_dicts),
               "seeds": [r["seed"] for r in report_dicts], "final": {}}
    for key in keys:
        values = [_final_metrics(r).get(key) for r in report_dicts]
        if any(v is None for v in values):
            summary["final"][key] = {"mean": None, "std": None}
            continue
        arr = np.asarray(values, dtype=np.float64)
        summary["final"][key] = {"mean": float(arr.mean()), "std": float(arr.std())}
    return summary


def run_experiment(config, dataset, out_dir):
    """Train every configured seed and write all artifacts under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    echo_path = os.path.join(out_dir, "config.ini")
    with open(echo_path, "w", encoding="utf-8") as fh:
        fh.write(config_to_ini(config))
    report_dicts = []
    for seed in config["trainer"]["seeds"]:
        model, report, spec = run_seed(config, dataset, seed)
        seed_dir = os.path.join(out_dir, f"seed_{seed}")
        report_dicts.append(write_run_outputs(seed_dir, model, report, spec))
    summary = summarize_runs(report_dicts)
    analytics.emit_report(summary, "json", os.path.join(out_dir, "summary.json"))
    return report_dicts, summary


def evaluate_checkpoint(model, dataset):
    """Metrics plus routing stats for a restored model on a dataset."""
    if not dataset:
        raise DataError("cannot evaluate an empty dataset")
    if model.mode == "classification":
        targets = [ex.target for ex in dataset]
        if any(isinstance(t, float) and not float(t).is_integer() for t in targets):
            raise ModeError("classification checkpoint evaluated on regression data")
    metrics, decisions, gate_rows, _ = evaluate(model, dataset)
    usage = analytics.expert_usage(decisions, len(model.experts))
    nats, bits = analytics.mean_gate_entropy(gate_rows)
    return {"metrics": metrics,
            "usage_hard_pct": (usage * 100.0).tolist(),
            "usage_soft_pct": (gate_rows.mean(axis=0) * 100.0).tolist(),
            "gate_entropy_nats": nats,
            "gate_entropy_bits": bits,
            "num_samples": len(dataset)}
