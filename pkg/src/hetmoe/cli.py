"""Command-line experiment runner.

Subcommands: gen-data, train, eval, report.  Exit codes: 0 on success,
2 on usage errors, 1 on runtime errors.
"""

import argparse
import configparser
import csv
import io
import json
import os
import sys

import numpy as np

from . import tasks
from .analytics import _atomic_write
from .errors import HetMoeError, UsageError
from .presets import PRESETS, resolve_config
from .runner import evaluate_checkpoint, load_checkpoint, run_experiment

TABLE_COLUMNS = ("model", "accuracy_f1", "usage", "entropy_bits", "time_ms")


def _build_parser():
    parser = argparse.ArgumentParser(prog="hetmoe",
                                     description="Sparse mixture-of-experts lab")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic JSONL dataset")
    gen.add_argument("--task", required=True,
                     choices=["static", "temporal", "mixed", "regression"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--ratio", type=float, default=0.5,
                     help="static share for the mixed task")
    gen.add_argument("--min-len", type=int, default=tasks.DEFAULT_MIN_LEN)
    gen.add_argument("--max-len", type=int, default=tasks.DEFAULT_MAX_LEN)

    tr = sub.add_parser("train", help="train one configuration across its seeds")
    tr.add_argument("--preset", choices=sorted(PRESETS), default=None)
    tr.add_argument("--config", default=None, help="INI config file")
    tr.add_argument("--dataset", required=True, help="JSONL dataset path")
    tr.add_argument("--out", required=True, help="output run directory")
    tr.add_argument("--seed", default=None,
                    help="comma-separated seed list overriding the config")
    tr.add_argument("overrides", nargs="*", metavar="section.key=value",
                    help="dotted config overrides (highest precedence)")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--model", required=True, help="checkpoint .npz path")
    ev.add_argument("--dataset", required=True)

    rep = sub.add_parser("report", help="aggregate the seed runs of a directory")
    rep.add_argument("--run", required=True, help="directory written by train")
    return parser


def cmd_gen_data(args):
    generators = {
        "static": lambda: tasks.gen_static(args.n, args.seed, args.min_len, args.max_len),
        "temporal": lambda: tasks.gen_temporal(args.n, args.seed, args.min_len, args.max_len),
        "mixed": lambda: tasks.gen_mixed(args.n, args.ratio, args.seed,
                                         args.min_len, args.max_len),
        "regression": lambda: tasks.gen_regression(args.n, args.seed,
                                                   args.min_len, args.max_len),
    }
    dataset = generators[args.task]()
    tasks.save_jsonl(dataset, args.out)
    print(f"wrote {len(dataset)} examples to {args.out}")
    return 0


def cmd_train(args):
    if args.preset is None and args.config is None:
        raise UsageError("train needs --preset or --config")
    seeds = None
    if args.seed is not None:
        try:
            seeds = [int(s) for s in str(args.seed).split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"bad --seed value {args.seed!r}") from None
        if not seeds:
            raise UsageError("empty --seed list")
    config = resolve_config(preset=args.preset, config_path=args.config,
                            overrides=args.overrides, seeds=seeds)
    if not os.path.exists(args.dataset):
        raise FileNotFoundError(f"dataset not found: {args.dataset}")
    dataset = tasks.load_jsonl(args.dataset,
                               vocab_size=config["encoder"]["vocab_size"])
    report_dicts, summary = run_experiment(config, dataset, args.out)
    for rd in report_dicts:
        last = rd["epochs"][-1]
        print(f"seed {rd['seed']}: {json.dumps(last['metrics'])} "
              f"usage={['%.1f' % u for u in last['usage_hard_pct']]}")
    print(f"summary written to {os.path.join(args.out, 'summary.json')}")
    return 0


def cmd_eval(args):
    model, _ = load_checkpoint(args.model)
    if not os.path.exists(args.dataset):
        raise FileNotFoundError(f"dataset not found: {args.dataset}")
    dataset = tasks.load_jsonl(args.dataset,
                               vocab_size=model.encoder.cfg.vocab_size)
    stats = evaluate_checkpoint(model, dataset)
    print(json.dumps(stats, indent=2))
    return 0


def _fmt_pair(mean, std):
    return f"{mean:.2f}" if std is None else f"{mean:.2f} +/- {std:.2f}"


def cmd_report(args):
    run_dir = args.run
    if not os.path.isdir(run_dir):
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    seed_dirs = sorted(d for d in os.listdir(run_dir)
                       if d.startswith("seed_")
                       and os.path.isfile(os.path.join(run_dir, d, "report.json")))
    if not seed_dirs:
        raise FileNotFoundError(f"no seed_*/report.json under {run_dir}")
    reports = []
    for d in seed_dirs:
        with open(os.path.join(run_dir, d, "report.json"), encoding="utf-8") as fh:
            reports.append(json.load(fh))

    finals = [r["epochs"][-1] for r in reports]
    n_experts = len(finals[0]["usage_hard_pct"])
    pool = _pool_label(run_dir)

    def stat(values):
        arr = np.asarray([v for v in values], dtype=np.float64)
        return float(arr.mean()), float(arr.std())

    if "accuracy" in finals[0]["metrics"]:
        m1 = stat([f["metrics"]["accuracy"] for f in finals])
        m2 = stat([f["metrics"]["macro_f1"] for f in finals])
        acc_f1 = (f"{m1[0] * 100:.2f} +/- {m1[1] * 100:.2f} / "
                  f"{m2[0] * 100:.2f} +/- {m2[1] * 100:.2f}")
    else:
        m1 = stat([f["metrics"]["mse"] for f in finals])
        pearsons = [f["metrics"]["pearson_r"] for f in finals]
        if any(p is None for p in pearsons):
            acc_f1 = f"mse {m1[0]:.4f} +/- {m1[1]:.4f} / r undefined"
        else:
            m2 = stat(pearsons)
            acc_f1 = (f"mse {m1[0]:.4f} +/- {m1[1]:.4f} / "
                      f"r {m2[0]:.4f} +/- {m2[1]:.4f}")
    usage_means = [stat([f["usage_hard_pct"][k] for f in finals])[0]
                   for k in range(n_experts)]
    usage = " / ".join(f"{u:.1f}%" for u in usage_means)
    ent = stat([f["gate_entropy_bits"] for f in finals])
    lat = stat([f["latency_ms_per_sample"] for f in finals])

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    writer.writerow([pool, acc_f1, usage, f"{ent[0]:.4f}", f"{lat[0]:.3f}"])
    table_path = os.path.join(run_dir, "table.csv")
    _atomic_write(table_path, buf.getvalue())

    # Seed-averaged epoch-by-class routing share per expert.
    labels = [str(x) for x in reports[0]["epochs"][0]["classwise_labels"]]
    n_epochs = len(reports[0]["epochs"])
    for k in range(n_experts):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch"] + labels)
        for e in range(n_epochs):
            shares = np.mean([[row[k] for row in r["epochs"][e]["classwise_matrix"]]
                              for r in reports], axis=0) * 100.0
            writer.writerow([reports[0]["epochs"][e]["epoch"]]
                            + [f"{s:.4f}" for s in shares])
        _atomic_write(os.path.join(run_dir, f"classwise_mean_e{k}.csv"), buf.getvalue())

    print(" | ".join(TABLE_COLUMNS))
    print(f"{pool} | {acc_f1} | {usage} | {ent[0]:.4f} | {lat[0]:.3f}")
    print(f"table written to {table_path}")
    return 0


def _pool_label(run_dir):
    ini = os.path.join(run_dir, "config.ini")
    if os.path.isfile(ini):
        parser = configparser.ConfigParser()
        parser.read(ini)
        if parser.has_option("experts", "pool"):
            return "+".join(p.strip() for p in parser.get("experts", "pool").split(","))
    return "unknown"


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen-data": cmd_gen_data, "train": cmd_train,
                "eval": cmd_eval, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (HetMoeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
