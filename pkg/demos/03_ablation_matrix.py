"""Run a slice of the ablation matrix through the experiment runner.

Uses the same machinery as the CLI (`hetmoe train --preset ...`) but at a
reduced scale so the whole script finishes in under a minute.  Compares:

  * hard top-1 routing with and without gate regularization
  * top-2 and soft routing
  * the FFNN+TCN pool

on the mixed static/temporal task.
"""

from hetmoe import tasks
from hetmoe.presets import resolve_config
from hetmoe.runner import run_seed

data = tasks.gen_mixed(800, ratio=0.5, seed=7)

variants = {
    "top1 regularized": [],
    "top1 no-reg": ["loss.lambda_ent=0", "loss.lambda_div=0"],
    "top2": ["gate.policy=top2"],
    "soft": ["gate.policy=soft"],
    "ffnn+tcn": ["experts.pool=ffnn,tcn"],
}

print(f"{'variant':>18}  {'acc':>5}  {'entropy':>7}  {'usage %':>15}")
for name, overrides in variants.items():
    config = resolve_config(preset="desk",
                            overrides=["trainer.epochs=8"] + overrides)
    _, report, _ = run_seed(config, data, seed=1)
    last = report.epochs[-1]
    usage = " / ".join(f"{u:.1f}" for u in last.usage_hard_pct)
    print(f"{name:>18}  {last.metrics['accuracy']:.3f}  "
          f"{last.gate_entropy_nats:>7.3f}  {usage:>15}")
