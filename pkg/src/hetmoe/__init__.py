"""Desk-scale heterogeneous sparse mixture-of-experts lab.

A numpy-backed stack for studying conditional computation with
structurally distinct experts: a minimal reverse-mode autodiff core, a
toy encoder whose position-0 summary slot is provably order-invariant,
FFNN/GRU/TCN experts over isolated input views, temperature-softmax
gating with straight-through top-1 (plus top-2 and soft) routing,
entropy/diversity-regularized training, synthetic tasks whose reasoning
demands are properties of the data, and routing analytics.
"""

from .analytics import RoutingStats, routing_stats
from .autodiff import Tensor, backward, finite_diff_check
from .encoder import Encoder, EncoderConfig, TokenBatch
from .errors import HetMoeError
from .experts import FFNNExpert, GRUExpert, TCNExpert, build_expert
from .losses import LossWeights, diversity_penalty, entropy_penalty, total_loss
from .model import ForwardResult, GateConfig, MoEModel, RoutingDecision
from .tasks import (Example, gen_mixed, gen_regression, gen_static, gen_temporal,
                    load_jsonl, save_jsonl)
from .trainer import AdamWState, RunReport, TrainConfig, adamw_step, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "RoutingStats", "routing_stats",
    "Tensor", "backward", "finite_diff_check",
    "Encoder", "EncoderConfig", "TokenBatch",
    "HetMoeError",
    "FFNNExpert", "GRUExpert", "TCNExpert", "build_expert",
    "LossWeights", "entropy_penalty", "diversity_penalty", "total_loss",
    "GateConfig", "MoEModel", "RoutingDecision", "ForwardResult",
    "Example", "gen_static", "gen_temporal", "gen_mixed", "gen_regression",
    "save_jsonl", "load_jsonl",
    "TrainConfig", "AdamWState", "RunReport", "adamw_step", "train", "evaluate",
    "__version__",
]
