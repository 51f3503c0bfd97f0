"""Composite training objective: task loss + entropy and diversity penalties.

Both penalties are functions of the soft gate probabilities G (B x K),
never of the discrete routing selections:

    entropy_penalty(G)   = -(1/B) sum_i sum_k g_ik ln g_ik        in [0, ln K]
    diversity_penalty(G) = sum_k (usage_k / sum_l usage_l)^2      in [1/K, 1]

with usage_k = sum_i g_ik.  Logs are natural; 0 ln 0 is treated as 0 via
a 1e-12 clamp inside the log.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ParameterError


@dataclass
class LossWeights:
    lambda_ent: float = 0.05
    lambda_div: float = 0.08

    def __post_init__(self):
        if self.lambda_ent < 0 or self.lambda_div < 0:
            raise ParameterError("loss weights must be >= 0")


def _check_rows(G):
    if G.data.ndim != 2:
        raise ContractError(f"gate probabilities must be B x K, got shape {G.shape}")
    sums = G.data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        worst = float(np.abs(sums - 1.0).max())
        raise ContractError(f"gate rows must sum to 1 within 1e-6 (off by {worst:.2e})")


def entropy_penalty(G):
    _check_rows(G)
    b = G.shape[0]
    logs = ad.log(ad.clamp_min(G, ad.LOG_CLAMP))
    return ad.scale(ad.tsum(ad.mul(G, logs)), -1.0 / b)


def diversity_penalty(G):
    _check_rows(G)
    usage = ad.sum_axis(G, axis=0)
    total = ad.tsum(usage)
    shares = ad.mul(usage, ad.pow_const(total, -1.0))
    return ad.tsum(ad.pow_const(shares, 2.0))


def total_loss(task_loss, G, weights: LossWeights):
    """task + lambda_ent * entropy + lambda_div * diversity.

    Zero-weight terms are skipped entirely, so with both weights zero the
    returned tensor is the task loss itself.
    """
    out = task_loss
    if weights.lambda_ent != 0.0:
        out = ad.add(out, ad.scale(entropy_penalty(G), weights.lambda_ent))
    if weights.lambda_div != 0.0:
        out = ad.add(out, ad.scale(diversity_penalty(G), weights.lambda_div))
    return out
