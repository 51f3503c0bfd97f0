"""Model assembly: dual projections, gating network, routing policies.

The pipeline per batch:

    H  = encoder.encode(batch)                       B x (T+1) x d_embed
    z  = relu(W_sum H[:, 0] + b_sum)                 B x d_proj   (summary)
    H' = W_seq H[:, 1:] + b_seq  (per position)      B x T x d_proj
    g  = softmax((W2 relu(W1 gate_in + b1) + b2)/tau)

The gate input is z, or the same projection applied to the mean-pooled
token slots when input_mode == "mean_pool".  Routing produces per-sample
mixture weights m; only the experts named in each sample's `selected`
set are executed (conditional computation is real, not masked), and the
prediction is the m-weighted sum of their outputs.  Under hard top-1
training the forward weight is a straight-through one-hot:
m = onehot(sample) + (g - stopgradient(g)).
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .encoder import Encoder, EncoderConfig, TokenBatch
from .experts import build_expert
from .losses import total_loss
from .errors import ContractError, DataError, ModeError, NumericError, ParameterError

GATE_POLICIES = ("hard_top1", "top2", "soft")
GATE_INPUT_MODES = ("summary", "mean_pool")


@dataclass
class GateConfig:
    num_experts: int
    tau: float = 1.5
    input_mode: str = "summary"
    policy: str = "hard_top1"
    d_hidden: int = 8

    def __post_init__(self):
        if self.num_experts < 1:
            raise ParameterError("need at least one expert")
        if self.tau <= 0:
            raise ParameterError(f"gate temperature must be positive, got {self.tau}")
        if self.input_mode not in GATE_INPUT_MODES:
            raise ParameterError(f"unknown gate input mode {self.input_mode!r}")
        if self.policy not in GATE_POLICIES:
            raise ParameterError(f"unknown routing policy {self.policy!r}")
        if self.policy == "top2" and self.num_experts < 2:
            raise ParameterError("top2 routing needs at least 2 experts")


@dataclass
class RoutingDecision:
    g: np.ndarray
    selected: tuple
    m: np.ndarray


@dataclass
class ForwardResult:
    predictions: ad.Tensor
    gate_probs: ad.Tensor
    decisions: list
    exec_counts: dict = field(default_factory=dict)


class MoEModel:
    """Encoder + dual projections + gate + expert pool + task head mode."""

    def __init__(self, encoder_cfg: EncoderConfig, gate_cfg: GateConfig, pool,
                 d_proj, d_hid, rng, mode="classification", num_classes=2,
                 tcn_dropout=0.1):
        pool = list(pool)
        if not pool:
            raise ParameterError("expert pool must be nonempty")
        if len(pool) != gate_cfg.num_experts:
            raise ParameterError(
                f"gate expects {gate_cfg.num_experts} experts, pool has {len(pool)}")
        if mode not in ("classification", "regression"):
            raise ParameterError(f"unknown mode {mode!r}")
        if mode == "classification" and num_classes < 2:
            raise ParameterError("classification needs num_classes >= 2")

        self.gate_cfg = gate_cfg
        self.mode = mode
        self.num_classes = num_classes if mode == "classification" else 1
        self.d_proj = d_proj
        self.d_hid = d_hid
        self.pool_kinds = pool

        self.encoder = Encoder(encoder_cfg, rng)
        d_embed = encoder_cfg.d_embed
        bound = 1.0 / np.sqrt(d_embed)
        self.w_summary = ad.parameter(rng.uniform(-bound, bound, (d_embed, d_proj)))
        self.b_summary = ad.parameter(np.zeros(d_proj))
        self.w_seq = ad.parameter(rng.uniform(-bound, bound, (d_embed, d_proj)))
        self.b_seq = ad.parameter(np.zeros(d_proj))

        gb = 1.0 / np.sqrt(d_proj)
        self.gate_w1 = ad.parameter(rng.uniform(-gb, gb, (d_proj, gate_cfg.d_hidden)))
        self.gate_b1 = ad.parameter(np.zeros(gate_cfg.d_hidden))
        hb = 1.0 / np.sqrt(gate_cfg.d_hidden)
        self.gate_w2 = ad.parameter(
            rng.uniform(-hb, hb, (gate_cfg.d_hidden, gate_cfg.num_experts)))
        self.gate_b2 = ad.parameter(np.zeros(gate_cfg.num_experts))

        head_dim = self.num_classes
        self.experts = [build_expert(kind, d_proj, d_hid, head_dim, rng,
                                     tcn_dropout=tcn_dropout)
                        for kind in pool]
        self.exec_counts = {}
        self._registry = self._build_registry()

    # -- parameter registry -------------------------------------------------

    def _build_registry(self):
        reg = {}
        reg.update(self.encoder.parameters())
        reg["proj.w_summary"] = self.w_summary
        reg["proj.b_summary"] = self.b_summary
        reg["proj.w_seq"] = self.w_seq
        reg["proj.b_seq"] = self.b_seq
        reg["gate.w1"] = self.gate_w1
        reg["gate.b1"] = self.gate_b1
        reg["gate.w2"] = self.gate_w2
        reg["gate.b2"] = self.gate_b2
        for i, expert in enumerate(self.experts):
            for name, t in expert.parameters().items():
                key = f"expert{i}.{expert.kind}.{name}"
                if key in reg:
                    raise ContractError(f"duplicate parameter name {key}")
                reg[key] = t
        return reg

    def parameters(self):
        return dict(self._registry)

    def frozen_names(self):
        if self.encoder.frozen:
            return set(self.encoder.parameters())
        return set()

    def zero_grad(self):
        for t in self._registry.values():
            t.zero_grad()

    # -- projections and gate ------------------------------------------------

    def project_summary(self, H):
        b = H.shape[0]
        h0 = ad.reshape(ad.narrow(H, 1, 0, 1), (b, H.shape[2]))
        return ad.relu(ad.add_bias(ad.matmul(h0, self.w_summary), self.b_summary))

    def project_sequence(self, H):
        b, t_plus, d = H.shape
        t = t_plus - 1
        seq = ad.reshape(ad.narrow(H, 1, 1, t), (b * t, d))
        proj = ad.add_bias(ad.matmul(seq, self.w_seq), self.b_seq)
        return ad.reshape(proj, (b, t, self.d_proj))

    def _mean_pool_input(self, H, lengths):
        b, t_plus, d = H.shape
        t = t_plus - 1
        seq = ad.narrow(H, 1, 1, t)
        w = (np.arange(t)[None, :] < lengths[:, None]) / lengths[:, None]
        pooled = ad.sum_axis(ad.scale(seq, w[:, :, None]), axis=1)
        return ad.relu(ad.add_bias(ad.matmul(pooled, self.w_summary), self.b_summary))

    def gate_forward(self, gate_input):
        hidden = ad.relu(ad.add_bias(ad.matmul(gate_input, self.gate_w1), self.gate_b1))
        logits = ad.add_bias(ad.matmul(hidden, self.gate_w2), self.gate_b2)
        return ad.softmax_temperature(logits, self.gate_cfg.tau)

    # -- routing ---------------------------------------------------------------

    def route(self, G, phase, rng=None, forced=None, st_reference=None):
        """Turn gate probabilities into mixture weights and selections.

        Returns (m, decisions): m is a B x K tensor of forward mixture
        weights (on the graph, so straight-through gradients flow), and
        decisions is the per-sample RoutingDecision list.

        `st_reference` replaces the live stopgradient branch of the
        straight-through weight with a fixed snapshot of the gate
        probabilities (m = onehot + g - snapshot).  At the snapshot point
        the forward is unchanged and the gradient is identical; unlike
        the live branch, the surrogate stays differentiable under the
        parameter perturbations of a finite-difference check.
        """
        g = G.data
        b, k = g.shape
        if not np.isfinite(g).all() or np.any(np.abs(g.sum(axis=1) - 1.0) > 1e-6):
            raise NumericError("routing needs finite gate rows summing to 1")
        policy = self.gate_cfg.policy

        if policy == "soft":
            m = G
            selected = [tuple(range(k))] * b
        elif policy == "top2":
            order = np.argsort(-g, axis=1, kind="stable")
            top = np.sort(order[:, :2], axis=1)
            mask = np.zeros_like(g)
            mask[np.arange(b)[:, None], top] = 1.0
            kept = ad.mul(G, ad.constant(mask))
            denom = ad.sum_axis(kept, axis=1, keepdims=True)
            m = ad.mul(kept, ad.pow_const(denom, -1.0))
            selected = [tuple(row) for row in top]
        else:  # hard_top1
            if phase == "train":
                if forced is not None:
                    s = np.asarray(forced, dtype=np.intp)
                else:
                    if rng is None:
                        raise ParameterError("hard_top1 training routing needs an rng")
                    cdf = np.cumsum(g, axis=1)
                    u = rng.random(b)
                    s = np.minimum((u[:, None] > cdf).sum(axis=1), k - 1)
                onehot = np.zeros_like(g)
                onehot[np.arange(b), s] = 1.0
                if st_reference is not None:
                    m = ad.add_const(G, onehot - st_reference)
                else:
                    m = ad.add_const(ad.sub(G, ad.detach(G)), onehot)
            else:
                s = g.argmax(axis=1)
                onehot = np.zeros_like(g)
                onehot[np.arange(b), s] = 1.0
                m = ad.constant(onehot)
            selected = [(int(i),) for i in s]

        m_np = m.data
        decisions = [RoutingDecision(g[i].copy(), selected[i], m_np[i].copy())
                     for i in range(b)]
        return m, decisions

    # -- full forward ------------------------------------------------------------

    def forward(self, batch: TokenBatch, phase="eval", rng=None,
                forced_routes=None, st_reference=None) -> ForwardResult:
        if phase not in ("train", "eval"):
            raise ParameterError(f"unknown phase {phase!r}")
        b = batch.batch_size
        lengths = batch.lengths
        training = phase == "train"

        H = self.encoder.encode(batch)
        z = self.project_summary(H)
        if self.gate_cfg.input_mode == "summary":
            gate_in = z
        else:
            gate_in = self._mean_pool_input(H, lengths)
        G = self.gate_forward(gate_in)
        m, decisions = self.route(G, phase, rng=rng, forced=forced_routes,
                                  st_reference=st_reference)

        preds = None
        seq_proj = None
        self.exec_counts = {}
        for k_idx, expert in enumerate(self.experts):
            idx = [i for i, d in enumerate(decisions) if k_idx in d.selected]
            if not idx:
                continue
            self.exec_counts[k_idx] = len(idx)
            idx = np.asarray(idx, dtype=np.intp)
            if expert.takes_sequence:
                if seq_proj is None:
                    seq_proj = self.project_sequence(H)
                sub = ad.take_rows(seq_proj, idx)
                if expert.kind == "tcn":
                    hidden = expert.hidden(sub, lengths[idx], training=training, rng=rng)
                else:
                    hidden = expert.hidden(sub, lengths[idx])
            else:
                hidden = expert.hidden(ad.take_rows(z, idx))
            if self.mode == "classification":
                out = expert.head(hidden)
            else:
                out = ad.reshape(expert.regression_head(hidden), (len(idx), 1))
            w_col = ad.narrow(ad.take_rows(m, idx), 1, k_idx, 1)
            weighted = ad.mul(out, w_col)
            contrib = ad.scatter_rows(weighted, idx, b)
            preds = contrib if preds is None else ad.add(preds, contrib)

        if self.mode == "regression":
            preds = ad.reshape(preds, (b,))
        return ForwardResult(preds, G, decisions, dict(self.exec_counts))

    def task_loss(self, result: ForwardResult, targets):
        targets = np.asarray(targets)
        if self.mode == "classification":
            if not np.issubdtype(targets.dtype, np.integer):
                raise ModeError("classification model got non-integer targets")
            return ad.cross_entropy(result.predictions, targets)
        if np.issubdtype(targets.dtype, np.integer):
            raise ModeError("regression model got integer targets")
        return ad.mse(result.predictions, targets.astype(np.float64))

    def training_loss(self, batch, targets, weights, rng=None, forced_routes=None,
                      phase="train", st_reference=None):
        """Composite objective for one batch; returns (loss, result)."""
        result = self.forward(batch, phase=phase, rng=rng,
                              forced_routes=forced_routes, st_reference=st_reference)
        task = self.task_loss(result, targets)
        return total_loss(task, result.gate_probs, weights), result

    # -- bookkeeping ----------------------------------------------------------

    def param_checksum(self, names=None):
        h = hashlib.sha256()
        for name in sorted(names if names is not None else self._registry):
            t = self._registry[name]
            h.update(name.encode())
            h.update(str(t.shape).encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def encoder_checksum(self):
        return self.param_checksum(sorted(self.encoder.parameters()))

    def state_arrays(self):
        return {name: t.data.copy() for name, t in self._registry.items()}

    def load_state_arrays(self, arrays):
        for name, t in self._registry.items():
            if name not in arrays:
                raise DataError(f"checkpoint missing parameter {name}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise DataError(f"checkpoint shape mismatch for {name}: "
                                f"{arr.shape} vs {t.shape}")
            t.data = arr.copy()


def fixed_routing_grad_check(model, batch, targets, weights, rng=None,
                             epsilon=1e-5, tol=1e-4):
    """Finite-difference check of the full training objective.

    Draws one routing sample (hard top-1) and holds it fixed, pins the
    straight-through stopgradient branch to its base-point snapshot, and
    disables dropout, so the objective is a smooth deterministic function
    of the parameters.  Returns the GradCheckReport over the whole
    parameter registry.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    base = model.forward(batch, phase="train", rng=rng)
    forced = None
    snapshot = None
    if model.gate_cfg.policy == "hard_top1":
        forced = np.array([d.selected[0] for d in base.decisions])
        snapshot = base.gate_probs.data.copy()

    dropout_saved = [(e, e.dropout) for e in model.experts if e.kind == "tcn"]
    for e, _ in dropout_saved:
        e.dropout = 0.0

    def objective():
        loss, _ = model.training_loss(batch, targets, weights,
                                      forced_routes=forced,
                                      st_reference=snapshot)
        return loss

    try:
        return ad.finite_diff_check(objective, model.parameters(),
                                    epsilon=epsilon, tol=tol)
    finally:
        for e, p in dropout_saved:
            e.dropout = p
