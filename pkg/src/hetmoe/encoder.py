"""Tiny embedding encoder with an order-invariant summary slot.

Produces, for a padded id matrix, a representation H of shape
B x (T+1) x d_embed where position 0 summarizes the sequence as the
mean of its token embeddings (computed from token counts, so it is
bitwise invariant to token order) and positions 1..T carry token
embedding + learned positional embedding, zeroed beyond the true
length.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError, ParameterError


@dataclass
class EncoderConfig:
    vocab_size: int = 32
    d_embed: int = 32
    max_len: int = 24
    frozen: bool = False

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ParameterError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_len < 2:
            raise ParameterError(f"max_len must be >= 2, got {self.max_len}")
        if self.d_embed < 1:
            raise ParameterError(f"d_embed must be >= 1, got {self.d_embed}")


class TokenBatch:
    """Padded batch of id sequences with true lengths."""

    def __init__(self, token_ids, lengths):
        self.token_ids = np.asarray(token_ids, dtype=np.intp)
        self.lengths = np.asarray(lengths, dtype=np.intp)
        if self.token_ids.ndim != 2:
            raise DataError(f"token_ids must be B x T, got shape {self.token_ids.shape}")
        b, t = self.token_ids.shape
        if self.lengths.shape != (b,):
            raise DataError(f"lengths shape {self.lengths.shape} does not match batch {b}")
        if b and (self.lengths.min() < 1 or self.lengths.max() > t):
            raise DataError(f"lengths must lie in [1, {t}]")
        if b and self.token_ids.min() < 0:
            raise DataError("negative token id")

    @property
    def batch_size(self):
        return self.token_ids.shape[0]

    @property
    def seq_len(self):
        return self.token_ids.shape[1]

    @classmethod
    def from_examples(cls, examples):
        lengths = [len(ex.tokens) for ex in examples]
        t = max(lengths)
        ids = np.zeros((len(examples), t), dtype=np.intp)
        for i, ex in enumerate(examples):
            ids[i, : lengths[i]] = ex.tokens
        return cls(ids, lengths)


class Encoder:
    """Learned token + positional embeddings plus the mean summary slot."""

    def __init__(self, cfg: EncoderConfig, rng):
        self.cfg = cfg
        self.frozen = cfg.frozen
        self.token_emb = ad.parameter(
            rng.uniform(-0.1, 0.1, (cfg.vocab_size, cfg.d_embed)))
        self.pos_emb = ad.parameter(
            rng.uniform(-0.1, 0.1, (cfg.max_len, cfg.d_embed)))

    def set_frozen(self, flag):
        self.frozen = bool(flag)

    def parameters(self):
        return {"encoder.token_emb": self.token_emb, "encoder.pos_emb": self.pos_emb}

    def encode(self, batch: TokenBatch) -> ad.Tensor:
        cfg = self.cfg
        ids, lengths = batch.token_ids, batch.lengths
        b, t = ids.shape
        if t > cfg.max_len - 1:
            raise DataError(f"sequence length {t} exceeds max_len-1 = {cfg.max_len - 1}")
        if ids.max() >= cfg.vocab_size:
            raise DataError(f"token id {ids.max()} out of range [0, {cfg.vocab_size})")

        valid = np.arange(t)[None, :] < lengths[:, None]

        # Summary slot: mean token embedding over the true length, computed
        # through a per-row count/length matrix so the float sum order is
        # independent of token order.
        counts = np.zeros((b, cfg.vocab_size))
        rows = np.repeat(np.arange(b), lengths)
        cols = ids[valid]
        np.add.at(counts, (rows, cols), 1.0)
        weights = counts / lengths[:, None]
        summary = ad.matmul(ad.constant(weights), self.token_emb)

        pos_ids = np.broadcast_to(np.arange(t), (b, t))
        tokens = ad.embed(self.token_emb, ids)
        positions = ad.embed(self.pos_emb, pos_ids)
        seq = ad.scale(ad.add(tokens, positions), valid[:, :, None].astype(np.float64))

        summary3 = ad.reshape(summary, (b, 1, cfg.d_embed))
        return ad.concat([summary3, seq], axis=1)
