"""Structurally distinct expert networks.

Three expert kinds share one calling convention (produce a hidden vector,
then a linear head) but differ in what they can see:

* FFNNExpert consumes the order-invariant summary projection only.
* GRUExpert consumes the projected token sequence, step by step.
* TCNExpert consumes the projected token sequence through two causal
  dilated convolutions with a residual path.

Heads emit `head_dim` values per sample: the class count in
classification mode, 1 in regression mode (read back out through
`regression_head`).  No parameters are shared between experts.
"""

import numpy as np

from . import autodiff as ad
from .errors import DataError, ModeError, ParameterError

EXPERT_KINDS = ("ffnn", "gru", "tcn")


def _init_weight(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out))


class _ExpertBase:
    takes_sequence = False
    kind = "base"

    def __init__(self, head_dim):
        self.head_dim = head_dim

    def head(self, hidden):
        return ad.add_bias(ad.matmul(hidden, self.w_head), self.b_head)

    def regression_head(self, hidden):
        """Scalar prediction per sample: w . hidden + b."""
        if self.head_dim != 1:
            raise ModeError(f"{self.kind} expert was built for classification "
                            f"(head_dim={self.head_dim}); no scalar head available")
        return ad.reshape(self.head(hidden), (hidden.shape[0],))

    def parameters(self):
        return dict(self._params)


class FFNNExpert(_ExpertBase):
    """hidden = tanh(W1 z + b1); head = W2 hidden + b2."""

    kind = "ffnn"
    takes_sequence = False

    def __init__(self, d_in, d_hid, head_dim, rng):
        super().__init__(head_dim)
        self.w1 = ad.parameter(_init_weight(rng, d_in, d_hid))
        self.b1 = ad.parameter(np.zeros(d_hid))
        self.w_head = ad.parameter(_init_weight(rng, d_hid, head_dim))
        self.b_head = ad.parameter(np.zeros(head_dim))
        self._params = {"w1": self.w1, "b1": self.b1,
                        "w_head": self.w_head, "b_head": self.b_head}

    def hidden(self, z):
        return ad.tanh(ad.add_bias(ad.matmul(z, self.w1), self.b1))

    def forward(self, z):
        h = self.hidden(z)
        return h, self.head(h)


class GRUExpert(_ExpertBase):
    """Single-layer GRU over the projected sequence; hidden = final state.

    Cell convention:
        u = sigmoid(Wu x + Uu h + bu)
        r = sigmoid(Wr x + Ur h + br)
        cand = tanh(Wh x + Uh (r * h) + bh)
        h'   = (1 - u) * h + u * cand
    with h0 = 0 and padded steps skipped via a mask blend.
    """

    kind = "gru"
    takes_sequence = True

    def __init__(self, d_in, d_hid, head_dim, rng):
        super().__init__(head_dim)
        self.d_hid = d_hid
        self._params = {}
        for gate in ("u", "r", "h"):
            self._params[f"w_{gate}"] = ad.parameter(_init_weight(rng, d_in, d_hid))
            self._params[f"u_{gate}"] = ad.parameter(_init_weight(rng, d_hid, d_hid))
            self._params[f"b_{gate}"] = ad.parameter(np.zeros(d_hid))
        self.w_head = ad.parameter(_init_weight(rng, d_hid, head_dim))
        self.b_head = ad.parameter(np.zeros(head_dim))
        self._params["w_head"] = self.w_head
        self._params["b_head"] = self.b_head

    def cell(self, x_t, h_prev):
        p = self._params
        u = ad.sigmoid(ad.add_bias(
            ad.add(ad.matmul(x_t, p["w_u"]), ad.matmul(h_prev, p["u_u"])), p["b_u"]))
        r = ad.sigmoid(ad.add_bias(
            ad.add(ad.matmul(x_t, p["w_r"]), ad.matmul(h_prev, p["u_r"])), p["b_r"]))
        cand = ad.tanh(ad.add_bias(
            ad.add(ad.matmul(x_t, p["w_h"]), ad.matmul(ad.mul(r, h_prev), p["u_h"])),
            p["b_h"]))
        one_minus_u = ad.add_const(ad.scale(u, -1.0), 1.0)
        return ad.add(ad.mul(one_minus_u, h_prev), ad.mul(u, cand))

    def hidden(self, seq, lengths):
        b, t, d_in = seq.shape
        lengths = np.asarray(lengths)
        if lengths.min() < 1:
            raise DataError("GRU expert needs sequences of length >= 1")
        h = ad.constant(np.zeros((b, self.d_hid)))
        for step in range(t):
            x_t = ad.reshape(ad.narrow(seq, 1, step, 1), (b, d_in))
            h_new = self.cell(x_t, h)
            alive = (lengths > step).astype(np.float64)[:, None]
            # keep h where the sequence has already ended
            h = ad.add(h, ad.scale(ad.sub(h_new, h), alive))
        return h

    def forward(self, seq, lengths):
        h = self.hidden(seq, lengths)
        return h, self.head(h)


class _CausalConv:
    """1-D causal convolution: out[t] = sum_j x[t - (k-1-j)*dilation] W_j + b."""

    def __init__(self, c_in, c_out, kernel, dilation, rng, prefix):
        self.kernel = kernel
        self.dilation = dilation
        self.c_in = c_in
        self.c_out = c_out
        self.taps = [ad.parameter(_init_weight(rng, c_in, c_out) / kernel)
                     for _ in range(kernel)]
        self.bias = ad.parameter(np.zeros(c_out))
        self.params = {f"{prefix}.tap{j}": w for j, w in enumerate(self.taps)}
        self.params[f"{prefix}.bias"] = self.bias

    def __call__(self, seq):
        b, t, _ = seq.shape
        acc = None
        for j, w in enumerate(self.taps):
            shift = (self.kernel - 1 - j) * self.dilation
            if shift == 0:
                shifted = seq
            elif shift >= t:
                shifted = ad.constant(np.zeros((b, t, self.c_in)))
            else:
                zeros = ad.constant(np.zeros((b, shift, self.c_in)))
                shifted = ad.concat([zeros, ad.narrow(seq, 1, 0, t - shift)], axis=1)
            flat = ad.reshape(shifted, (b * t, self.c_in))
            term = ad.matmul(flat, w)
            acc = term if acc is None else ad.add(acc, term)
        acc = ad.add_bias(acc, self.bias)
        return ad.reshape(acc, (b, t, self.c_out))


class TCNExpert(_ExpertBase):
    """One residual stage of two causal dilated convolutions (dilations 1, 2,
    kernel 3), ReLU between them, dropout while training, and a 1x1
    projection on the residual path when channel widths differ.  The hidden
    vector is the output at the last true position.
    """

    kind = "tcn"
    takes_sequence = True

    def __init__(self, d_in, d_hid, head_dim, rng, dropout=0.1):
        super().__init__(head_dim)
        self.d_in = d_in
        self.d_hid = d_hid
        self.dropout = dropout
        self.conv1 = _CausalConv(d_in, d_hid, kernel=3, dilation=1, rng=rng, prefix="conv1")
        self.conv2 = _CausalConv(d_hid, d_hid, kernel=3, dilation=2, rng=rng, prefix="conv2")
        self._params = {}
        self._params.update(self.conv1.params)
        self._params.update(self.conv2.params)
        if d_in != d_hid:
            self.w_res = ad.parameter(_init_weight(rng, d_in, d_hid))
            self._params["w_res"] = self.w_res
        else:
            self.w_res = None
        self.w_head = ad.parameter(_init_weight(rng, d_hid, head_dim))
        self.b_head = ad.parameter(np.zeros(head_dim))
        self._params["w_head"] = self.w_head
        self._params["b_head"] = self.b_head

    def sequence_out(self, seq, training=False, rng=None):
        b, t, _ = seq.shape
        y = ad.relu(self.conv1(seq))
        if training and self.dropout > 0.0:
            if rng is None:
                raise DataError("training-mode TCN dropout needs an rng")
            keep = (rng.random(y.shape) >= self.dropout).astype(np.float64)
            y = ad.scale(y, keep / (1.0 - self.dropout))
        y = self.conv2(y)
        if self.w_res is not None:
            flat = ad.reshape(seq, (b * t, self.d_in))
            res = ad.reshape(ad.matmul(flat, self.w_res), (b, t, self.d_hid))
        else:
            res = seq
        return ad.add(y, res)

    def hidden(self, seq, lengths, training=False, rng=None):
        b, t, _ = seq.shape
        lengths = np.asarray(lengths)
        if lengths.min() < 1:
            raise DataError("TCN expert needs sequences of length >= 1")
        out = self.sequence_out(seq, training=training, rng=rng)
        flat = ad.reshape(out, (b * t, self.d_hid))
        last = np.arange(b) * t + (lengths - 1)
        return ad.take_rows(flat, last)

    def forward(self, seq, lengths, training=False, rng=None):
        h = self.hidden(seq, lengths, training=training, rng=rng)
        return h, self.head(h)


def build_expert(kind, d_in, d_hid, head_dim, rng, tcn_dropout=0.1):
    if kind == "ffnn":
        return FFNNExpert(d_in, d_hid, head_dim, rng)
    if kind == "gru":
        return GRUExpert(d_in, d_hid, head_dim, rng)
    if kind == "tcn":
        return TCNExpert(d_in, d_hid, head_dim, rng, dropout=tcn_dropout)
    raise ParameterError(f"unknown expert kind {kind!r}; expected one of {EXPERT_KINDS}")
