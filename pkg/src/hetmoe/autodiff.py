"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation builds a new `Tensor` node that records its inputs and a
closure applying the local backward rule.  `backward(loss)` walks the
resulting graph once in reverse topological order and accumulates
gradients into `.grad` (accumulation persists until `zero_grad`).

The operation set is deliberately small: matrix products, row-bias
addition, elementwise arithmetic, the three activations, a
temperature softmax, cross-entropy, mean-squared error, reductions,
reshapes/slices/concat, row gather/scatter, and embedding lookup.
No general broadcasting; the only shape-bending allowed in `mul`,
`scale` and `add_const` is numpy broadcasting that leaves the primary
operand's shape unchanged.
"""

import numpy as np

from .errors import ContractError, DataError, DimensionError, NumericError, ParameterError

LOG_CLAMP = 1e-12


class Tensor:
    """Node in a reverse-mode computation graph.

    Wraps a float64 ndarray (`data`) together with the gradient buffer
    (`grad`, same shape, allocated lazily).  Leaf tensors created with
    `requires_grad=True` act as trainable parameters; interior nodes
    record the primitive that produced them (`op`), references to their
    inputs, and the backward rule.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Light operator sugar; everything routes through the module-level ops.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_const(self, other)

    def __radd__(self, other):
        return add_const(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_const(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data):
    """Leaf tensor that never receives gradient."""
    return Tensor(data, requires_grad=False)


def parameter(data):
    """Leaf tensor registered for gradient accumulation."""
    return Tensor(data, requires_grad=True)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data, parents, op, backward):
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, op=op,
                  parents=tuple(parents) if needs else (),
                  backward=backward if needs else None)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """C = A @ B for 2-D operands; dA = dC @ B^T, dB = A^T @ dC."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(out_data, (a, b), "matmul", bwd)


def add_bias(x, b):
    """Row-wise bias addition: x[i, :] + b. The only broadcast add allowed."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: shapes {x.shape} and {b.shape} do not align")

    def bwd(g):
        if x.requires_grad:
            _accum(x, g)
        if b.requires_grad:
            _accum(b, g.sum(axis=0))

    return _node(x.data + b.data, (x, b), "add_bias", bwd)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return _node(a.data + b.data, (a, b), "add", bwd)


def sub(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    return _node(a.data - b.data, (a, b), "sub", bwd)


def _unbroadcast(g, shape):
    """Sum g down to `shape` (only leading axes / size-1 axes may differ)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def mul(a, b):
    """Elementwise product; operands may differ only by size-1/missing axes."""
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(out_data, (a, b), "mul", bwd)


def scale(x, c):
    """x * c with c a plain scalar or ndarray broadcasting within x's shape."""
    c = np.asarray(c, dtype=np.float64)
    out_data = x.data * c
    if out_data.shape != x.shape:
        raise DimensionError(f"scale: constant of shape {c.shape} would reshape {x.shape}")

    def bwd(g):
        _accum(x, g * c)

    return _node(out_data, (x,), "scale", bwd)


def add_const(x, c):
    """x + c with c a plain scalar or ndarray broadcasting within x's shape."""
    c = np.asarray(c, dtype=np.float64)
    out_data = x.data + c
    if out_data.shape != x.shape:
        raise DimensionError(f"add_const: constant of shape {c.shape} would reshape {x.shape}")

    def bwd(g):
        _accum(x, g)

    return _node(out_data, (x,), "add_const", bwd)


def pow_const(x, p):
    out_data = x.data ** p

    def bwd(g):
        _accum(x, g * p * x.data ** (p - 1))

    return _node(out_data, (x,), "pow_const", bwd)


def log(x):
    def bwd(g):
        _accum(x, g / x.data)

    return _node(np.log(x.data), (x,), "log", bwd)


def clamp_min(x, floor):
    """max(x, floor); gradient passes only where x > floor."""
    mask = x.data > floor

    def bwd(g):
        _accum(x, g * mask)

    return _node(np.maximum(x.data, floor), (x,), "clamp_min", bwd)


def detach(x):
    """Forward identity with the gradient path severed."""
    return Tensor(x.data, requires_grad=False, op="detach")


# ---------------------------------------------------------------------------
# activations


def relu(x):
    mask = x.data > 0

    def bwd(g):
        _accum(x, g * mask)

    return _node(np.maximum(x.data, 0.0), (x,), "relu", bwd)


def tanh(x):
    t = np.tanh(x.data)

    def bwd(g):
        _accum(x, g * (1.0 - t * t))

    return _node(t, (x,), "tanh", bwd)


def sigmoid(x):
    s = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        _accum(x, g * s * (1.0 - s))

    return _node(s, (x,), "sigmoid", bwd)


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x, kind):
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ParameterError(f"unknown activation kind {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# softmax and losses


def softmax_temperature(logits, tau):
    """Row-wise softmax of logits/tau along the last axis, max-subtracted.

    dL/dx = (p * (g - sum(g * p))) / tau per row.
    """
    if tau <= 0:
        raise ParameterError(f"softmax temperature must be positive, got {tau}")
    z = logits.data / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accum(logits, p * (g - inner) / tau)

    return _node(p, (logits,), "softmax_temperature", bwd)


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits_i)[labels_i], LSE-stabilized."""
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects B x C logits, got shape {logits.shape}")
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"cross_entropy: {n} rows vs {labels.shape} labels")
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label out of range [0, {c}): {labels.min()}..{labels.max()}")
    labels = labels.astype(np.intp)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    out_data = -logp[np.arange(n), labels].mean()

    def bwd(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        _accum(logits, grad * (g / n))

    return _node(out_data, (logits,), "cross_entropy", bwd)


def mse(pred, target):
    """Mean squared difference between a prediction vector and targets."""
    target = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise DimensionError(f"mse: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target
    out_data = np.mean(diff * diff)

    def bwd(g):
        _accum(pred, g * 2.0 * diff / diff.size)

    return _node(out_data, (pred,), "mse", bwd)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(x):
    """Sum of all elements, as a 0-d tensor."""

    def bwd(g):
        _accum(x, np.full(x.shape, float(g)))

    return _node(x.data.sum(), (x,), "sum", bwd)


def tmean(x):
    def bwd(g):
        _accum(x, np.full(x.shape, float(g) / x.size))

    return _node(x.data.mean(), (x,), "mean", bwd)


def sum_axis(x, axis, keepdims=False):
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))

    return _node(out_data, (x,), "sum_axis", bwd)


def reshape(x, shape):
    def bwd(g):
        _accum(x, g.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), "reshape", bwd)


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bwd(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[idx] += g

    return _node(x.data[idx], (x,), "narrow", bwd)


def concat(parts, axis):
    sizes = [p.shape[axis] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)

    def bwd(g):
        offset = 0
        for p, n in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + n)
            if p.requires_grad:
                _accum(p, g[tuple(idx)])
            offset += n

    return _node(out_data, tuple(parts), "concat", bwd)


def take_rows(x, idx):
    """Gather rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, idx, g)

    return _node(x.data[idx], (x,), "take_rows", bwd)


def scatter_rows(x, idx, n_rows):
    """Place rows of x at positions idx in a zero tensor of n_rows rows."""
    idx = np.asarray(idx, dtype=np.intp)
    out_data = np.zeros((n_rows,) + x.shape[1:])
    out_data[idx] = x.data

    def bwd(g):
        _accum(x, g[idx])

    return _node(out_data, (x,), "scatter_rows", bwd)


def embed(table, ids):
    """Row lookup table[ids]; backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise DataError(f"embedding id out of range [0, {table.shape[0]})")
    out_data = table.data[ids]

    def bwd(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))

    return _node(out_data, (table,), "embed", bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss):
    """Populate .grad for every reachable requires_grad tensor.

    Leaf gradients accumulate across repeated calls until zeroed;
    interior-node gradients are transient per call.  After the call the
    loss node's own grad is all-ones of its shape.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    for node in topo:
        if node._parents:
            node.grad = None
    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


class GradCheckResult:
    """Per-tensor outcome of a finite-difference comparison."""

    def __init__(self, name, max_error, passed):
        self.name = name
        self.max_error = max_error
        self.passed = passed

    def __repr__(self):
        status = "ok" if self.passed else "FAIL"
        return f"<{self.name}: max_error={self.max_error:.3e} {status}>"


class GradCheckReport:
    def __init__(self, results, tol):
        self.results = results
        self.tol = tol
        self.passed = all(r.passed for r in results.values())
        self.max_error = max((r.max_error for r in results.values()), default=0.0)

    def __repr__(self):
        status = "ok" if self.passed else "FAIL"
        return f"<GradCheckReport max_error={self.max_error:.3e} tol={self.tol:g} {status}>"


def _error_measure(analytic, numeric, tol):
    """Absolute difference, switched to relative where it exceeds tol.

    The standard two-sided rule: a scalar passes when either the absolute
    difference or the difference relative to max(|analytic|, |numeric|)
    is below tol.
    """
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = diff.copy()
    sel = (diff > tol) & (denom > 0)
    err[sel] = diff[sel] / denom[sel]
    return err


def finite_diff_check(f, params, epsilon=1e-5, tol=1e-5):
    """Compare analytic gradients of f() against central differences.

    f is a zero-argument callable returning a fresh scalar loss Tensor
    computed from the current values of `params` (a mapping of name to
    parameter Tensor).  f must be deterministic given fixed randomness.
    Returns a GradCheckReport with the max error per parameter tensor.
    """
    loss = f()
    if loss.data.size != 1:
        raise ContractError("finite_diff_check needs a scalar objective")
    if not np.isfinite(loss.data).all():
        raise NumericError("objective is non-finite at the base point")
    for t in params.values():
        t.zero_grad()
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }

    results = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = float(f().data)
            flat[i] = orig - epsilon
            f_minus = float(f().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite objective while probing {name}[{i}]")
            numeric[i] = (f_plus - f_minus) / (2.0 * epsilon)
        err = _error_measure(analytic[name].reshape(-1), numeric, tol)
        max_err = float(err.max()) if err.size else 0.0
        results[name] = GradCheckResult(name, max_err, max_err < tol)
    return GradCheckReport(results, tol)
