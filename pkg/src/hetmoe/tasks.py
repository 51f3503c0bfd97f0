"""Synthetic sequence tasks with provable reasoning demands.

The default 32-id vocabulary is partitioned so that what a task requires
is a property of the data, not a hope:

    0           marker "a"
    1           marker "b"
    2  .. 9     static group A
    10 .. 17    static group B
    18 .. 25    temporal fillers
    26 .. 31    spare

* static: label = majority group among A/B tokens.  A function of the
  token multiset only, so any order-blind model can solve it.
* temporal: exactly one a and one b among temporal fillers; label = 1
  iff a precedes b.  The two marker positions are a uniformly random
  ordered pair, so conditioned on any multiset both labels are equally
  likely: order-blind models are capped at chance.
* mixed: a tagged union of the two, on disjoint filler vocabularies, so
  a distribution-level signal for routing survives mean pooling.
* regression: target = 5 * position(a) / (length - 1), in [0, 5].

Datasets are plain lists of Example and round-trip through JSONL.
"""

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DataError, ParameterError, ParseError

VOCAB_SIZE = 32
MARKER_A = 0
MARKER_B = 1
STATIC_GROUP_A = tuple(range(2, 10))
STATIC_GROUP_B = tuple(range(10, 18))
TEMPORAL_FILLERS = tuple(range(18, 26))

DEFAULT_MIN_LEN = 6
DEFAULT_MAX_LEN = 24  # sequence lengths are sampled in [min_len, max_len - 1]


@dataclass
class Example:
    tokens: list
    target: Union[int, float]
    tag: Optional[str] = None


def _sample_length(rng, min_len, max_len):
    if max_len - 1 < min_len:
        raise ParameterError(f"max_len {max_len} too small for min_len {min_len}")
    return int(rng.integers(min_len, max_len))


def gen_static(n, seed, min_len=DEFAULT_MIN_LEN, max_len=DEFAULT_MAX_LEN):
    """Majority-group classification; label is order-invariant by construction."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    groups = np.array(STATIC_GROUP_A + STATIC_GROUP_B)
    n_a = len(STATIC_GROUP_A)
    out = []
    for _ in range(n):
        length = _sample_length(rng, min_len, max_len)
        while True:
            tokens = groups[rng.integers(0, len(groups), length)]
            count_a = int((tokens < STATIC_GROUP_A[0] + n_a).sum())
            if count_a * 2 != length:  # reroll exact ties
                break
        label = 0 if count_a * 2 > length else 1
        out.append(Example(tokens.tolist(), label, None))
    return out


def gen_temporal(n, seed, min_len=DEFAULT_MIN_LEN, max_len=DEFAULT_MAX_LEN):
    """Marker-precedence classification; label = 1 iff a comes before b."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    fillers = np.array(TEMPORAL_FILLERS)
    out = []
    for _ in range(n):
        length = _sample_length(rng, min_len, max_len)
        tokens = fillers[rng.integers(0, len(fillers), length)]
        pos_a, pos_b = rng.choice(length, size=2, replace=False)
        tokens[pos_a] = MARKER_A
        tokens[pos_b] = MARKER_B
        label = 1 if pos_a < pos_b else 0
        out.append(Example(tokens.tolist(), label, None))
    return out


def gen_mixed(n, ratio, seed, min_len=DEFAULT_MIN_LEN, max_len=DEFAULT_MAX_LEN):
    """Tagged union of the static and temporal tasks in proportion `ratio`.

    `ratio` is the static share.  Both subtasks use the shared binary
    label space; tags record which generator produced each example.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must be in (0, 1), got {ratio}")
    n_static = int(round(n * ratio))
    n_temporal = n - n_static
    rng = np.random.default_rng(seed)
    static_seed, temporal_seed = (int(s) for s in rng.integers(0, 2**32, 2))
    static = gen_static(max(n_static, 1), static_seed, min_len, max_len)[:n_static]
    temporal = gen_temporal(max(n_temporal, 1), temporal_seed, min_len, max_len)[:n_temporal]
    for ex in static:
        ex.tag = "static"
    for ex in temporal:
        ex.tag = "temporal"
    merged = static + temporal
    order = rng.permutation(len(merged))
    return [merged[i] for i in order]


def gen_regression(n, seed, min_len=DEFAULT_MIN_LEN, max_len=DEFAULT_MAX_LEN):
    """Scalar target 5 * position(a) / (length - 1): purely order-determined."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    fillers = np.array(TEMPORAL_FILLERS)
    out = []
    for _ in range(n):
        length = _sample_length(rng, min_len, max_len)
        tokens = fillers[rng.integers(0, len(fillers), length)]
        pos_a = int(rng.integers(0, length))
        tokens[pos_a] = MARKER_A
        target = 5.0 * pos_a / (length - 1)
        out.append(Example(tokens.tolist(), target, None))
    return out


# ---------------------------------------------------------------------------
# JSONL persistence


def save_jsonl(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset:
            record = {"tokens": list(ex.tokens), "target": ex.target}
            if ex.tag is not None:
                record["tag"] = ex.tag
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_jsonl(path, vocab_size=VOCAB_SIZE):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict) or "tokens" not in record or "target" not in record:
                raise ParseError(f"{path}:{lineno}: record needs 'tokens' and 'target'")
            tokens = record["tokens"]
            if (not isinstance(tokens, list) or not tokens
                    or any(not isinstance(t, int) or isinstance(t, bool) for t in tokens)):
                raise ParseError(f"{path}:{lineno}: 'tokens' must be a nonempty int list")
            if any(t < 0 or t >= vocab_size for t in tokens):
                raise ParseError(f"{path}:{lineno}: token id out of range [0, {vocab_size})")
            target = record["target"]
            if isinstance(target, bool) or not isinstance(target, (int, float)):
                raise ParseError(f"{path}:{lineno}: 'target' must be a number")
            tag = record.get("tag")
            if tag is not None and tag not in ("static", "temporal"):
                raise ParseError(f"{path}:{lineno}: unknown tag {tag!r}")
            out.append(Example(list(tokens), target, tag))
    return out


def train_eval_split(dataset, eval_fraction, rng):
    """Deterministic shuffled split; eval gets round(n * eval_fraction) items."""
    if not dataset:
        raise DataError("cannot split an empty dataset")
    if not 0.0 < eval_fraction < 1.0:
        raise ParameterError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    order = rng.permutation(len(dataset))
    n_eval = max(1, int(round(len(dataset) * eval_fraction)))
    eval_idx = set(order[:n_eval].tolist())
    train = [dataset[i] for i in range(len(dataset)) if i not in eval_idx]
    heldout = [dataset[i] for i in sorted(eval_idx)]
    if not train:
        raise DataError("split left the training set empty")
    return train, heldout


def num_classes(dataset):
    labels = [ex.target for ex in dataset]
    if any(isinstance(t, float) and not float(t).is_integer() for t in labels):
        raise DataError("dataset has non-integer targets; it is a regression task")
    return int(max(labels)) + 1
