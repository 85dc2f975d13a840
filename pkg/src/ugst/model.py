"""Two-layer GCN: forward pass, loss family, exact gradients, optimizer.

The network is softmax(A @ relu(A @ X @ W1 + b1) @ W2 + b2) with A the
normalized adjacency and inverted dropout on the hidden activations in
train mode. Gradients are derived by hand for exactly this architecture;
A is symmetric, so backpropagation reuses the same sparse operator.

Training objectives are weighted sums of three term kinds over node
subsets: hard cross-entropy, expected log-likelihood against a posterior
table (soft labels), and prediction entropy. Weight decay on W1/W2 is
added in ``backward`` so the returned gradient is the gradient of the
full objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .errors import NumericError, StructureError
from .graph import CsrMatrix, normalize_adjacency
from .seeding import derive_seed, stream

LOG_FLOOR = 1e-12  # probabilities are clamped here before any log

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_FIELDS = ("w1", "b1", "w2", "b2")


@dataclass
class ModelParams:
    """GCN weights: W1 (d x h), b1 (h), W2 (h x C), b2 (C)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def allclose(self, other: "ModelParams", rtol: float = 0.0, atol: float = 0.0) -> bool:
        return all(
            np.allclose(getattr(self, f), getattr(other, f), rtol=rtol, atol=atol)
            for f in _FIELDS
        )

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality across all four arrays."""
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)


@dataclass
class Gradients:
    """d(objective)/d(params), shaped like :class:`ModelParams`."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    dropout_rate: float = 0.5
    hidden_dim: int = 64
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise StructureError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.learning_rate <= 0:
            raise StructureError("learning_rate must be positive")
        if self.epochs < 0 or self.hidden_dim < 1:
            raise StructureError("epochs must be >= 0 and hidden_dim >= 1")
        if self.weight_decay < 0:
            raise StructureError("weight_decay must be >= 0")


@dataclass
class OptimizerState:
    """Adam first/second-moment accumulators plus the step counter."""

    m: Gradients
    v: Gradients
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        z = lambda a: np.zeros_like(a)
        return cls(
            m=Gradients(z(params.w1), z(params.b1), z(params.w2), z(params.b2)),
            v=Gradients(z(params.w1), z(params.b1), z(params.w2), z(params.b2)),
        )


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one forward evaluation."""

    mode: Literal["train", "eval"]
    pre_act: np.ndarray            # layer-1 pre-activation, n x h
    hidden: np.ndarray             # post-ReLU, before dropout, n x h
    dropout_mask: np.ndarray | None  # entries in {0, 1/(1-rate)}, train mode only
    logits: np.ndarray             # n x C
    probs: np.ndarray              # row-stochastic, n x C


def init_params(d: int, h: int, c: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic given ``seed``."""
    if d < 1 or h < 1 or c < 1:
        raise StructureError(f"all dimensions must be >= 1, got d={d} h={h} c={c}")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (d + h))
    lim2 = np.sqrt(6.0 / (h + c))
    return ModelParams(
        w1=rng.uniform(-lim1, lim1, size=(d, h)),
        b1=np.zeros(h),
        w2=rng.uniform(-lim2, lim2, size=(h, c)),
        b2=np.zeros(c),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    params: ModelParams,
    adj: CsrMatrix,
    features: np.ndarray,
    *,
    mode: Literal["train", "eval"] = "eval",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Full forward pass. Eval mode is deterministic and dropout-free."""
    features = np.asarray(features, dtype=np.float64)
    n = adj.num_rows
    if adj.num_cols != n or features.shape[0] != n:
        raise StructureError("adjacency must be square and match feature rows")
    if features.shape[1] != params.w1.shape[0]:
        raise StructureError(
            f"feature dim {features.shape[1]} != W1 rows {params.w1.shape[0]}"
        )
    z1 = adj.matmul(features @ params.w1) + params.b1
    hidden = np.maximum(z1, 0.0)
    mask = None
    dropped = hidden
    if mode == "train" and dropout_rate > 0.0:
        if rng is None:
            raise StructureError("train-mode forward with dropout needs an rng")
        keep = rng.random(hidden.shape) >= dropout_rate
        mask = keep / (1.0 - dropout_rate)
        dropped = hidden * mask
    logits = adj.matmul(dropped @ params.w2) + params.b2
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in forward pass")
    return ForwardTrace(
        mode=mode,
        pre_act=z1,
        hidden=hidden,
        dropout_mask=mask,
        logits=logits,
        probs=softmax(logits),
    )


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------

def _as_mask(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.shape != (n,):
        raise StructureError(f"mask must be a boolean array of length {n}")
    return mask


def nll_loss(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels over ``mask``."""
    mask = _as_mask(mask, probs.shape[0])
    cnt = int(mask.sum())
    if cnt == 0:
        raise StructureError("nll_loss over an empty mask")
    picked = probs[mask, labels[mask]]
    return float(-np.mean(np.log(np.clip(picked, LOG_FLOOR, None))))


def soft_loss(probs: np.ndarray, posterior, mask: np.ndarray | None = None) -> float:
    """Mean expected negative log-likelihood under a posterior table.

    ``posterior`` needs ``node_ids`` and ``probs`` attributes (rows are
    per-node class distributions). ``mask`` restricts to a subset of the
    posterior's nodes; it must not select nodes the table doesn't cover.
    """
    q_ids, q_rows, cnt = _align_posterior(posterior, mask, probs.shape[0])
    logp = np.log(np.clip(probs[q_ids], LOG_FLOOR, None))
    return float(-np.sum(q_rows * logp) / cnt)


def entropy_loss(probs: np.ndarray, mask: np.ndarray) -> float:
    """Mean Shannon entropy of the prediction rows over ``mask``; in [0, ln C]."""
    mask = _as_mask(mask, probs.shape[0])
    cnt = int(mask.sum())
    if cnt == 0:
        raise StructureError("entropy_loss over an empty mask")
    p = probs[mask]
    return float(-np.sum(p * np.log(np.clip(p, LOG_FLOOR, None))) / cnt)


def _align_posterior(posterior, mask, n):
    """Select posterior rows covered by ``mask``; error if mask escapes them."""
    ids = np.asarray(posterior.node_ids)
    rows = np.asarray(posterior.probs, dtype=np.float64)
    if mask is None:
        return ids, rows, len(ids)
    mask = _as_mask(mask, n)
    cnt = int(mask.sum())
    if cnt == 0:
        raise StructureError("soft loss over an empty mask")
    sel = mask[ids]
    if int(sel.sum()) != cnt:
        raise StructureError("mask selects nodes outside the posterior table")
    return ids[sel], rows[sel], cnt


@dataclass(frozen=True)
class LossTerm:
    """One weighted component of a training objective."""

    kind: Literal["nll", "soft", "entropy"]
    mask: np.ndarray | None
    weight: float = 1.0
    labels: np.ndarray | None = None
    posterior: object | None = None


def hard_term(labels: np.ndarray, mask: np.ndarray, weight: float = 1.0) -> LossTerm:
    return LossTerm(kind="nll", mask=mask, weight=weight, labels=np.asarray(labels))


def soft_term(posterior, mask: np.ndarray | None = None, weight: float = 1.0) -> LossTerm:
    return LossTerm(kind="soft", mask=mask, weight=weight, posterior=posterior)


def entropy_term(mask: np.ndarray, weight: float = 1.0) -> LossTerm:
    return LossTerm(kind="entropy", mask=mask, weight=weight)


def total_loss(probs: np.ndarray, terms: Sequence[LossTerm]) -> float:
    """Weighted sum of the term losses (weight decay excluded)."""
    acc = 0.0
    for t in terms:
        if t.kind == "nll":
            acc += t.weight * nll_loss(probs, t.labels, t.mask)
        elif t.kind == "soft":
            acc += t.weight * soft_loss(probs, t.posterior, t.mask)
        elif t.kind == "entropy":
            acc += t.weight * entropy_loss(probs, t.mask)
        else:
            raise StructureError(f"unknown loss term kind {t.kind!r}")
    return float(acc)


def decay_value(params: ModelParams, weight_decay: float) -> float:
    """The lambda/2 * (||W1||^2 + ||W2||^2) penalty (biases excluded)."""
    if weight_decay == 0.0:
        return 0.0
    return float(0.5 * weight_decay * (np.sum(params.w1 ** 2) + np.sum(params.w2 ** 2)))


def grad_logits(probs: np.ndarray, terms: Sequence[LossTerm]) -> np.ndarray:
    """d(total_loss)/d(logits), row for row."""
    n, c = probs.shape
    g = np.zeros((n, c))
    for t in terms:
        if t.kind == "nll":
            mask = _as_mask(t.mask, n)
            cnt = int(mask.sum())
            if cnt == 0:
                raise StructureError("nll term over an empty mask")
            idx = np.flatnonzero(mask)
            coef = t.weight / cnt
            g[idx] += coef * probs[idx]
            g[idx, t.labels[idx]] -= coef
        elif t.kind == "soft":
            ids, q, cnt = _align_posterior(t.posterior, t.mask, n)
            g[ids] += t.weight * (probs[ids] - q) / cnt
        elif t.kind == "entropy":
            mask = _as_mask(t.mask, n)
            cnt = int(mask.sum())
            if cnt == 0:
                raise StructureError("entropy term over an empty mask")
            idx = np.flatnonzero(mask)
            p = probs[idx]
            logp = np.log(np.clip(p, LOG_FLOOR, None))
            ent = -np.sum(p * logp, axis=1, keepdims=True)
            g[idx] += -t.weight * p * (logp + ent) / cnt
        else:
            raise StructureError(f"unknown loss term kind {t.kind!r}")
    return g


def backward(
    trace: ForwardTrace,
    adj: CsrMatrix,
    features: np.ndarray,
    terms: Sequence[LossTerm],
    params: ModelParams,
    weight_decay: float = 0.0,
) -> Gradients:
    """Exact gradient of total_loss(terms) + weight decay w.r.t. all params."""
    features = np.asarray(features, dtype=np.float64)
    n = adj.num_rows
    if trace.probs.shape[0] != n or features.shape[0] != n:
        raise StructureError("trace/adjacency/features row counts disagree")
    if trace.hidden.shape[1] != params.w2.shape[0] or features.shape[1] != params.w1.shape[0]:
        raise StructureError("trace does not match the given params")

    g2 = grad_logits(trace.probs, terms)
    db2 = g2.sum(axis=0)
    s2 = adj.matmul(g2)
    dropped = trace.hidden if trace.dropout_mask is None else trace.hidden * trace.dropout_mask
    dw2 = dropped.T @ s2
    dh = s2 @ params.w2.T
    if trace.dropout_mask is not None:
        dh = dh * trace.dropout_mask
    dz1 = dh * (trace.pre_act > 0.0)
    db1 = dz1.sum(axis=0)
    dw1 = features.T @ adj.matmul(dz1)
    if weight_decay:
        dw1 = dw1 + weight_decay * params.w1
        dw2 = dw2 + weight_decay * params.w2
    return Gradients(w1=dw1, b1=db1, w2=dw2, b2=db2)


def adam_step(
    params: ModelParams,
    grads: Gradients,
    state: OptimizerState,
    lr: float,
) -> tuple[ModelParams, OptimizerState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for f in _FIELDS:
        g = getattr(grads, f)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {f}")
        m = ADAM_BETA1 * getattr(state.m, f) + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * getattr(state.v, f) + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        new_p[f] = getattr(params, f) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[f] = m
        new_v[f] = v
    return (
        ModelParams(**new_p),
        OptimizerState(m=Gradients(**new_m), v=Gradients(**new_v), step=t),
    )


def fit(
    params: ModelParams,
    adj: CsrMatrix,
    features: np.ndarray,
    terms: Sequence[LossTerm],
    *,
    epochs: int,
    lr: float,
    weight_decay: float,
    dropout_rate: float,
    rng: np.random.Generator,
) -> tuple[ModelParams, list[float]]:
    """Full-batch Adam on the given objective, starting from ``params``.

    Returns the trained params and the per-epoch objective values as seen
    in train mode (recorded before each step).
    """
    state = OptimizerState.zeros_like(params)
    history: list[float] = []
    for _ in range(epochs):
        trace = forward(
            params, adj, features, mode="train", dropout_rate=dropout_rate, rng=rng
        )
        history.append(total_loss(trace.probs, terms) + decay_value(params, weight_decay))
        grads = backward(trace, adj, features, terms, params, weight_decay)
        params, state = adam_step(params, grads, state, lr)
    return params, history


def evaluate_objective(
    params: ModelParams,
    adj: CsrMatrix,
    features: np.ndarray,
    terms: Sequence[LossTerm],
    weight_decay: float = 0.0,
) -> float:
    """Eval-mode objective value (loss terms plus weight decay)."""
    trace = forward(params, adj, features, mode="eval")
    return total_loss(trace.probs, terms) + decay_value(params, weight_decay)


def train_supervised(dataset, split, config: TrainConfig) -> ModelParams:
    """Supervised cross-entropy training on the labeled nodes, from scratch.

    Weight init and dropout use independent streams derived from
    ``config.seed`` (tags "init" and "dropout"/"base"), so every method
    that starts from this phase reproduces it bit for bit.
    """
    labeled = split.labeled
    if not labeled.any():
        raise StructureError("train_supervised needs a non-empty labeled set")
    present = np.unique(dataset.labels)
    covered = np.unique(dataset.labels[labeled])
    if len(covered) < len(present):
        missing = sorted(set(present.tolist()) - set(covered.tolist()))
        warnings.warn(f"labeled set misses classes {missing}", stacklevel=2)
    adj = normalize_adjacency(dataset.graph)
    params = init_params(
        dataset.features.shape[1],
        config.hidden_dim,
        dataset.num_classes,
        derive_seed(config.seed, "init"),
    )
    params, _ = fit(
        params,
        adj,
        dataset.features,
        [hard_term(dataset.labels, labeled)],
        epochs=config.epochs,
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
        dropout_rate=config.dropout_rate,
        rng=stream(config.seed, "dropout", "base"),
    )
    return params


def accuracy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of masked nodes whose argmax class (lowest index on ties)
    equals the label."""
    mask = _as_mask(mask, probs.shape[0])
    if not mask.any():
        raise StructureError("accuracy over an empty mask")
    pred = np.argmax(probs[mask], axis=1)
    return float(np.mean(pred == labels[mask]))
