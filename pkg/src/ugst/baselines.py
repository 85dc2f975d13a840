"""Comparison methods sharing the same engine as the EM loop.

All methods consume identical (dataset, split, seed) and reuse the same
forward/backward/optimizer code and the same derived RNG streams for the
shared supervised phase, so any accuracy difference is attributable to
the method logic alone. Degenerate configs collapse exactly: T=0 variants
and entropy weight 0 reproduce the base run bit for bit.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from .errors import StructureError
from .graph import normalize_adjacency
from .model import (
    ModelParams,
    TrainConfig,
    accuracy,
    entropy_term,
    fit,
    forward,
    hard_term,
    init_params,
    train_supervised,
)
from .results import IterationStats, RunResult
from .seeding import derive_seed, stream
from .selftrain import UgstConfig, _m_step_traced, assign_pseudo_labels, e_step, run_ugst

MethodId = Literal["base", "st", "slst", "entmin", "ugst"]
METHOD_IDS: tuple[MethodId, ...] = ("base", "st", "slst", "entmin", "ugst")


def run_base(
    dataset,
    split,
    config: TrainConfig,
    *,
    base_params: ModelParams | None = None,
) -> RunResult:
    """Supervised training on the labeled set only."""
    params = base_params.copy() if base_params is not None else train_supervised(dataset, split, config)
    adj = normalize_adjacency(dataset.graph)
    trace = forward(params, adj, dataset.features, mode="eval")
    return RunResult(
        method="base",
        seed=config.seed,
        gamma=None,
        val_accuracy=accuracy(trace.probs, dataset.labels, split.val) if split.val.any() else None,
        test_accuracy=accuracy(trace.probs, dataset.labels, split.test),
        iterations=[],
        final_params=params,
    )


def run_st(
    dataset,
    split,
    config: UgstConfig,
    *,
    base_params: ModelParams | None = None,
) -> RunResult:
    """Threshold self-training: accept argmax pseudo-labels above gamma and
    retrain, T rounds, no posterior refinement. The accepted set is
    re-derived from fresh predictions every round."""
    tc = config.inner_train
    seed = tc.seed
    adj = normalize_adjacency(dataset.graph)
    params = base_params.copy() if base_params is not None else train_supervised(dataset, split, tc)
    iterations: list[IterationStats] = []

    for t in range(1, config.em_steps + 1):
        posterior = e_step(params, adj, dataset.features, split.unlabeled)
        pseudo = assign_pseudo_labels(posterior, config.gamma)
        aug_labels = dataset.labels.copy()
        aug_mask = split.labeled.copy()
        if len(pseudo):
            aug_labels[pseudo.node_ids] = pseudo.classes
            aug_mask[pseudo.node_ids] = True
        params, hist = fit(
            params, adj, dataset.features, [hard_term(aug_labels, aug_mask)],
            epochs=tc.epochs, lr=tc.learning_rate, weight_decay=tc.weight_decay,
            dropout_rate=tc.dropout_rate, rng=stream(seed, "dropout", "st", t),
        )
        iterations.append(IterationStats(
            pseudo_count=len(pseudo),
            pseudo_precision=(
                float(np.mean(pseudo.classes == dataset.labels[pseudo.node_ids]))
                if len(pseudo) else None
            ),
            train_loss=hist[-1] if hist else None,
            val_accuracy=_val_acc(params, adj, dataset, split),
        ))

    trace = forward(params, adj, dataset.features, mode="eval")
    return RunResult(
        method="st",
        seed=seed,
        gamma=config.gamma,
        val_accuracy=accuracy(trace.probs, dataset.labels, split.val) if split.val.any() else None,
        test_accuracy=accuracy(trace.probs, dataset.labels, split.test),
        iterations=iterations,
        final_params=params,
    )


def run_slst(
    dataset,
    split,
    config: UgstConfig,
    *,
    base_params: ModelParams | None = None,
) -> RunResult:
    """Soft-label self-training: every unlabeled node trains on its own
    predicted distribution each round; no confidence gate."""
    tc = config.inner_train
    seed = tc.seed
    adj = normalize_adjacency(dataset.graph)
    params = base_params.copy() if base_params is not None else train_supervised(dataset, split, tc)
    iterations: list[IterationStats] = []

    for t in range(1, config.em_steps + 1):
        posterior = e_step(params, adj, dataset.features, split.unlabeled)
        params, hist = _m_step_traced(
            params, posterior, dataset, split, config,
            adj=adj, rng=stream(seed, "dropout", "slst", t),
        )
        iterations.append(IterationStats(
            pseudo_count=0,
            pseudo_precision=None,
            train_loss=hist[-1] if hist else None,
            val_accuracy=_val_acc(params, adj, dataset, split),
        ))

    trace = forward(params, adj, dataset.features, mode="eval")
    return RunResult(
        method="slst",
        seed=seed,
        gamma=None,
        val_accuracy=accuracy(trace.probs, dataset.labels, split.val) if split.val.any() else None,
        test_accuracy=accuracy(trace.probs, dataset.labels, split.test),
        iterations=iterations,
        final_params=params,
    )


def run_entmin(
    dataset,
    split,
    config: TrainConfig,
    entropy_weight: float = 0.5,
) -> RunResult:
    """Single-phase training on labeled cross-entropy plus weighted
    prediction entropy over the unlabeled nodes."""
    if entropy_weight < 0:
        raise StructureError("entropy_weight must be >= 0")
    if not split.labeled.any():
        raise StructureError("run_entmin needs a non-empty labeled set")
    adj = normalize_adjacency(dataset.graph)
    params = init_params(
        dataset.features.shape[1], config.hidden_dim, dataset.num_classes,
        derive_seed(config.seed, "init"),
    )
    terms = [hard_term(dataset.labels, split.labeled)]
    # weight 0 must reproduce the base run bit for bit, so skip the term
    if entropy_weight != 0.0 and split.unlabeled.any():
        terms.append(entropy_term(split.unlabeled, weight=entropy_weight))
    params, _ = fit(
        params, adj, dataset.features, terms,
        epochs=config.epochs, lr=config.learning_rate,
        weight_decay=config.weight_decay, dropout_rate=config.dropout_rate,
        rng=stream(config.seed, "dropout", "base"),
    )
    trace = forward(params, adj, dataset.features, mode="eval")
    return RunResult(
        method="entmin",
        seed=config.seed,
        gamma=None,
        val_accuracy=accuracy(trace.probs, dataset.labels, split.val) if split.val.any() else None,
        test_accuracy=accuracy(trace.probs, dataset.labels, split.test),
        iterations=[],
        final_params=params,
    )


def _val_acc(params, adj, dataset, split) -> float | None:
    if not split.val.any():
        return None
    trace = forward(params, adj, dataset.features, mode="eval")
    return accuracy(trace.probs, dataset.labels, split.val)


__all__ = [
    "MethodId",
    "METHOD_IDS",
    "run_base",
    "run_st",
    "run_slst",
    "run_entmin",
    "run_ugst",
]
