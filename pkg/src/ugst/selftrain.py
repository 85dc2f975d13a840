"""Uncertainty-gated EM self-training.

The loop: read out posteriors for the unlabeled nodes (E-step), fine-tune
on labeled cross-entropy plus posterior-weighted expected log-likelihood
(M-step), accept pseudo-labels whose confidence strictly exceeds gamma,
retrain on the augmented labeled set, repeat. Pseudo-labels are recomputed
from scratch each iteration; they never accumulate, which bounds how long
a wrong label can keep influencing training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StructureError
from .graph import CsrMatrix, normalize_adjacency
from .model import (
    ModelParams,
    TrainConfig,
    accuracy,
    fit,
    forward,
    hard_term,
    init_params,
    soft_term,
    train_supervised,
)
from .results import IterationStats, RunResult
from .seeding import derive_seed, stream

POSTERIOR_ROW_TOL = 1e-6


@dataclass(frozen=True)
class PosteriorTable:
    """Per-node class distributions for a subset of nodes."""

    node_ids: np.ndarray   # unique node ids
    probs: np.ndarray      # len(node_ids) x C rows, each summing to 1

    def __post_init__(self):
        ids = np.asarray(self.node_ids, dtype=np.int64)
        rows = np.asarray(self.probs, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(ids):
            raise StructureError("posterior rows must align with node ids")
        if len(np.unique(ids)) != len(ids):
            raise StructureError("posterior node ids must be unique")
        if rows.size:
            if rows.min() < 0:
                raise StructureError("posterior entries must be non-negative")
            sums = rows.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > POSTERIOR_ROW_TOL:
                raise StructureError("posterior rows must sum to 1 within 1e-6")
        ids.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "probs", rows)

    def restrict(self, keep: np.ndarray) -> "PosteriorTable":
        """Sub-table for the given subset of this table's node ids."""
        pos = {int(v): i for i, v in enumerate(self.node_ids)}
        try:
            rows = [pos[int(v)] for v in keep]
        except KeyError as exc:
            raise StructureError(f"node {exc} not in posterior table") from exc
        return PosteriorTable(np.asarray(keep, dtype=np.int64), self.probs[rows])


@dataclass(frozen=True)
class PseudoLabelSet:
    """Accepted pseudo-labels: node, argmax class, and its confidence."""

    node_ids: np.ndarray
    classes: np.ndarray
    confidences: np.ndarray
    gamma: float

    def __post_init__(self):
        ids = np.asarray(self.node_ids, dtype=np.int64)
        cls = np.asarray(self.classes, dtype=np.int64)
        conf = np.asarray(self.confidences, dtype=np.float64)
        if not (len(ids) == len(cls) == len(conf)):
            raise StructureError("pseudo-label fields must have equal length")
        if len(np.unique(ids)) != len(ids):
            raise StructureError("pseudo-label node ids must be unique")
        if conf.size and conf.min() <= self.gamma:
            raise StructureError("every pseudo-label confidence must exceed gamma")
        for a in (ids, cls, conf):
            a.setflags(write=False)
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "classes", cls)
        object.__setattr__(self, "confidences", conf)

    def __len__(self) -> int:
        return len(self.node_ids)


@dataclass
class UgstConfig:
    """Knobs of the EM self-training loop."""

    gamma: float = 0.9
    em_steps: int = 3              # T
    m_step_epochs: int = 50
    inner_train: TrainConfig = field(default_factory=TrainConfig)
    unlabeled_weight: float = 1.0  # weight of the soft term in the M-step
    reinit_each_phase: bool = False  # reinitialize instead of fine-tuning
    use_soft_pseudo_labels: bool = False  # retrain on Q rows instead of argmax
    early_stop_on_val: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise StructureError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.em_steps < 0 or self.m_step_epochs < 0:
            raise StructureError("em_steps and m_step_epochs must be >= 0")
        if self.unlabeled_weight < 0:
            raise StructureError("unlabeled_weight must be >= 0")


def e_step(
    params: ModelParams,
    adj: CsrMatrix,
    features: np.ndarray,
    unlabeled: np.ndarray,
) -> PosteriorTable:
    """Posterior read-out: eval-mode predictions on the unlabeled nodes."""
    unlabeled = np.asarray(unlabeled)
    if unlabeled.dtype != bool:
        raise StructureError("unlabeled must be a boolean mask")
    ids = np.flatnonzero(unlabeled)
    if len(ids) == 0:
        raise StructureError("e_step over an empty unlabeled set")
    trace = forward(params, adj, features, mode="eval")
    return PosteriorTable(node_ids=ids, probs=trace.probs[ids])


def m_step(
    params: ModelParams,
    posterior: PosteriorTable,
    dataset,
    split,
    config: UgstConfig,
    *,
    adj: CsrMatrix | None = None,
    rng: np.random.Generator | None = None,
) -> ModelParams:
    """Fine-tune on labeled cross-entropy plus the posterior-weighted soft
    loss over the unlabeled nodes."""
    p, _ = _m_step_traced(params, posterior, dataset, split, config, adj=adj, rng=rng)
    return p


def _m_step_traced(
    params: ModelParams,
    posterior: PosteriorTable,
    dataset,
    split,
    config: UgstConfig,
    *,
    adj: CsrMatrix | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ModelParams, list[float]]:
    expected = np.flatnonzero(split.unlabeled)
    if not np.array_equal(np.sort(posterior.node_ids), expected):
        raise StructureError("posterior must cover exactly the split's unlabeled set")
    if adj is None:
        adj = normalize_adjacency(dataset.graph)
    if rng is None:
        rng = stream(config.inner_train.seed, "dropout", "m")
    if config.reinit_each_phase:
        params = _fresh_params(dataset, config.inner_train)
    terms = [
        hard_term(dataset.labels, split.labeled),
        soft_term(posterior, weight=config.unlabeled_weight),
    ]
    tc = config.inner_train
    return fit(
        params, adj, dataset.features, terms,
        epochs=config.m_step_epochs, lr=tc.learning_rate,
        weight_decay=tc.weight_decay, dropout_rate=tc.dropout_rate, rng=rng,
    )


def assign_pseudo_labels(posterior: PosteriorTable, gamma: float) -> PseudoLabelSet:
    """Accept argmax labels for rows whose max probability strictly exceeds
    gamma; ties in the argmax go to the lowest class index."""
    if not 0.0 < gamma <= 1.0:
        raise StructureError(f"gamma must be in (0, 1], got {gamma}")
    conf = posterior.probs.max(axis=1) if posterior.probs.size else np.empty(0)
    keep = conf > gamma
    return PseudoLabelSet(
        node_ids=posterior.node_ids[keep],
        classes=np.argmax(posterior.probs[keep], axis=1) if keep.any() else np.empty(0, dtype=np.int64),
        confidences=conf[keep],
        gamma=gamma,
    )


def run_ugst(
    dataset,
    split,
    config: UgstConfig,
    *,
    base_params: ModelParams | None = None,
) -> RunResult:
    """The full loop: base training, then T iterations of
    {E-step, M-step, pseudo-label, augment, retrain}.

    ``base_params`` may carry a precomputed result of the shared
    supervised phase (it must equal train_supervised on the same inputs).
    With em_steps=0 the result is bit-identical to the base run.
    """
    tc = config.inner_train
    seed = tc.seed
    adj = normalize_adjacency(dataset.graph)
    params = base_params.copy() if base_params is not None else train_supervised(dataset, split, tc)

    has_val = bool(split.val.any())
    best_val = _accuracy_or_none(params, adj, dataset, split.val)
    iterations: list[IterationStats] = []

    for t in range(1, config.em_steps + 1):
        posterior = e_step(params, adj, dataset.features, split.unlabeled)
        params = m_step(
            params, posterior, dataset, split, config,
            adj=adj, rng=stream(seed, "dropout", "m", t),
        )
        pseudo = assign_pseudo_labels(posterior, config.gamma)
        params, hist = _retrain_on_augmented(
            params, dataset, split, pseudo, posterior, config,
            adj=adj, rng=stream(seed, "dropout", "retrain", t),
        )
        val_acc = _accuracy_or_none(params, adj, dataset, split.val)
        iterations.append(IterationStats(
            pseudo_count=len(pseudo),
            pseudo_precision=_precision(pseudo, dataset.labels),
            train_loss=hist[-1] if hist else None,
            val_accuracy=val_acc,
        ))
        if config.early_stop_on_val and has_val:
            if val_acc <= best_val:
                break
            best_val = val_acc

    trace = forward(params, adj, dataset.features, mode="eval")
    return RunResult(
        method="ugst",
        seed=seed,
        gamma=config.gamma,
        val_accuracy=_accuracy_or_none(params, adj, dataset, split.val, trace=trace),
        test_accuracy=accuracy(trace.probs, dataset.labels, split.test),
        iterations=iterations,
        final_params=params,
    )


def _retrain_on_augmented(
    params, dataset, split, pseudo: PseudoLabelSet, posterior: PosteriorTable,
    config: UgstConfig, *, adj, rng,
) -> tuple[ModelParams, list[float]]:
    """Step 2.5: hard-label training on V_L plus the accepted pseudo-labels
    (or their soft rows when configured)."""
    if split.labeled[pseudo.node_ids].any():
        raise StructureError("pseudo-labels overlap the labeled set")
    tc = config.inner_train
    if config.reinit_each_phase:
        params = _fresh_params(dataset, tc)
    if config.use_soft_pseudo_labels and len(pseudo):
        terms = [
            hard_term(dataset.labels, split.labeled),
            soft_term(posterior.restrict(pseudo.node_ids)),
        ]
    else:
        aug_labels = dataset.labels.copy()
        aug_mask = split.labeled.copy()
        if len(pseudo):
            aug_labels[pseudo.node_ids] = pseudo.classes
            aug_mask[pseudo.node_ids] = True
        terms = [hard_term(aug_labels, aug_mask)]
    return fit(
        params, adj, dataset.features, terms,
        epochs=tc.epochs, lr=tc.learning_rate,
        weight_decay=tc.weight_decay, dropout_rate=tc.dropout_rate, rng=rng,
    )


def _fresh_params(dataset, tc: TrainConfig) -> ModelParams:
    return init_params(
        dataset.features.shape[1], tc.hidden_dim, dataset.num_classes,
        derive_seed(tc.seed, "init"),
    )


def _precision(pseudo: PseudoLabelSet, true_labels: np.ndarray) -> float | None:
    """Fraction of accepted pseudo-labels matching held ground truth.

    Diagnostic only; never fed back into training."""
    if len(pseudo) == 0:
        return None
    return float(np.mean(pseudo.classes == true_labels[pseudo.node_ids]))


def _accuracy_or_none(params, adj, dataset, mask, trace=None) -> float | None:
    if not mask.any():
        return None
    if trace is None:
        trace = forward(params, adj, dataset.features, mode="eval")
    return accuracy(trace.probs, dataset.labels, mask)
