"""Run records and aggregated result tables.

A RunResult captures one (method, seed, gamma) training run; a
ResultsTable aggregates selected runs into the mean/std rows a report is
built from. Tables hold only plain Python values so they serialize to
JSON losslessly and compare with ``==``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .model import ModelParams


@dataclass
class IterationStats:
    """Per-iteration diagnostics of a self-training loop."""

    pseudo_count: int
    pseudo_precision: float | None
    train_loss: float | None
    val_accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "pseudo_count": int(self.pseudo_count),
            "pseudo_precision": _opt_float(self.pseudo_precision),
            "train_loss": _opt_float(self.train_loss),
            "val_accuracy": _opt_float(self.val_accuracy),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationStats":
        return cls(
            pseudo_count=int(d["pseudo_count"]),
            pseudo_precision=d["pseudo_precision"],
            train_loss=d["train_loss"],
            val_accuracy=d["val_accuracy"],
        )


@dataclass
class RunResult:
    """Outcome of a single training run.

    ``final_params`` is kept for equivalence checks and diagnostics but
    never serialized.
    """

    method: str
    seed: int
    gamma: float | None
    val_accuracy: float | None
    test_accuracy: float
    iterations: list[IterationStats] = field(default_factory=list)
    final_params: ModelParams | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for acc in (self.val_accuracy, self.test_accuracy):
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise StructureError(f"accuracy {acc} outside [0, 1]")

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "seed": int(self.seed),
            "gamma": _opt_float(self.gamma),
            "val_accuracy": _opt_float(self.val_accuracy),
            "test_accuracy": float(self.test_accuracy),
            "iterations": [it.to_dict() for it in self.iterations],
        }


def mean_std(values) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; std is 0 for n == 1."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise StructureError("cannot aggregate an empty value list")
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


@dataclass
class MethodSummary:
    """One aggregate row: a method's selected-run statistics."""

    method: str
    selected_gamma: float | None
    mean_test_accuracy: float
    std_test_accuracy: float
    seeds: list[int]
    per_seed_test: list[float]
    per_seed_val: list[float | None]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "selected_gamma": _opt_float(self.selected_gamma),
            "mean_test_accuracy": float(self.mean_test_accuracy),
            "std_test_accuracy": float(self.std_test_accuracy),
            "seeds": [int(s) for s in self.seeds],
            "per_seed_test": [float(x) for x in self.per_seed_test],
            "per_seed_val": [_opt_float(x) for x in self.per_seed_val],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSummary":
        return cls(
            method=d["method"],
            selected_gamma=d["selected_gamma"],
            mean_test_accuracy=d["mean_test_accuracy"],
            std_test_accuracy=d["std_test_accuracy"],
            seeds=list(d["seeds"]),
            per_seed_test=list(d["per_seed_test"]),
            per_seed_val=list(d["per_seed_val"]),
        )


@dataclass
class ResultsTable:
    """Aggregated experiment results plus every underlying run record."""

    dataset: str
    config: dict
    summaries: list[MethodSummary]
    runs: list[dict]
    errors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config,
            "summaries": [s.to_dict() for s in self.summaries],
            "runs": self.runs,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsTable":
        return cls(
            dataset=d["dataset"],
            config=d["config"],
            summaries=[MethodSummary.from_dict(s) for s in d["summaries"]],
            runs=list(d["runs"]),
            errors=list(d.get("errors", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultsTable":
        return cls.from_dict(json.loads(text))


def _opt_float(x) -> float | None:
    return None if x is None else float(x)
