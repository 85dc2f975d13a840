"""Experiment orchestration: multi-seed sweeps, gamma selection, reports.

A sweep enumerates (method, gamma, seed) runs in a fixed order, executes
them (optionally in parallel, capped by the UGST_WORKERS env var), and
assembles results deterministically regardless of completion order. The
per-seed split and the shared supervised phase are computed once and
reused by every method, so the comparison isolates method logic.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .baselines import METHOD_IDS, run_base, run_entmin, run_slst, run_st
from .data import Dataset, SbmParams, generate_sbm, load_dataset, sample_split
from .errors import NumericError, StructureError
from .model import TrainConfig, train_supervised
from .results import MethodSummary, ResultsTable, RunResult, mean_std
from .seeding import derive_seed
from .selftrain import UgstConfig, run_ugst

log = logging.getLogger(__name__)

DEFAULT_GAMMA_GRID = (0.6, 0.7, 0.8, 0.9)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

DISPLAY_NAMES = {
    "base": "Base GNN",
    "st": "ST",
    "slst": "SLST",
    "entmin": "EntMin",
    "ugst": "UGST",
}

GATED_METHODS = ("st", "ugst")  # methods that select gamma on validation


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a sweep byte for byte."""

    dataset_dir: str | None = None
    sbm: SbmParams | None = None
    sbm_seed: int = 0
    methods: tuple[str, ...] = METHOD_IDS
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    labeled_fraction: float = 0.05
    val_fraction: float = 0.15
    test_fraction: float = 0.30
    train: TrainConfig = field(default_factory=TrainConfig)
    em_steps: int = 3
    m_step_epochs: int = 50
    entmin_weight: float = 0.5
    unlabeled_weight: float = 1.0
    reinit_each_phase: bool = False
    use_soft_pseudo_labels: bool = False
    early_stop_on_val: bool = True

    def __post_init__(self):
        if (self.dataset_dir is None) == (self.sbm is None):
            raise StructureError("exactly one of dataset_dir / sbm must be given")
        if not self.methods or not self.seeds:
            raise StructureError("methods and seeds must be non-empty")
        for m in self.methods:
            if m not in METHOD_IDS:
                raise StructureError(f"unknown method {m!r}; choose from {METHOD_IDS}")
        if any(m in GATED_METHODS for m in self.methods) and not self.gamma_grid:
            raise StructureError("gamma grid must be non-empty for gated methods")

    def to_dict(self) -> dict:
        d = {
            "dataset_dir": self.dataset_dir,
            "sbm": None if self.sbm is None else vars(self.sbm).copy(),
            "sbm_seed": self.sbm_seed,
            "methods": list(self.methods),
            "gamma_grid": [float(g) for g in self.gamma_grid],
            "seeds": [int(s) for s in self.seeds],
            "labeled_fraction": self.labeled_fraction,
            "val_fraction": self.val_fraction,
            "test_fraction": self.test_fraction,
            "train": vars(self.train).copy(),
            "em_steps": self.em_steps,
            "m_step_epochs": self.m_step_epochs,
            "entmin_weight": self.entmin_weight,
            "unlabeled_weight": self.unlabeled_weight,
            "reinit_each_phase": self.reinit_each_phase,
            "use_soft_pseudo_labels": self.use_soft_pseudo_labels,
            "early_stop_on_val": self.early_stop_on_val,
        }
        return d

    def ugst_config(self, gamma: float, seed: int) -> UgstConfig:
        return UgstConfig(
            gamma=gamma,
            em_steps=self.em_steps,
            m_step_epochs=self.m_step_epochs,
            inner_train=replace(self.train, seed=seed),
            unlabeled_weight=self.unlabeled_weight,
            reinit_each_phase=self.reinit_each_phase,
            use_soft_pseudo_labels=self.use_soft_pseudo_labels,
            early_stop_on_val=self.early_stop_on_val,
        )


def select_gamma(val_results: dict[float, list[float]]) -> float:
    """The gamma whose mean validation accuracy is highest; ties break to
    the smallest gamma."""
    if not val_results:
        raise StructureError("select_gamma needs at least one evaluated gamma")
    best = None
    for gamma in sorted(val_results):
        vals = val_results[gamma]
        if not vals:
            continue
        m, _ = mean_std(vals)
        if best is None or m > best[1]:
            best = (gamma, m)
    if best is None:
        raise StructureError("select_gamma: no gamma has any completed run")
    return best[0]


def resolve_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset_dir is not None:
        return load_dataset(config.dataset_dir)
    return generate_sbm(config.sbm, config.sbm_seed)


def worker_count() -> int:
    raw = os.environ.get("UGST_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise StructureError(f"UGST_WORKERS must be an integer, got {raw!r}")


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    """Execute the full sweep and aggregate a results table.

    Deterministic given the config: per-run RNG streams are derived from
    (seed, purpose tag, iteration), jobs are assembled in a fixed
    (method, gamma, seed) order, and failures are recorded rather than
    aborting the sweep.
    """
    dataset = resolve_dataset(config)
    workers = worker_count()

    def make_split(seed: int):
        return sample_split(
            dataset, config.labeled_fraction, config.val_fraction,
            config.test_fraction, derive_seed(seed, "split"),
        )

    splits = {s: make_split(s) for s in config.seeds}

    # shared supervised phase, reused by base/st/slst/ugst for each seed
    def base_for(seed: int):
        return train_supervised(dataset, splits[seed], replace(config.train, seed=seed))

    needs_base = [m for m in config.methods if m != "entmin"]
    base_params = {}
    if needs_base:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for seed, params in zip(config.seeds, pool.map(base_for, config.seeds)):
                base_params[seed] = params

    jobs: list[tuple[str, float | None, int]] = []
    for method in config.methods:
        gammas = config.gamma_grid if method in GATED_METHODS else (None,)
        for gamma in gammas:
            for seed in config.seeds:
                jobs.append((method, gamma, seed))

    def execute(job) -> RunResult:
        method, gamma, seed = job
        split = splits[seed]
        tc = replace(config.train, seed=seed)
        if method == "base":
            return run_base(dataset, split, tc, base_params=base_params[seed])
        if method == "entmin":
            return run_entmin(dataset, split, tc, entropy_weight=config.entmin_weight)
        uc = config.ugst_config(gamma if gamma is not None else config.gamma_grid[0], seed)
        if method == "st":
            return run_st(dataset, split, uc, base_params=base_params[seed])
        if method == "slst":
            return run_slst(dataset, split, uc, base_params=base_params[seed])
        return run_ugst(dataset, split, uc, base_params=base_params[seed])

    outcomes: list[RunResult | Exception] = [None] * len(jobs)

    def safe_execute(idx_job):
        idx, job = idx_job
        try:
            outcomes[idx] = execute(job)
        except (NumericError, StructureError) as exc:
            outcomes[idx] = exc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(safe_execute, enumerate(jobs)))

    runs, errors = [], []
    by_method: dict[str, dict[float | None, list[RunResult]]] = {}
    for (method, gamma, seed), outcome in zip(jobs, outcomes):
        if isinstance(outcome, Exception):
            category = "numeric" if isinstance(outcome, NumericError) else "structure"
            log.warning("run failed (%s, gamma=%s, seed=%s): %s", method, gamma, seed, outcome)
            errors.append({
                "method": method,
                "gamma": None if gamma is None else float(gamma),
                "seed": seed,
                "category": category,
                "message": str(outcome),
            })
            continue
        runs.append(outcome.to_record())
        by_method.setdefault(method, {}).setdefault(gamma, []).append(outcome)

    summaries = []
    for method in config.methods:
        groups = by_method.get(method, {})
        if not groups:
            continue  # every run failed; errors already recorded
        if method in GATED_METHODS:
            val_results = {
                g: [r.val_accuracy for r in rs if r.val_accuracy is not None]
                for g, rs in groups.items()
            }
            selected = select_gamma(val_results)
        else:
            selected = None
        chosen = sorted(groups[selected], key=lambda r: r.seed)
        mean, std = mean_std([r.test_accuracy for r in chosen])
        summaries.append(MethodSummary(
            method=method,
            selected_gamma=selected,
            mean_test_accuracy=mean,
            std_test_accuracy=std,
            seeds=[r.seed for r in chosen],
            per_seed_test=[r.test_accuracy for r in chosen],
            per_seed_val=[r.val_accuracy for r in chosen],
        ))

    return ResultsTable(
        dataset=dataset.name,
        config=config.to_dict(),
        summaries=summaries,
        runs=runs,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def render_markdown(table: ResultsTable) -> str:
    """Accuracy table in the two-column report layout: one row per method,
    cells as "mean ± std" percentages with one decimal."""
    lines = [f"| Method | {table.dataset} |", "| --- | --- |"]
    for s in table.summaries:
        cell = format_cell(s.mean_test_accuracy, s.std_test_accuracy)
        name = DISPLAY_NAMES.get(s.method, s.method)
        if s.selected_gamma is not None:
            name += f" (gamma={s.selected_gamma:g})"
        lines.append(f"| {name} | {cell} |")
    return "\n".join(lines) + "\n"


def format_cell(mean: float, std: float) -> str:
    return f"{100.0 * mean:.1f} ± {100.0 * std:.1f}"


def render_csv(table: ResultsTable) -> str:
    """One row per completed (method, gamma, seed) run plus aggregate rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "record", "method", "gamma", "seed", "selected_gamma",
        "val_accuracy", "test_accuracy", "mean_test_accuracy", "std_test_accuracy",
    ])
    for r in table.runs:
        writer.writerow([
            "run", r["method"], _cell(r["gamma"]), r["seed"], "",
            _cell(r["val_accuracy"]), _cell(r["test_accuracy"]), "", "",
        ])
    for s in table.summaries:
        writer.writerow([
            "aggregate", s.method, "", "", _cell(s.selected_gamma),
            "", "", _cell(s.mean_test_accuracy), _cell(s.std_test_accuracy),
        ])
    return buf.getvalue()


def _cell(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)


def emit_report(table: ResultsTable, fmt: str, path: str | Path) -> None:
    """Write the table as json (lossless), csv, or markdown."""
    if not table.summaries and not table.runs:
        raise StructureError("refusing to emit an empty results table")
    if fmt == "json":
        text = table.to_json()
    elif fmt == "csv":
        text = render_csv(table)
    elif fmt == "markdown":
        text = render_markdown(table)
    else:
        raise StructureError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8", newline="\n")
