"""Command-line interface: gen-sbm, run, report.

Exit code 0 on success; on failure a single diagnostic line
``error[<category>]: <message>`` goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .data import SbmParams, generate_sbm, save_dataset
from .errors import DataFormatError, NumericError, StructureError
from .harness import (
    DEFAULT_GAMMA_GRID,
    DEFAULT_SEEDS,
    ExperimentConfig,
    emit_report,
    run_experiment,
)
from .model import TrainConfig
from .results import ResultsTable


def _add_sbm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--block-size", type=int, default=100)
    p.add_argument("--p-in", type=float, default=0.10)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=3)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="generator seed for the graph itself")


def _sbm_params(args) -> SbmParams:
    return SbmParams(
        num_blocks=args.blocks,
        nodes_per_block=args.block_size,
        p_in=args.p_in,
        p_out=args.p_out,
        feature_dim=args.feature_dim,
        signal_strength=args.signal,
        noise_std=args.noise,
    )


def _csv_list(conv):
    def parse(text: str):
        return tuple(conv(tok) for tok in text.split(",") if tok)
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ugst",
        description="Uncertainty-gated graph self-training experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-sbm", help="generate a block-model dataset directory")
    _add_sbm_flags(gen)
    gen.add_argument("--out", required=True, help="output dataset directory")

    run = sub.add_parser("run", help="run a multi-seed experiment sweep")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="portable dataset directory")
    src.add_argument("--sbm", action="store_true", help="generate a block-model dataset in memory")
    _add_sbm_flags(run)
    run.add_argument("--methods", type=_csv_list(str), default=("base", "st", "slst", "entmin", "ugst"))
    run.add_argument("--gamma-grid", type=_csv_list(float), default=DEFAULT_GAMMA_GRID)
    run.add_argument("--em-steps", type=int, default=3)
    run.add_argument("--seeds", type=_csv_list(int), default=DEFAULT_SEEDS)
    run.add_argument("--labeled-frac", type=float, default=0.05)
    run.add_argument("--val-frac", type=float, default=0.15)
    run.add_argument("--test-frac", type=float, default=0.30)
    run.add_argument("--lr", type=float, default=0.01)
    run.add_argument("--epochs", type=int, default=200)
    run.add_argument("--m-step-epochs", type=int, default=50)
    run.add_argument("--dropout", type=float, default=0.5)
    run.add_argument("--hidden", type=int, default=64)
    run.add_argument("--weight-decay", type=float, default=5e-4)
    run.add_argument("--entmin-weight", type=float, default=0.5)
    run.add_argument("--out", required=True, help="path for the lossless results.json")

    rep = sub.add_parser("report", help="render a results.json as markdown or csv")
    rep.add_argument("--in", dest="infile", required=True)
    rep.add_argument("--format", choices=("markdown", "csv"), required=True)
    rep.add_argument("--out", required=True)
    return parser


def cmd_gen_sbm(args) -> None:
    dataset = generate_sbm(_sbm_params(args), args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {dataset.name}: {dataset.num_nodes} nodes, "
          f"{dataset.graph.num_edges} edges -> {args.out}")


def cmd_run(args) -> None:
    config = ExperimentConfig(
        dataset_dir=args.dataset,
        sbm=_sbm_params(args) if args.sbm else None,
        sbm_seed=args.seed,
        methods=args.methods,
        gamma_grid=args.gamma_grid,
        seeds=args.seeds,
        labeled_fraction=args.labeled_frac,
        val_fraction=args.val_frac,
        test_fraction=args.test_frac,
        train=TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            dropout_rate=args.dropout,
            hidden_dim=args.hidden,
            weight_decay=args.weight_decay,
        ),
        em_steps=args.em_steps,
        m_step_epochs=args.m_step_epochs,
        entmin_weight=args.entmin_weight,
    )
    table = run_experiment(config)
    emit_report(table, "json", args.out)
    for s in table.summaries:
        print(f"{s.method:8s} mean test acc {s.mean_test_accuracy:.4f} "
              f"± {s.std_test_accuracy:.4f}"
              + (f" (gamma={s.selected_gamma:g})" if s.selected_gamma is not None else ""))
    if table.errors:
        print(f"{len(table.errors)} run(s) failed; see {args.out}", file=sys.stderr)


def cmd_report(args) -> None:
    with open(args.infile, encoding="utf-8") as fh:
        table = ResultsTable.from_json(fh.read())
    emit_report(table, args.format, args.out)
    print(f"wrote {args.format} report -> {args.out}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-sbm":
            cmd_gen_sbm(args)
        elif args.command == "run":
            cmd_run(args)
        else:
            cmd_report(args)
    except DataFormatError as exc:
        print(f"error[data-format]: {exc}", file=sys.stderr)
        return 1
    except StructureError as exc:
        print(f"error[structure]: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
