"""Uncertainty-gated graph self-training on a from-scratch two-layer GCN."""

from .baselines import METHOD_IDS, run_base, run_entmin, run_slst, run_st
from .data import (
    Dataset,
    SbmParams,
    Split,
    generate_sbm,
    load_dataset,
    sample_split,
    save_dataset,
)
from .errors import DataFormatError, NumericError, StructureError
from .graph import CsrMatrix, Graph, build_csr, normalize_adjacency, spmm
from .harness import ExperimentConfig, emit_report, run_experiment, select_gamma
from .model import (
    ForwardTrace,
    ModelParams,
    OptimizerState,
    TrainConfig,
    accuracy,
    adam_step,
    backward,
    entropy_loss,
    forward,
    init_params,
    nll_loss,
    soft_loss,
    train_supervised,
)
from .results import ResultsTable, RunResult
from .selftrain import (
    PosteriorTable,
    PseudoLabelSet,
    UgstConfig,
    assign_pseudo_labels,
    e_step,
    m_step,
    run_ugst,
)

__version__ = "0.1.0"
