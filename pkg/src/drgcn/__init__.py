"""Deep GCN training library with dynamic evolving initial residual weights."""

from .autodiff import (AdamState, NonFiniteError, Rng, ShapeError, Tape,
                       Tensor, derive_seed)
from .data import (Dataset, DataError, SplitSpec, gen_synthetic, make_split,
                   read_container, write_container)
from .estimator import DRGCNNodeClassifier
from .graph import Graph, SparseAdj, build_normalized, smoothness_mad, spmm
from .model import (ModelConfig, ModelParams, forward, forward_baseline,
                    init_params)
from .params_io import load_params, save_params
from .training import (AlphaTrace, DivergenceError, TrainConfig, TrainHistory,
                       evaluate, sample_block, train_full_batch,
                       train_mini_batch)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AlphaTrace", "Dataset", "DataError", "DivergenceError",
    "DRGCNNodeClassifier", "Graph", "ModelConfig", "ModelParams",
    "NonFiniteError", "Rng", "ShapeError", "SparseAdj", "SplitSpec", "Tape",
    "Tensor", "TrainConfig", "TrainHistory", "build_normalized", "derive_seed",
    "evaluate", "forward", "forward_baseline", "gen_synthetic", "init_params",
    "load_params", "make_split", "read_container", "sample_block",
    "save_params", "smoothness_mad", "spmm", "train_full_batch",
    "train_mini_batch", "write_container",
]
