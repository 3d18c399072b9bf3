"""Decoupled-propagation node classification with PPR and sparse-correlation matrices."""

from .datasets import Dataset, Split, extract_lcc, load_dataset, load_dataset_dir, make_split
from .evaluation import accuracy, aggregate, macro_f1
from .graph import Graph, add_self_loops, normalize_symmetric, normalized_adjacency
from .nn import MlpParams, TrainConfig
from .pipelines import Model, ModelKind, TrainResult, predict, train
from .propagation import PprMatrix, SigmaMatrix, build_sigma, ppr_direct, ppr_power_step, sparse_correlation

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Split", "extract_lcc", "load_dataset", "load_dataset_dir", "make_split",
    "accuracy", "aggregate", "macro_f1",
    "Graph", "add_self_loops", "normalize_symmetric", "normalized_adjacency",
    "MlpParams", "TrainConfig",
    "Model", "ModelKind", "TrainResult", "predict", "train",
    "PprMatrix", "SigmaMatrix", "build_sigma", "ppr_direct", "ppr_power_step", "sparse_correlation",
]
