"""Heterogeneous graph neural network with meta-path tree attention on a numpy autodiff core."""
__version__ = "0.1.0"

from .config import TrainConfig
from .hetgraph import Dataset, HeteroGraph, Schema, load_dataset, save_dataset
from .metapath import MetaPath, build_forest, build_tree, enumerate_instances
from .model import SHGNN
from .train import fit

__all__ = [
    "Dataset", "HeteroGraph", "MetaPath", "SHGNN", "Schema", "TrainConfig",
    "build_forest", "build_tree", "enumerate_instances", "fit", "load_dataset", "save_dataset",
]
