"""Bi-bimodal fusion network on a small numpy autodiff engine."""

from .data import DataError, SampleRecord, SyntheticGenSpec, generate, load, make_batches, save
from .harness import TrainConfig, evaluate, run_ablation, train
from .metrics import MetricsReport, evaluate_predictions
from .model import BBFN, ModelConfig
from .tensor import Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "BBFN", "DataError", "MetricsReport", "ModelConfig", "SampleRecord", "SyntheticGenSpec", "Tensor",
    "TrainConfig", "backward", "evaluate", "evaluate_predictions", "generate", "load", "make_batches",
    "run_ablation", "save", "train",
]
