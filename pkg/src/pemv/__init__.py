"""Prototype-enhanced multi-view classification.

A CNN backbone feeds a global head and K attention-pooled view heads; the
concatenated view features form a mediator that a per-class prototype bank
corrects before fusion and classification. Ships with the joint training
objective, a discrete front-door verification oracle, dataset tooling, and
ablation/sweep experiment harnesses.
"""

from .config import (
    ABLATION_LEVELS,
    DataConfig,
    ExperimentConfig,
    LossConfig,
    ModelConfig,
    TrainConfig,
    load_config,
    with_ablation,
)
from .model import BaselineClassifier, PemvNet, load_checkpoint, predict, save_checkpoint
from .prototypes import PrototypeBank, correct_mediator
from .version import __version__

__all__ = [
    "ABLATION_LEVELS",
    "BaselineClassifier",
    "DataConfig",
    "ExperimentConfig",
    "LossConfig",
    "ModelConfig",
    "PemvNet",
    "PrototypeBank",
    "TrainConfig",
    "__version__",
    "correct_mediator",
    "load_checkpoint",
    "load_config",
    "predict",
    "save_checkpoint",
    "with_ablation",
]
