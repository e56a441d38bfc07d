"""Transformer multi-label classifier over protein-word embeddings."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import Batch, ModelConfig, ModelState, backward, forward, predict, predict_proba, sigmoid
from .train import LabeledSet, TrainConfig, TrainLog, cosine_lr, masked_bce_loss, mcc, train

__all__ = [
    "Batch",
    "LabeledSet",
    "ModelConfig",
    "ModelState",
    "TrainConfig",
    "TrainLog",
    "backward",
    "cosine_lr",
    "forward",
    "load_checkpoint",
    "masked_bce_loss",
    "mcc",
    "predict",
    "predict_proba",
    "save_checkpoint",
    "sigmoid",
    "train",
]
