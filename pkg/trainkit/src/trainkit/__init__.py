"""Torch training side of the EDM diffusion toolkit.

Produces EPSW weight files that edmkit loads and verifies; consumes EDMD
datasets that edmkit writes. Everything else (samplers, metrics, masks)
lives in edmkit and is reused, not duplicated.
"""

from .data import export_dataset_splits, load_training_batch, normalization_stats
from .model import TorchUNetSmall, sinusoidal_embedding
from .train import TrainConfig, TrainResult, make_check_vectors, train

__all__ = [
    "TorchUNetSmall",
    "sinusoidal_embedding",
    "load_training_batch",
    "normalization_stats",
    "export_dataset_splits",
    "TrainConfig",
    "TrainResult",
    "train",
    "make_check_vectors",
]
