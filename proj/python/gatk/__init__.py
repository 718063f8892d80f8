"""Gradient-based transfer attacks: sign and rescale updates, depth-first
gradient sampling, input transforms and small MNIST-scale classifiers."""

from ._gatk import (
    Classifier,
    ConfigError,
    DataError,
    GatkError,
    NumericalError,
    attack,
    attack_batch,
    clip_to_budget,
    load_idx,
    rescale_update,
    sign_update,
    success_rate,
    synthetic_blobs,
    train,
)

__all__ = [
    "Classifier",
    "ConfigError",
    "DataError",
    "GatkError",
    "NumericalError",
    "attack",
    "attack_batch",
    "clip_to_budget",
    "load_idx",
    "rescale_update",
    "sign_update",
    "success_rate",
    "synthetic_blobs",
    "train",
]
