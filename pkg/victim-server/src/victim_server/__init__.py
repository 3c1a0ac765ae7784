"""Inference service exposing checkpointed classifiers over HTTP."""

from .app import create_app
from .formats import Checkpoint, Dataset, FormatError, read_checkpoint, read_dataset, write_dataset
from .model import ServedModel, load_model

__all__ = [
    "Checkpoint",
    "Dataset",
    "FormatError",
    "ServedModel",
    "create_app",
    "load_model",
    "read_checkpoint",
    "read_dataset",
    "write_dataset",
]
