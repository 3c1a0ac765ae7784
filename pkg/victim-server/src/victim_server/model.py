"""Inference for checkpointed classifiers served over the wire protocol.

The numeric contract (protocol/PROTOCOL.md section 4): parameters are
upcast from float32 storage to float64, every layer is an affine map,
every layer except the last is followed by ReLU, and the output is a
max-subtracted softmax so each row sums to one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .formats import Checkpoint, read_checkpoint


@dataclass(frozen=True)
class ServedModel:
    """A loaded checkpoint plus the identity string reported to clients."""

    checkpoint: Checkpoint
    model_id: str

    @property
    def input_dim(self) -> int:
        return self.checkpoint.input_dim

    @property
    def class_count(self) -> int:
        return self.checkpoint.class_count

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Map a (n, input_dim) float64 batch to (n, class_count) probabilities."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.input_dim}), got {h.shape}"
            )
        ckpt = self.checkpoint
        last = len(ckpt.weights) - 1
        for i, (w, b) in enumerate(zip(ckpt.weights, ckpt.biases)):
            h = h @ w + b
            if i != last:
                h = np.maximum(h, 0.0)
        h = h - h.max(axis=1, keepdims=True)
        e = np.exp(h)
        return e / e.sum(axis=1, keepdims=True)


def load_model(path) -> ServedModel:
    """Read a checkpoint and derive its model_id from the file bytes."""
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return ServedModel(checkpoint=read_checkpoint(path), model_id=digest[:12])
