"""Readers and writers for the shared binary formats.

Implements the dataset (.bamd) and checkpoint (.bamm) layouts exactly
as documented in protocol/PROTOCOL.md. This module is deliberately
independent of the extraction toolkit: the files on disk are the
interface.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"BAMD"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"BAMM"
CHECKPOINT_VERSION = 1

_DATASET_HEADER = struct.Struct("<4sIIII")
_CHECKPOINT_HEADER = struct.Struct("<4sI")


class FormatError(ValueError):
    """A file does not follow the documented binary layout."""


@dataclass(frozen=True)
class Dataset:
    """One labeled dataset: float32 features and probabilities per row."""

    features: np.ndarray
    probs: np.ndarray
    generations: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


def _record_dtype(d: int, c: int) -> np.dtype:
    return np.dtype([("x", "<f4", (d,)), ("p", "<f4", (c,)), ("g", "<u4")])


def read_dataset(path) -> Dataset:
    """Load a .bamd file, validating magic, version, and payload size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DATASET_HEADER.size:
        raise FormatError(f"{path}: truncated dataset header")
    magic, version, n, d, c = _DATASET_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    dtype = _record_dtype(d, c)
    payload = raw[_DATASET_HEADER.size:]
    if len(payload) != n * dtype.itemsize:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {n * dtype.itemsize}"
        )
    records = np.frombuffer(payload, dtype=dtype, count=n)
    return Dataset(
        features=records["x"].reshape(n, d).copy(),
        probs=records["p"].reshape(n, c).copy(),
        generations=records["g"].copy(),
    )


def write_dataset(path, features, probs, generations) -> None:
    """Write a .bamd file; inputs are converted to the storage dtypes."""
    x = np.ascontiguousarray(features, dtype="<f4")
    p = np.ascontiguousarray(probs, dtype="<f4")
    g = np.ascontiguousarray(generations, dtype="<u4")
    if x.ndim != 2 or p.ndim != 2 or g.ndim != 1:
        raise FormatError("features/probs must be 2-D and generations 1-D")
    n = x.shape[0]
    if p.shape[0] != n or g.shape[0] != n:
        raise FormatError("features, probs, and generations must have equal length")
    dtype = _record_dtype(x.shape[1], p.shape[1])
    records = np.empty(n, dtype=dtype)
    records["x"] = x
    records["p"] = p
    records["g"] = g
    with open(path, "wb") as fh:
        fh.write(_DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n,
                                      x.shape[1], p.shape[1]))
        fh.write(records.tobytes())


@dataclass(frozen=True)
class Checkpoint:
    """Network parameters plus the architecture advertised in the header."""

    input_dim: int
    class_count: int
    hidden: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def read_checkpoint(path) -> Checkpoint:
    """Load a .bamm file into float64 parameter arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CHECKPOINT_HEADER.size:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, header_len = _CHECKPOINT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    blob = raw[_CHECKPOINT_HEADER.size:_CHECKPOINT_HEADER.size + header_len]
    if len(blob) != header_len:
        raise FormatError(f"{path}: truncated checkpoint header JSON")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header JSON: {exc}") from exc
    try:
        if header["format_version"] != CHECKPOINT_VERSION:
            raise FormatError(
                f"{path}: unsupported checkpoint version {header['format_version']}"
            )
        input_dim = int(header["input_dim"])
        class_count = int(header["class_count"])
        hidden = tuple(int(h) for h in header["hidden"])
    except KeyError as exc:
        raise FormatError(f"{path}: header missing field {exc}") from exc

    widths = [input_dim, *hidden, class_count]
    payload = np.frombuffer(raw[_CHECKPOINT_HEADER.size + header_len:], dtype="<f4")
    expected = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    if payload.shape[0] != expected:
        raise FormatError(
            f"{path}: payload holds {payload.shape[0]} floats, architecture "
            f"needs {expected}"
        )
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(
            payload[offset:offset + fan_in * fan_out]
            .astype(np.float64).reshape(fan_in, fan_out)
        )
        offset += fan_in * fan_out
        biases.append(payload[offset:offset + fan_out].astype(np.float64))
        offset += fan_out
    return Checkpoint(input_dim=input_dim, class_count=class_count, hidden=hidden,
                      weights=weights, biases=biases)
