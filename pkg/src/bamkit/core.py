"""Shared numeric types, validation, and the labeled-dataset container.

Arrays are the working currency: a sample is a 1-D float vector, a soft
label is a 1-D probability vector, and batches stack them row-wise.
The helpers here normalize dtypes, enforce the invariants the rest of
the toolkit relies on, and read/write the binary dataset format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError

# Binary dataset format: magic, format version, record count, feature
# count (header), then class count and fixed-size records.
DATASET_MAGIC = b"BAMD"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, n, d
_CLASSES = struct.Struct("<I")

# Row sums of probability vectors must match 1 this tightly (checked in
# float64 even when storage is float32).
PROB_SUM_TOL = 1e-5
_PROB_RANGE_SLACK = 1e-6


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def as_sample_batch(x, input_dim: int | None = None) -> np.ndarray:
    """Coerce to a float64 (n, d) sample batch, validating shape and finiteness.

    Args:
        x: array-like of shape (n, d).
        input_dim: expected d; mismatches raise ShapeError when given.

    Returns:
        A float64 array of shape (n, d).
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"sample batch must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ShapeError("samples must have at least one feature")
    if input_dim is not None and arr.shape[1] != input_dim:
        raise ShapeError(
            f"sample batch has {arr.shape[1]} features, expected {input_dim}"
        )
    if arr.size and not np.isfinite(arr).all():
        raise ShapeError("sample batch contains non-finite values")
    return arr


def as_soft_label_batch(p, class_count: int | None = None) -> np.ndarray:
    """Coerce to a float64 (n, C) probability batch and validate each row.

    Rows must lie in [0, 1] (up to float32 slack) and sum to 1 within
    PROB_SUM_TOL. C must be at least 2.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"soft-label batch must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 2:
        raise ShapeError("soft labels need at least two classes")
    if class_count is not None and arr.shape[1] != class_count:
        raise ShapeError(
            f"soft-label batch has {arr.shape[1]} classes, expected {class_count}"
        )
    if arr.size:
        if not np.isfinite(arr).all():
            raise ShapeError("soft-label batch contains non-finite values")
        if arr.min() < -_PROB_RANGE_SLACK or arr.max() > 1.0 + _PROB_RANGE_SLACK:
            raise UsageError("soft-label entries must lie in [0, 1]")
        sums = arr.sum(axis=1, dtype=np.float64)
        worst = np.abs(sums - 1.0).max()
        if worst > PROB_SUM_TOL:
            raise UsageError(
                f"soft-label rows must sum to 1 within {PROB_SUM_TOL}, "
                f"worst deviation {worst:.3g}"
            )
    return arr


def argmax_class(label) -> int:
    """Predicted class of one soft label; ties go to the smallest index."""
    arr = np.asarray(label, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ShapeError(f"soft label must be 1-D with >= 2 entries, got {arr.shape}")
    as_soft_label_batch(arr[None, :])
    return int(np.argmax(arr))


def argmax_batch(probs) -> np.ndarray:
    """Row-wise argmax with smallest-index tie-breaking (np.argmax semantics)."""
    arr = as_soft_label_batch(probs)
    return np.argmax(arr, axis=1)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# seed derivation
# ---------------------------------------------------------------------------

def derive_seed(master_seed: int, *key: int) -> int:
    """Derive a child seed from a master seed and an integer key path.

    Distinct key paths give statistically independent streams, so the
    phases of a run can be reseeded independently without one phase's
    draw count perturbing another.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0])


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator seeded via derive_seed's key-path scheme."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


# ---------------------------------------------------------------------------
# container types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box, low[i] < high[i] for every feature."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.ndim != 1 or low.shape != high.shape:
            raise ShapeError(
                f"bounds must be matching 1-D arrays, got {low.shape} and {high.shape}"
            )
        if low.shape[0] < 1:
            raise ShapeError("bounds need at least one feature")
        if not (np.isfinite(low).all() and np.isfinite(high).all()):
            raise UsageError("bounds must be finite")
        if not (low < high).all():
            raise UsageError("each low bound must be strictly below its high bound")
        object.__setattr__(self, "low", _frozen(low))
        object.__setattr__(self, "high", _frozen(high))

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def contains(self, x) -> bool:
        arr = np.asarray(x, dtype=np.float64)
        return bool((arr >= self.low).all() and (arr <= self.high).all())


@dataclass(frozen=True)
class Population:
    """One generation's candidate samples, shape (n, d)."""

    samples: np.ndarray
    generation: int = 0

    def __post_init__(self):
        arr = as_sample_batch(self.samples)
        if self.generation < 0:
            raise UsageError("generation index must be >= 0")
        object.__setattr__(self, "samples", _frozen(arr))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable record batch: features, soft labels, generation indices.

    Storage dtype is float32 for features and labels, matching the
    on-disk format, so a dataset saved and loaded again compares equal
    bit for bit. Generation indices are uint32 and are never renumbered
    by merges.
    """

    features: np.ndarray
    probs: np.ndarray
    generations: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        probs = np.asarray(self.probs, dtype=np.float32)
        gens = np.asarray(self.generations)
        if feats.ndim != 2 or probs.ndim != 2 or gens.ndim != 1:
            raise ShapeError(
                "dataset arrays must be (n, d), (n, C), (n,), got "
                f"{feats.shape}, {probs.shape}, {gens.shape}"
            )
        n = feats.shape[0]
        if probs.shape[0] != n or gens.shape[0] != n:
            raise ShapeError("dataset arrays disagree on record count")
        if feats.shape[1] < 1:
            raise ShapeError("dataset features must have at least one column")
        if probs.shape[1] < 2:
            raise ShapeError("dataset labels need at least two classes")
        if n:
            as_sample_batch(feats)
            as_soft_label_batch(probs)
            if np.issubdtype(gens.dtype, np.floating):
                raise ShapeError("generation indices must be integers")
            if gens.min() < 0:
                raise UsageError("generation indices must be >= 0")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "probs", _frozen(probs.astype(np.float32)))
        object.__setattr__(self, "generations", _frozen(gens.astype(np.uint32)))

    # -- shape -------------------------------------------------------------

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def empty(cls, input_dim: int, class_count: int) -> "LabeledDataset":
        return cls(
            np.zeros((0, input_dim), dtype=np.float32),
            np.zeros((0, class_count), dtype=np.float32),
            np.zeros((0,), dtype=np.uint32),
        )

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        """Write the binary dataset file.

        Layout, all little-endian: 4-byte magic, uint32 format version,
        uint32 record count n, uint32 feature count d, uint32 class
        count C, then n records of d float32 features, C float32
        probabilities, and one uint32 generation index.
        """
        rec = _record_dtype(self.input_dim, self.class_count)
        block = np.empty(len(self), dtype=rec)
        block["x"] = self.features
        block["p"] = self.probs
        block["g"] = self.generations
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(self), self.input_dim))
            fh.write(_CLASSES.pack(self.class_count))
            fh.write(block.tobytes())

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        """Read a binary dataset file, validating header against payload."""
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size + _CLASSES.size:
            raise UsageError(f"{path}: truncated dataset header")
        magic, version, n, d = _HEADER.unpack_from(raw, 0)
        if magic != DATASET_MAGIC:
            raise UsageError(f"{path}: not a dataset file (bad magic {magic!r})")
        if version != DATASET_VERSION:
            raise UsageError(f"{path}: unsupported dataset version {version}")
        (class_count,) = _CLASSES.unpack_from(raw, _HEADER.size)
        if d < 1 or class_count < 2:
            raise UsageError(f"{path}: invalid dimensions d={d} C={class_count}")
        rec = _record_dtype(d, class_count)
        body = raw[_HEADER.size + _CLASSES.size:]
        if len(body) != n * rec.itemsize:
            raise UsageError(
                f"{path}: payload is {len(body)} bytes, header implies {n * rec.itemsize}"
            )
        block = np.frombuffer(body, dtype=rec)
        return cls(
            block["x"].reshape(n, d),
            block["p"].reshape(n, class_count),
            block["g"].astype(np.uint32),
        )

    def to_csv(self, path) -> None:
        """Lossy one-way CSV export with header f0..f{d-1},p0..p{C-1},gen."""
        d, c = self.input_dim, self.class_count
        header = ",".join(
            [f"f{i}" for i in range(d)] + [f"p{i}" for i in range(c)] + ["gen"]
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(len(self)):
                cells = [f"{v:.9g}" for v in self.features[i]]
                cells += [f"{v:.9g}" for v in self.probs[i]]
                cells.append(str(int(self.generations[i])))
                fh.write(",".join(cells) + "\n")

    # -- composition ---------------------------------------------------------

    def merge(self, other: "LabeledDataset") -> "LabeledDataset":
        return dataset_merge(self, other)


def _record_dtype(d: int, class_count: int) -> np.dtype:
    return np.dtype(
        [("x", "<f4", (d,)), ("p", "<f4", (class_count,)), ("g", "<u4")]
    )


def dataset_merge(a: LabeledDataset, b: LabeledDataset) -> LabeledDataset:
    """Concatenate two datasets, a's records first.

    Both sides must agree on feature and class dimensions. Generation
    indices pass through untouched.
    """
    if a.input_dim != b.input_dim:
        raise ShapeError(
            f"cannot merge datasets with {a.input_dim} and {b.input_dim} features"
        )
    if a.class_count != b.class_count:
        raise ShapeError(
            f"cannot merge datasets with {a.class_count} and {b.class_count} classes"
        )
    return LabeledDataset(
        np.concatenate([a.features, b.features], axis=0),
        np.concatenate([a.probs, b.probs], axis=0),
        np.concatenate([a.generations, b.generations], axis=0),
    )


def write_json(path, payload: dict) -> None:
    """Write a dict as stable, human-diffable JSON."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
