"""Substitute network: a small dense ReLU classifier trained on soft labels.

Forward, backward, and the optimizer are written out explicitly so the
gradients can be audited numerically. Math runs in float64; checkpoints
store float32, and a loaded model upcasts back to float64.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import LabeledDataset, as_sample_batch, as_soft_label_batch
from .errors import ShapeError, TrainingError, UsageError

# Probabilities are floored before log so a confident wrong prediction
# yields a large finite loss instead of inf.
LOG_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"BAMM"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sI")  # magic, json header length


@dataclass(frozen=True)
class NetSpec:
    """Architecture description: layer widths plus init scheme and seed."""

    input_dim: int
    hidden: tuple[int, ...]
    class_count: int
    activation: str = "relu"
    weight_init: str = "uniform-fan-in"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise UsageError("input_dim must be >= 1")
        if self.class_count < 2:
            raise UsageError("class_count must be >= 2")
        if any(h < 1 for h in self.hidden):
            raise UsageError("hidden widths must be >= 1")
        if self.activation != "relu":
            raise UsageError(f"unsupported activation {self.activation!r}")
        if self.weight_init != "uniform-fan-in":
            raise UsageError(f"unsupported weight init {self.weight_init!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden, self.class_count]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class MlpClassifier:
    """Dense ReLU network with a softmax head.

    weights[i] has shape (fan_in, fan_out) and biases[i] shape
    (fan_out,); a layer computes x @ W + b. Treat instances as
    immutable; the trainer works on copies.
    """

    spec: NetSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def predict_proba(self, x) -> np.ndarray:
        """Class probabilities for a batch, shape (n, class_count)."""
        arr = as_sample_batch(x, self.spec.input_dim)
        _, probs = _forward(self, arr)
        return probs

    def predict_class(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


def init_params(spec: NetSpec) -> MlpClassifier:
    """Fresh network: W ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        limit = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpClassifier(spec, weights, biases)


# ---------------------------------------------------------------------------
# forward / loss / backward
# ---------------------------------------------------------------------------

def _forward(model: MlpClassifier, x: np.ndarray):
    """Run the net, returning per-layer activations (input first) and probs."""
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = _softmax(z) if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, h


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def soft_cross_entropy(pred, target) -> float:
    """Cross-entropy of one predicted distribution against one soft target.

    Computes -sum(target * log(max(pred, LOG_FLOOR))). Both arguments
    are 1-D probability vectors of equal length.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeError(f"prediction and target must match, got {p.shape} vs {t.shape}")
    return float(-(t * np.log(np.maximum(p, LOG_FLOOR))).sum())


def mean_soft_cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Batch mean of the per-row soft cross-entropy."""
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeError(f"batch shapes must match, got {pred.shape} vs {target.shape}")
    rows = -(target * np.log(np.maximum(pred, LOG_FLOOR))).sum(axis=1)
    return float(rows.mean())


def backward(model: MlpClassifier, x: np.ndarray, target: np.ndarray):
    """Gradients of the mean soft cross-entropy w.r.t. every W and b.

    Args:
        model: network to differentiate.
        x: input batch (n, input_dim).
        target: soft-label batch (n, class_count).

    Returns:
        (grads, loss) where grads is a list of (dW, db) pairs in layer
        order and loss is the mean cross-entropy of the batch.
    """
    x = as_sample_batch(x, model.spec.input_dim)
    target = as_soft_label_batch(target, model.spec.class_count)
    acts, probs = _forward(model, x)
    loss = mean_soft_cross_entropy(probs, target)
    n = x.shape[0]
    # Softmax + cross-entropy collapses to probs - target at the logits.
    delta = (probs - target) / n
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return grads, loss


def input_gradient(model: MlpClassifier, x, target) -> np.ndarray:
    """Per-sample gradient of each row's own cross-entropy w.r.t. its input."""
    x = as_sample_batch(x, model.spec.input_dim)
    target = as_soft_label_batch(target, model.spec.class_count)
    acts, probs = _forward(model, x)
    delta = probs - target
    for i in range(len(model.weights) - 1, 0, -1):
        delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return delta @ model.weights[0].T


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for substitute training."""

    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.1
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise UsageError("val_fraction must lie in [0, 0.5]")


@dataclass
class TrainResult:
    """Trained model plus the loss curves behind the epoch selection."""

    model: MlpClassifier
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    val_size: int = 0


def train_substitute(dataset: LabeledDataset, spec: NetSpec, cfg: TrainConfig) -> TrainResult:
    """Fit the substitute on soft labels with Adam, keeping the best epoch.

    A fixed fraction of records is held out for validation (split and
    batch order both come from cfg.shuffle_seed, so reruns are
    bit-identical). After each epoch the validation loss is evaluated
    and the parameters from the lowest-loss epoch are returned. With no
    validation records the training loss selects instead.

    Args:
        dataset: labeled records to fit; must be non-empty.
        spec: architecture; dims must match the dataset.
        cfg: optimizer settings.

    Returns:
        TrainResult with the selected model and per-epoch loss curves.

    Raises:
        UsageError: empty dataset or dimension mismatch.
        TrainingError: loss or parameters became non-finite.
    """
    if len(dataset) == 0:
        raise UsageError("cannot train on an empty dataset")
    if dataset.input_dim != spec.input_dim or dataset.class_count != spec.class_count:
        raise UsageError(
            f"dataset is {dataset.input_dim}d/{dataset.class_count}c but spec wants "
            f"{spec.input_dim}d/{spec.class_count}c"
        )

    x_all = dataset.features.astype(np.float64)
    t_all = dataset.probs.astype(np.float64)
    n = len(dataset)

    rng = np.random.default_rng(cfg.shuffle_seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise UsageError("validation split left no training records")
    x_tr, t_tr = x_all[train_idx], t_all[train_idx]
    x_val, t_val = x_all[val_idx], t_all[val_idx]

    model = init_params(spec)
    params = [a.copy() for a in model.weights] + [a.copy() for a in model.biases]
    n_w = len(model.weights)
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0

    def current() -> MlpClassifier:
        return MlpClassifier(spec, [p.copy() for p in params[:n_w]],
                             [p.copy() for p in params[n_w:]])

    best_params = [p.copy() for p in params]
    best_loss = math.inf
    best_epoch: int | None = None
    train_losses: list[float] = []
    val_losses: list[float] = []

    # Adam updates mutate the arrays in place, so this view stays current.
    work = MlpClassifier(spec, params[:n_w], params[n_w:])
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx.size)
        seen = 0
        loss_sum = 0.0
        for start in range(0, train_idx.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads, loss = backward(work, x_tr[batch], t_tr[batch])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            loss_sum += loss * batch.size
            seen += batch.size
            step += 1
            flat = [dw for dw, _ in grads] + [db for _, db in grads]
            for i, g in enumerate(flat):
                adam_m[i] = cfg.beta1 * adam_m[i] + (1 - cfg.beta1) * g
                adam_v[i] = cfg.beta2 * adam_v[i] + (1 - cfg.beta2) * (g * g)
                m_hat = adam_m[i] / (1 - cfg.beta1 ** step)
                v_hat = adam_v[i] / (1 - cfg.beta2 ** step)
                params[i] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        if any(not np.isfinite(p).all() for p in params):
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
        train_losses.append(loss_sum / seen)

        if val_idx.size:
            sel_loss = mean_soft_cross_entropy(current().predict_proba(x_val), t_val)
            val_losses.append(sel_loss)
        else:
            sel_loss = train_losses[-1]
        if sel_loss < best_loss:
            best_loss = sel_loss
            best_epoch = epoch
            best_params = [p.copy() for p in params]

    if cfg.epochs == 0:
        return TrainResult(model=current(), train_losses=[], val_losses=[],
                           best_epoch=None, val_size=int(val_idx.size))
    final = MlpClassifier(spec, best_params[:n_w], best_params[n_w:])
    return TrainResult(model=final, train_losses=train_losses, val_losses=val_losses,
                       best_epoch=best_epoch, val_size=int(val_idx.size))


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

def save_checkpoint(model: MlpClassifier, path) -> None:
    """Write the binary checkpoint.

    Layout: 4-byte magic, uint32 JSON header length, the UTF-8 JSON
    header (format version plus the NetSpec fields), then per layer the
    weight matrix and bias vector as little-endian float32 in C order.
    """
    header = {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": model.spec.input_dim,
        "hidden": list(model.spec.hidden),
        "class_count": model.spec.class_count,
        "activation": model.spec.activation,
        "weight_init": model.spec.weight_init,
        "seed": model.spec.seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path) -> MlpClassifier:
    """Read a checkpoint, validating header fields against the payload size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEADER.size:
        raise UsageError(f"{path}: truncated checkpoint")
    magic, hlen = _CKPT_HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise UsageError(f"{path}: not a checkpoint file (bad magic {magic!r})")
    if len(raw) < _CKPT_HEADER.size + hlen:
        raise UsageError(f"{path}: checkpoint header extends past end of file")
    try:
        header = json.loads(raw[_CKPT_HEADER.size:_CKPT_HEADER.size + hlen])
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: unreadable checkpoint header: {exc}") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise UsageError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    spec = NetSpec(
        input_dim=int(header["input_dim"]),
        hidden=tuple(header["hidden"]),
        class_count=int(header["class_count"]),
        activation=header.get("activation", "relu"),
        weight_init=header.get("weight_init", "uniform-fan-in"),
        seed=int(header.get("seed", 0)),
    )
    body = raw[_CKPT_HEADER.size + hlen:]
    expected = sum(fi * fo + fo for fi, fo in spec.layer_dims) * 4
    if len(body) != expected:
        raise UsageError(
            f"{path}: parameter payload is {len(body)} bytes, header implies {expected}"
        )
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in spec.layer_dims:
        w = np.frombuffer(body, dtype="<f4", count=fan_in * fan_out, offset=offset)
        offset += fan_in * fan_out * 4
        b = np.frombuffer(body, dtype="<f4", count=fan_out, offset=offset)
        offset += fan_out * 4
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpClassifier(spec, weights, biases)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    """Per-tensor relative errors between analytic and numerical gradients."""

    max_rel_err: float
    mean_rel_err: float
    per_tensor: dict


def gradient_check(model: MlpClassifier, x, target, step: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Every weight matrix, every bias vector, and the input batch are
    perturbed entry by entry with a two-sided step on the mean loss.
    The error per tensor is ||analytic - numeric|| / max(||analytic||,
    ||numeric||, 1e-12) in the 2-norm.

    Args:
        model: network to check (left unmodified).
        x: input batch, kept small since cost is two forward passes per entry.
        target: soft-label batch.
        step: finite-difference half-step.

    Returns:
        GradCheckReport with max/mean error and a per-tensor breakdown.
    """
    x = as_sample_batch(x, model.spec.input_dim)
    target = as_soft_label_batch(target, model.spec.class_count)
    work = MlpClassifier(model.spec, [w.copy() for w in model.weights],
                         [b.copy() for b in model.biases])
    grads, _ = backward(work, x, target)
    n = x.shape[0]

    def loss_now(x_eval: np.ndarray) -> float:
        _, probs = _forward(work, x_eval)
        return mean_soft_cross_entropy(probs, target)

    def numeric_grad(tensor: np.ndarray, x_eval: np.ndarray) -> np.ndarray:
        out = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            keep = tensor[idx]
            tensor[idx] = keep + step
            hi = loss_now(x_eval)
            tensor[idx] = keep - step
            lo = loss_now(x_eval)
            tensor[idx] = keep
            out[idx] = (hi - lo) / (2 * step)
            it.iternext()
        return out

    per_tensor: dict = {}
    analytic_tensors = {}
    for i, (dw, db) in enumerate(grads):
        analytic_tensors[f"layer{i}.W"] = (dw, work.weights[i])
        analytic_tensors[f"layer{i}.b"] = (db, work.biases[i])
    for name, (analytic, tensor) in analytic_tensors.items():
        numeric = numeric_grad(tensor, x)
        per_tensor[name] = _rel_err(analytic, numeric)

    # The check perturbs the mean loss, so scale the per-sample input
    # gradient down by the batch size before comparing.
    x_var = x.copy()
    numeric = numeric_grad(x_var, x_var)
    analytic = input_gradient(work, x, target) / n
    per_tensor["input"] = _rel_err(analytic, numeric)

    errs = np.array(list(per_tensor.values()))
    return GradCheckReport(float(errs.max()), float(errs.mean()), per_tensor)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
