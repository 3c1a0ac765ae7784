"""Query-metered access to the victim classifier.

An Oracle wraps one prediction backend behind a single predict_proba
call that validates inputs, splits oversized batches, and counts every
labeled sample. The count is the attack's cost meter, so it is exact
and thread safe. Backends: analytic linear softmax, analytic Gaussian
mixture, an in-repo trained network, or a remote HTTP server.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .core import LabeledDataset, as_sample_batch, as_soft_label_batch
from .errors import OracleError, ShapeError, UsageError, BamError
from .substitute import (
    MlpClassifier,
    NetSpec,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    train_substitute,
)

# Remote requests are split into chunks of at most this many samples.
REMOTE_BATCH_LIMIT = 1024
REMOTE_ATTEMPTS = 3
_BACKOFF_BASE = 0.2
_BACKOFF_CAP = 2.0


class Oracle:
    """Black-box prediction handle with an exact query counter.

    The counter increases by the number of samples labeled, never by
    request count, and increments only after a chunk succeeds, so a
    failed call is charged only for the chunks the backend answered.
    """

    def __init__(self, backend, max_batch: int | None = None):
        self._backend = backend
        self._max_batch = max_batch
        self._count = 0
        self._lock = threading.Lock()

    @property
    def input_dim(self) -> int:
        return self._backend.input_dim

    @property
    def class_count(self) -> int:
        return self._backend.class_count

    @property
    def backend_name(self) -> str:
        return self._backend.name

    @property
    def query_count(self) -> int:
        with self._lock:
            return self._count

    def predict_proba(self, x) -> np.ndarray:
        """Label a batch, shape (n, input_dim) -> (n, class_count).

        Raises:
            UsageError: empty batch.
            ShapeError: wrong dimensionality.
            OracleError: the backend failed or returned garbage.
        """
        arr = as_sample_batch(x, self.input_dim)
        if arr.shape[0] == 0:
            raise UsageError("prediction batch must be non-empty")
        limit = self._max_batch or arr.shape[0]
        outputs = []
        for start in range(0, arr.shape[0], limit):
            chunk = arr[start:start + limit]
            probs = self._backend.predict(chunk)
            if probs.shape != (chunk.shape[0], self.class_count):
                raise OracleError(
                    f"backend returned shape {probs.shape}, "
                    f"expected {(chunk.shape[0], self.class_count)}"
                )
            if not np.isfinite(probs).all():
                raise OracleError("backend returned non-finite probabilities")
            outputs.append(probs)
            with self._lock:
                self._count += chunk.shape[0]
        return outputs[0] if len(outputs) == 1 else np.concatenate(outputs, axis=0)


# ---------------------------------------------------------------------------
# analytic backends
# ---------------------------------------------------------------------------

class _LinearSoftmaxBackend:
    name = "analytic-linear-softmax"

    def __init__(self, weights, biases):
        w = np.asarray(weights, dtype=np.float64)
        b = np.asarray(biases, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ShapeError(
                f"weights must be (C, d) with matching biases, got {w.shape} and {b.shape}"
            )
        if w.shape[0] < 2:
            raise ShapeError("linear softmax victim needs at least two classes")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise UsageError("victim parameters must be finite")
        self.weights, self.biases = w, b
        self.class_count, self.input_dim = w.shape

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.weights.T + self.biases
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


class _GaussianMixtureBackend:
    """Bayes posterior of a class-conditional Gaussian mixture."""

    name = "analytic-gaussian-mixture"

    def __init__(self, means, covariances, priors):
        mu = np.asarray(means, dtype=np.float64)
        cov = np.asarray(covariances, dtype=np.float64)
        pri = np.asarray(priors, dtype=np.float64)
        if mu.ndim != 2 or cov.shape != (mu.shape[0], mu.shape[1], mu.shape[1]):
            raise ShapeError(
                f"means must be (C, d) with (C, d, d) covariances, got {mu.shape} and {cov.shape}"
            )
        if pri.shape != (mu.shape[0],):
            raise ShapeError("priors must be one per class")
        if mu.shape[0] < 2:
            raise ShapeError("mixture victim needs at least two classes")
        if pri.min() <= 0 or abs(pri.sum() - 1.0) > 1e-9:
            raise UsageError("priors must be positive and sum to 1")
        try:
            self._chol = [np.linalg.cholesky(c) for c in cov]
        except np.linalg.LinAlgError as exc:
            raise UsageError(f"covariances must be symmetric positive definite: {exc}") from exc
        self.means, self.covariances, self.priors = mu, cov, pri
        self.class_count, self.input_dim = mu.shape
        self._log_norm = np.array(
            [
                -0.5 * mu.shape[1] * np.log(2 * np.pi) - np.log(np.diag(c)).sum()
                for c in self._chol
            ]
        )

    def predict(self, x: np.ndarray) -> np.ndarray:
        log_joint = np.empty((x.shape[0], self.class_count))
        for c in range(self.class_count):
            diff = (x - self.means[c]).T
            # Mahalanobis term via the Cholesky factor, no explicit inverse.
            y = np.linalg.solve(self._chol[c], diff)
            log_joint[:, c] = (
                np.log(self.priors[c]) + self._log_norm[c] - 0.5 * (y * y).sum(axis=0)
            )
        log_joint -= log_joint.max(axis=1, keepdims=True)
        e = np.exp(log_joint)
        return e / e.sum(axis=1, keepdims=True)


class _ModelBackend:
    name = "in-repo-trained-net"

    def __init__(self, model: MlpClassifier):
        self.model = model
        self.input_dim = model.spec.input_dim
        self.class_count = model.spec.class_count

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(x)


def linear_softmax_oracle(weights, biases) -> Oracle:
    """Victim computing softmax(W x + b); weights shape (C, d)."""
    return Oracle(_LinearSoftmaxBackend(weights, biases))


def gaussian_mixture_oracle(means, covariances, priors) -> Oracle:
    """Victim returning the exact Bayes posterior of a Gaussian mixture."""
    return Oracle(_GaussianMixtureBackend(means, covariances, priors))


def model_oracle(model: MlpClassifier) -> Oracle:
    """Victim backed by an in-process network."""
    return Oracle(_ModelBackend(model))


def oracle_from_checkpoint(path) -> Oracle:
    """Victim loaded from a checkpoint file."""
    return model_oracle(load_checkpoint(path))


# ---------------------------------------------------------------------------
# trained victim
# ---------------------------------------------------------------------------

@dataclass
class TrainedVictim:
    """A freshly trained victim oracle plus how well it generalizes."""

    oracle: Oracle
    model: MlpClassifier
    heldout_accuracy: float
    train_result: TrainResult


def train_victim(
    x,
    y,
    hidden: tuple[int, ...] = (32, 32),
    class_count: int | None = None,
    train_cfg: TrainConfig | None = None,
    seed: int = 0,
    holdout_fraction: float = 0.2,
) -> TrainedVictim:
    """Fit a network on labeled data to act as the victim.

    Args:
        x: training features (n, d).
        y: integer class labels (n,).
        hidden: hidden layer widths.
        class_count: number of classes; defaults to max(y) + 1.
        train_cfg: optimizer settings; defaults to TrainConfig() with
            the shuffle seed tied to this seed.
        seed: controls init, shuffling, and the holdout split.
        holdout_fraction: fraction reserved to measure accuracy; with
            0.0 the reported accuracy is on the training data itself.

    Returns:
        TrainedVictim with the metered oracle and held-out accuracy.
    """
    x = as_sample_batch(x)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ShapeError(f"labels must be (n,), got {y.shape} for {x.shape[0]} samples")
    if not 0.0 <= holdout_fraction <= 0.5:
        raise UsageError("holdout_fraction must lie in [0, 0.5]")
    if np.issubdtype(y.dtype, np.floating):
        raise ShapeError("labels must be integers")
    c = int(class_count) if class_count is not None else int(y.max()) + 1
    if c < 2 or y.min() < 0 or y.max() >= c:
        raise UsageError(f"labels must lie in [0, {c})")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(x.shape[0])
    n_hold = int(round(holdout_fraction * x.shape[0]))
    hold_idx, fit_idx = perm[:n_hold], perm[n_hold:]
    if fit_idx.size == 0:
        raise UsageError("holdout split left no training records")

    onehot = np.zeros((fit_idx.size, c), dtype=np.float32)
    onehot[np.arange(fit_idx.size), y[fit_idx]] = 1.0
    dataset = LabeledDataset(
        x[fit_idx].astype(np.float32),
        onehot,
        np.zeros(fit_idx.size, dtype=np.uint32),
    )
    spec = NetSpec(input_dim=x.shape[1], hidden=tuple(hidden), class_count=c, seed=seed)
    cfg = train_cfg if train_cfg is not None else TrainConfig(shuffle_seed=seed)
    result = train_substitute(dataset, spec, cfg)

    eval_x, eval_y = (x[hold_idx], y[hold_idx]) if n_hold else (x[fit_idx], y[fit_idx])
    pred = result.model.predict_class(eval_x)
    accuracy = float((pred == eval_y).mean())
    return TrainedVictim(model_oracle(result.model), result.model, accuracy, result)


# ---------------------------------------------------------------------------
# remote backend
# ---------------------------------------------------------------------------

class _SchemaViolation(ValueError):
    """A 200 response whose body does not match the protocol."""


def _request_json(method: str, url: str, payload: dict | None, timeout: float,
                  attempts: int, validate=None):
    """Fetch JSON with retries and capped exponential backoff.

    A connection error, timeout, non-200 status, unparseable body, or a
    validate() rejection all count as one failed attempt. validate, if
    given, maps the decoded body to the return value and raises
    _SchemaViolation to reject it.
    """
    last_error = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(min(_BACKOFF_BASE * 2 ** (attempt - 1), _BACKOFF_CAP))
        try:
            resp = requests.request(method, url, json=payload, timeout=timeout)
            if resp.status_code != 200:
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                continue
            body = resp.json()
            if not isinstance(body, dict):
                raise _SchemaViolation(f"expected a JSON object, got {type(body).__name__}")
            return body if validate is None else validate(body)
        except (requests.RequestException, ValueError) as exc:
            last_error = str(exc)
    raise OracleError(f"{method} {url} failed after {attempts} attempts: {last_error}")


class _RemoteBackend:
    """Client for the prediction wire protocol.

    Each chunk is POSTed to /v1/predict as {"inputs": [[...], ...]} and
    must come back 200 with {"probabilities": [[...], ...], "model_id":
    str}. Anything else (connection error, non-200, wrong schema,
    non-distribution rows) counts as a transport failure; each request
    is retried with capped exponential backoff before giving up.
    """

    name = "remote-http"

    def __init__(self, base_url: str, timeout: float = 10.0, attempts: int = REMOTE_ATTEMPTS):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.attempts = attempts
        info = _request_json("GET", self.base_url + "/v1/info", None, timeout, attempts)
        try:
            self.input_dim = int(info["input_dim"])
            self.class_count = int(info["class_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleError(f"malformed /v1/info response: {info!r}") from exc
        if self.input_dim < 1 or self.class_count < 2:
            raise OracleError(f"server reports unusable dimensions: {info!r}")

    def predict(self, x: np.ndarray) -> np.ndarray:
        def validate(body: dict) -> np.ndarray:
            probs = body.get("probabilities")
            if probs is None or not isinstance(body.get("model_id"), str):
                raise _SchemaViolation(
                    f"response missing probabilities or model_id: {sorted(body)}"
                )
            try:
                arr = as_soft_label_batch(probs, self.class_count)
            except BamError as exc:
                raise _SchemaViolation(f"invalid probabilities: {exc}") from exc
            if arr.shape[0] != x.shape[0]:
                raise _SchemaViolation(f"{arr.shape[0]} rows for {x.shape[0]} inputs")
            return arr

        return _request_json(
            "POST", self.base_url + "/v1/predict", {"inputs": x.tolist()},
            self.timeout, self.attempts, validate,
        )


def remote_oracle(url: str, timeout: float = 10.0) -> Oracle:
    """Victim behind an HTTP server; batches are chunked to the wire limit."""
    return Oracle(_RemoteBackend(url, timeout=timeout), max_batch=REMOTE_BATCH_LIMIT)


def check_server(url: str, timeout: float = 10.0) -> dict:
    """Probe /v1/health and /v1/info, returning the merged server report."""
    base = url.rstrip("/")
    health = _request_json("GET", base + "/v1/health", None, timeout, REMOTE_ATTEMPTS)
    if health.get("status") != "ok":
        raise OracleError(f"server health check failed: {health!r}")
    info = _request_json("GET", base + "/v1/info", None, timeout, REMOTE_ATTEMPTS)
    return {**health, **info}
