"""Oracle handles: metering, backend math, victim training."""

import math
import threading

import numpy as np
import pytest

from bamkit.errors import ShapeError, UsageError
from bamkit.oracle import (
    Oracle,
    gaussian_mixture_oracle,
    linear_softmax_oracle,
    model_oracle,
    oracle_from_checkpoint,
    train_victim,
)
from bamkit.substitute import NetSpec, TrainConfig, init_params, save_checkpoint
from bamkit import synth


def _simple_oracle():
    return linear_softmax_oracle([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])


# ---------------------------------------------------------------------------
# metering
# ---------------------------------------------------------------------------

def test_query_count_tracks_every_sample():
    oracle = _simple_oracle()
    rng = np.random.default_rng(0)
    total = 0
    for size in (1, 5, 17, 64, 3):
        oracle.predict_proba(rng.uniform(size=(size, 2)))
        total += size
        assert oracle.query_count == total


def test_query_count_is_exact_under_threads():
    oracle = _simple_oracle()
    rng = np.random.default_rng(1)
    batches = [rng.uniform(size=(7, 2)) for _ in range(400)]

    def worker(chunk):
        for batch in chunk:
            oracle.predict_proba(batch)

    threads = [
        threading.Thread(target=worker, args=(batches[i::8],)) for i in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert oracle.query_count == 7 * 400


def test_predict_validates_input():
    oracle = _simple_oracle()
    with pytest.raises(UsageError):
        oracle.predict_proba(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        oracle.predict_proba(np.zeros((3, 5)))
    with pytest.raises(ShapeError):
        oracle.predict_proba(np.zeros(2))
    assert oracle.query_count == 0


# ---------------------------------------------------------------------------
# analytic backends
# ---------------------------------------------------------------------------

def test_linear_softmax_matches_scalar_reference():
    w = np.array([[2.0, -1.0], [0.5, 0.3], [-1.0, 1.0]])
    b = np.array([0.1, -0.2, 0.0])
    oracle = linear_softmax_oracle(w, b)
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, size=(20, 2))
    got = oracle.predict_proba(x)
    for i in range(20):
        logits = [w[c] @ x[i] + b[c] for c in range(3)]
        exps = [math.exp(v - max(logits)) for v in logits]
        ref = [v / sum(exps) for v in exps]
        assert np.allclose(got[i], ref, atol=1e-12)


def _bayes_posterior_reference(x, means, covs, priors):
    """Direct density formula with explicit inverses, for cross-checking."""
    n, d = x.shape
    dens = np.zeros((n, means.shape[0]))
    for c in range(means.shape[0]):
        inv = np.linalg.inv(covs[c])
        det = np.linalg.det(covs[c])
        diff = x - means[c]
        quad = np.einsum("ni,ij,nj->n", diff, inv, diff)
        dens[:, c] = priors[c] * np.exp(-0.5 * quad) / np.sqrt((2 * np.pi) ** d * det)
    return dens / dens.sum(axis=1, keepdims=True)


def test_gaussian_mixture_matches_direct_posterior():
    rng = np.random.default_rng(3)
    means = rng.uniform(-1, 1, size=(3, 2))
    raw = rng.uniform(-0.5, 0.5, size=(3, 2, 2))
    covs = np.stack([r @ r.T + 0.3 * np.eye(2) for r in raw])
    priors = np.array([0.2, 0.5, 0.3])
    oracle = gaussian_mixture_oracle(means, covs, priors)
    x = rng.uniform(-2, 2, size=(40, 2))
    got = oracle.predict_proba(x)
    ref = _bayes_posterior_reference(x, means, covs, priors)
    assert np.allclose(got, ref, atol=1e-10)
    assert np.allclose(got.sum(axis=1), 1.0)


def test_gaussian_mixture_validation():
    means, covs, priors = synth.triangle_mixture_params()
    with pytest.raises(UsageError):
        gaussian_mixture_oracle(means, covs, np.array([0.5, 0.5, 0.5]))
    bad_cov = covs.copy()
    bad_cov[0] = -np.eye(2)
    with pytest.raises(UsageError):
        gaussian_mixture_oracle(means, bad_cov, priors)


def test_chunking_preserves_order_and_content():
    backend_oracle = _simple_oracle()
    chunked = Oracle(backend_oracle._backend, max_batch=16)
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(100, 2))
    assert np.array_equal(chunked.predict_proba(x), backend_oracle.predict_proba(x))
    assert chunked.query_count == 100


# ---------------------------------------------------------------------------
# trained and checkpoint victims
# ---------------------------------------------------------------------------

def test_train_victim_learns_separable_task():
    x, y = synth.sample_prototype_blobs(800, 3, 2, 0.04, task_seed=5, sample_seed=6)
    result = train_victim(x, y, hidden=(16,), seed=7,
                          train_cfg=TrainConfig(epochs=40, learning_rate=1e-2,
                                                batch_size=64, shuffle_seed=7))
    assert result.heldout_accuracy > 0.95
    assert result.oracle.backend_name == "in-repo-trained-net"
    probs = result.oracle.predict_proba(x[:10])
    assert probs.shape == (10, 3)
    assert result.oracle.query_count == 10


def test_train_victim_is_deterministic():
    x, y = synth.sample_prototype_blobs(200, 2, 2, 0.1, task_seed=8, sample_seed=9)
    cfg = TrainConfig(epochs=5, shuffle_seed=3)
    a = train_victim(x, y, hidden=(8,), seed=3, train_cfg=cfg)
    b = train_victim(x, y, hidden=(8,), seed=3, train_cfg=cfg)
    assert a.heldout_accuracy == b.heldout_accuracy
    for wa, wb in zip(a.model.weights, b.model.weights):
        assert np.array_equal(wa, wb)


def test_train_victim_zero_epochs_is_chance_level():
    x, y = synth.sample_prototype_blobs(1000, 4, 2, 0.05, task_seed=10, sample_seed=11)
    result = train_victim(x, y, hidden=(8,), seed=1,
                          train_cfg=TrainConfig(epochs=0, shuffle_seed=1))
    assert abs(result.heldout_accuracy - 0.25) < 0.1


def test_train_victim_rejects_bad_labels():
    x = np.zeros((10, 2))
    with pytest.raises(ShapeError):
        train_victim(x, np.zeros(9, dtype=int))
    with pytest.raises(UsageError):
        train_victim(x, np.full(10, 3, dtype=int), class_count=2)
    with pytest.raises(ShapeError):
        train_victim(x, np.zeros(10))


def test_checkpoint_oracle_matches_model(tmp_path):
    model = init_params(NetSpec(input_dim=2, hidden=(6,), class_count=3, seed=12))
    path = tmp_path / "victim.bamm"
    save_checkpoint(model, path)
    oracle = oracle_from_checkpoint(path)
    direct = model_oracle(model)
    rng = np.random.default_rng(13)
    x = rng.uniform(size=(25, 2))
    # Checkpoints round through float32, so compare at that precision.
    assert np.allclose(oracle.predict_proba(x), direct.predict_proba(x), atol=1e-6)
    assert oracle.input_dim == 2 and oracle.class_count == 3
