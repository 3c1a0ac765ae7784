"""Substitute network: math checks, training behavior, checkpoint format."""

import numpy as np
import pytest

from bamkit.core import LabeledDataset
from bamkit.errors import TrainingError, UsageError
from bamkit.substitute import (
    LOG_FLOOR,
    MlpClassifier,
    NetSpec,
    TrainConfig,
    backward,
    gradient_check,
    init_params,
    input_gradient,
    load_checkpoint,
    save_checkpoint,
    soft_cross_entropy,
    train_substitute,
)
from bamkit import synth


def _random_batch(rng, n, d, c):
    x = rng.uniform(-1, 1, size=(n, d))
    raw = rng.uniform(0.1, 1.0, size=(n, c))
    t = raw / raw.sum(axis=1, keepdims=True)
    return x, t


def _blob_dataset(n=400, d=2, c=3, spread=0.05, seed=0):
    x, y = synth.sample_prototype_blobs(n, c, d, spread, task_seed=seed, sample_seed=seed + 1)
    onehot = np.zeros((n, c), dtype=np.float32)
    onehot[np.arange(n), y] = 1.0
    return LabeledDataset(x.astype(np.float32), onehot, np.zeros(n, dtype=np.uint32)), y


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_soft_cross_entropy_examples():
    # Perfect one-hot prediction has zero loss.
    assert soft_cross_entropy([1.0, 0.0], [1.0, 0.0]) == 0.0
    # One-hot target reduces to -log of the predicted probability.
    val = soft_cross_entropy([0.25, 0.75], [0.0, 1.0])
    assert np.isclose(val, -np.log(0.75))
    # Against itself the loss is the distribution's entropy.
    p = np.array([0.3, 0.7])
    assert np.isclose(soft_cross_entropy(p, p), -(p * np.log(p)).sum())


def test_log_floor_keeps_loss_finite():
    val = soft_cross_entropy([1.0, 0.0], [0.0, 1.0])
    assert np.isfinite(val)
    assert np.isclose(val, -np.log(LOG_FLOOR))


def test_forward_rows_are_distributions():
    spec = NetSpec(input_dim=3, hidden=(8,), class_count=4, seed=1)
    model = init_params(spec)
    rng = np.random.default_rng(0)
    probs = model.predict_proba(rng.uniform(-5, 5, size=(20, 3)))
    assert probs.shape == (20, 4)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert probs.min() >= 0.0


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_backward_matches_softmax_regression_formula():
    # With no hidden layers the analytic gradient has a one-line closed
    # form, computed here from scratch as an independent reference.
    spec = NetSpec(input_dim=4, hidden=(), class_count=3, seed=2)
    model = init_params(spec)
    rng = np.random.default_rng(3)
    x, t = _random_batch(rng, 12, 4, 3)
    z = x @ model.weights[0] + model.biases[0]
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    expected_dw = x.T @ (p - t) / x.shape[0]
    expected_db = (p - t).mean(axis=0)
    grads, _ = backward(model, x, t)
    got_dw, got_db = grads[0]
    assert np.allclose(got_dw, expected_dw, atol=1e-12)
    assert np.allclose(got_db, expected_db, atol=1e-12)


@pytest.mark.parametrize("shape_seed", [(2, (8,), 3, 0), ((3), (5, 4), 2, 1), (6, (16,), 5, 2)])
def test_gradient_check_small_nets(shape_seed):
    d, hidden, c, seed = shape_seed
    spec = NetSpec(input_dim=d, hidden=hidden, class_count=c, seed=seed)
    model = init_params(spec)
    rng = np.random.default_rng(seed + 10)
    x, t = _random_batch(rng, 5, d, c)
    report = gradient_check(model, x, t, step=1e-4)
    assert report.max_rel_err < 1e-3
    assert set(report.per_tensor) >= {"layer0.W", "layer0.b", "input"}


def test_input_gradient_rows_are_independent():
    spec = NetSpec(input_dim=3, hidden=(6,), class_count=3, seed=4)
    model = init_params(spec)
    rng = np.random.default_rng(5)
    x, t = _random_batch(rng, 6, 3, 3)
    g_full = input_gradient(model, x, t)
    x2 = x.copy()
    x2[4] += 0.37
    g_mod = input_gradient(model, x2, t)
    assert np.allclose(g_full[:4], g_mod[:4])
    assert np.allclose(g_full[5], g_mod[5])
    assert not np.allclose(g_full[4], g_mod[4])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def test_training_loss_decreases_on_separable_blobs():
    dataset, _ = _blob_dataset()
    spec = NetSpec(input_dim=2, hidden=(16,), class_count=3, seed=7)
    result = train_substitute(dataset, spec, TrainConfig(epochs=6, batch_size=64))
    for earlier, later in zip(result.train_losses[:5], result.train_losses[1:6]):
        assert later < earlier


def test_training_is_deterministic():
    dataset, _ = _blob_dataset(seed=3)
    spec = NetSpec(input_dim=2, hidden=(12,), class_count=3, seed=9)
    cfg = TrainConfig(epochs=4, batch_size=32, shuffle_seed=11)
    a = train_substitute(dataset, spec, cfg)
    b = train_substitute(dataset, spec, cfg)
    assert a.train_losses == b.train_losses
    assert a.val_losses == b.val_losses
    for wa, wb in zip(a.model.weights, b.model.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(a.model.biases, b.model.biases):
        assert np.array_equal(ba, bb)


def test_single_repeated_record_is_memorized():
    feats = np.tile(np.array([[0.3, 0.7]], dtype=np.float32), (32, 1))
    probs = np.tile(np.array([[0.0, 1.0, 0.0]], dtype=np.float32), (32, 1))
    dataset = LabeledDataset(feats, probs, np.zeros(32, dtype=np.uint32))
    spec = NetSpec(input_dim=2, hidden=(8,), class_count=3, seed=1)
    # Saturating the softmax needs logits to spread by several units,
    # and Adam moves at most learning_rate per step.
    result = train_substitute(
        dataset, spec,
        TrainConfig(epochs=1500, batch_size=32, learning_rate=1e-2, val_fraction=0.0),
    )
    assert result.train_losses[-1] < 1e-3


def test_zero_epochs_returns_untrained_net_at_chance():
    dataset, y = _blob_dataset(n=600, seed=5)
    spec = NetSpec(input_dim=2, hidden=(8,), class_count=3, seed=2)
    result = train_substitute(dataset, spec, TrainConfig(epochs=0))
    assert result.best_epoch is None and result.train_losses == []
    init = init_params(spec)
    for wa, wb in zip(result.model.weights, init.weights):
        assert np.array_equal(wa, wb)
    acc = (result.model.predict_class(dataset.features.astype(np.float64)) == y).mean()
    assert abs(acc - 1.0 / 3.0) < 0.1


def test_validation_split_and_best_epoch_bookkeeping():
    dataset, _ = _blob_dataset(n=200, seed=6)
    spec = NetSpec(input_dim=2, hidden=(8,), class_count=3, seed=3)
    result = train_substitute(dataset, spec, TrainConfig(epochs=5, val_fraction=0.2))
    assert result.val_size == 40
    assert len(result.val_losses) == 5
    assert result.best_epoch == int(np.argmin(result.val_losses))


def test_divergence_raises_training_error():
    dataset, _ = _blob_dataset(n=100, seed=8)
    spec = NetSpec(input_dim=2, hidden=(8,), class_count=3, seed=4)
    # Adam steps are bounded by the learning rate, so overflow needs a
    # rate near float64's ceiling; parameters hit inf within a few steps.
    with np.errstate(all="ignore"), pytest.raises(TrainingError):
        train_substitute(dataset, spec, TrainConfig(epochs=50, learning_rate=3e307))


def test_train_rejects_empty_and_mismatched_data():
    empty = LabeledDataset.empty(2, 3)
    spec = NetSpec(input_dim=2, hidden=(4,), class_count=3)
    with pytest.raises(UsageError):
        train_substitute(empty, spec, TrainConfig(epochs=1))
    dataset, _ = _blob_dataset(n=20)
    with pytest.raises(UsageError):
        train_substitute(dataset, NetSpec(input_dim=5, hidden=(4,), class_count=3),
                         TrainConfig(epochs=1))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    spec = NetSpec(input_dim=3, hidden=(7, 5), class_count=4, seed=21)
    model = init_params(spec)
    path = tmp_path / "m.bamm"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.spec == spec
    for wa, wb in zip(back.weights, model.weights):
        assert np.array_equal(wa, wb.astype(np.float32).astype(np.float64))
    # Parameters are stored in float32, so a second save is bit-identical.
    path2 = tmp_path / "m2.bamm"
    save_checkpoint(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    spec = NetSpec(input_dim=2, hidden=(3,), class_count=2, seed=0)
    path = tmp_path / "m.bamm"
    save_checkpoint(init_params(spec), path)
    raw = path.read_bytes()

    bad = tmp_path / "bad.bamm"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(UsageError):
        load_checkpoint(bad)

    short = tmp_path / "short.bamm"
    short.write_bytes(raw[:-4])
    with pytest.raises(UsageError):
        load_checkpoint(short)


def test_netspec_validation():
    with pytest.raises(UsageError):
        NetSpec(input_dim=0, hidden=(4,), class_count=3)
    with pytest.raises(UsageError):
        NetSpec(input_dim=2, hidden=(0,), class_count=3)
    with pytest.raises(UsageError):
        NetSpec(input_dim=2, hidden=(4,), class_count=1)
    with pytest.raises(UsageError):
        NetSpec(input_dim=2, hidden=(4,), class_count=3, activation="tanh")
