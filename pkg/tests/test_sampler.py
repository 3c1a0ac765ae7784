"""Evolutionary sampler: primitives, the extraction loop, and its stats."""

import json

import numpy as np
import pytest

from bamkit.core import Bounds
from bamkit.errors import OracleError, UsageError
from bamkit.oracle import Oracle, linear_softmax_oracle
from bamkit.sampler import (
    SPAN_FLOOR,
    SamplerConfig,
    feature_spans,
    fitness,
    mutate,
    next_generation,
    run_extraction,
    select_top_k,
    write_stats_jsonl,
)
from bamkit import synth

UNIT_BOX = Bounds(np.zeros(2), np.ones(2))


def _two_class_oracle():
    w, b = synth.two_class_linear_params(20.0)
    return linear_softmax_oracle(w, b)


# ---------------------------------------------------------------------------
# fitness and selection
# ---------------------------------------------------------------------------

def test_fitness_prefers_uncertain_samples_in_lc_mode():
    assert fitness([0.5, 0.5], "LC") > fitness([0.9, 0.1], "LC")
    assert fitness([0.9, 0.1], "HC") > fitness([0.5, 0.5], "HC")
    assert fitness([0.25, 0.75], "LC") == -0.75


def test_hc_is_the_negation_of_lc():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0.1, 1.0, size=(50, 4))
    probs = raw / raw.sum(axis=1, keepdims=True)
    assert np.array_equal(fitness(probs, "HC"), -fitness(probs, "LC"))


def test_fitness_rejects_unknown_mode():
    with pytest.raises(UsageError):
        fitness([0.5, 0.5], "XX")


def test_select_top_k_orders_by_confidence():
    samples = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    probs = np.array([[0.9, 0.1], [0.55, 0.45], [0.7, 0.3], [0.99, 0.01]])
    lc = select_top_k(samples, probs, 2, "LC")
    assert np.array_equal(lc, samples[[1, 2]])
    hc = select_top_k(samples, probs, 2, "HC")
    assert np.array_equal(hc, samples[[3, 0]])


def test_select_top_k_breaks_ties_by_index():
    samples = np.arange(8).reshape(4, 2).astype(float)
    probs = np.array([[0.6, 0.4]] * 4)
    out = select_top_k(samples, probs, 3, "LC")
    assert np.array_equal(out, samples[:3])


def test_select_top_k_is_a_population_subset():
    rng = np.random.default_rng(1)
    samples = rng.uniform(size=(30, 3))
    raw = rng.uniform(0.1, 1.0, size=(30, 2))
    probs = raw / raw.sum(axis=1, keepdims=True)
    chosen = select_top_k(samples, probs, 10, "LC")
    rows = {tuple(r) for r in samples}
    assert all(tuple(r) in rows for r in chosen)
    with pytest.raises(UsageError):
        select_top_k(samples, probs, 31, "LC")


# ---------------------------------------------------------------------------
# spans and mutation
# ---------------------------------------------------------------------------

def test_feature_spans_basic_and_floor():
    x = np.array([[0.0, 1.5], [2.0, 1.5], [1.0, 1.5]])
    spans = feature_spans(x)
    assert spans[0] == 2.0
    # A collapsed feature keeps the floor width instead of zero.
    assert spans[1] == SPAN_FLOOR


def test_mutate_stays_within_scaled_spans():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(200, 3))
    spans = np.array([1.0, 0.5, 2.0])
    out = mutate(x, spans, 0.1, rng)
    dev = np.abs(out - x)
    assert (dev <= 0.1 * spans + 1e-12).all()
    assert dev.max() > 0.0


def test_mutate_zero_scale_is_identity():
    rng = np.random.default_rng(3)
    x = np.array([0.3, 0.4])
    out = mutate(x, np.array([1.0, 1.0]), 0.0, rng)
    assert np.array_equal(out, x)
    assert out.shape == (2,)


def test_mutate_clamps_to_bounds():
    rng = np.random.default_rng(4)
    x = np.full((50, 2), 0.99)
    out = mutate(x, np.array([1.0, 1.0]), 0.5, rng, bounds=UNIT_BOX)
    assert out.max() <= 1.0 and out.min() >= 0.0


def test_next_generation_child_counts_favor_fittest():
    rng = np.random.default_rng(5)
    parents = np.array([[0.0, 0.0], [10.0, 10.0], [20.0, 20.0]])
    spans = np.array([0.1, 0.1])
    children = next_generation(parents, 8, spans, 0.1, rng)
    assert children.shape == (8, 2)
    # 8 = 3 + 3 + 2: the two extras go to the first (fittest) parents,
    # and children are laid out parent-major.
    owner = np.repeat([0, 1, 2], [3, 3, 2])
    assert np.abs(children - parents[owner]).max() <= 0.1 * 0.1 + 1e-12


def test_next_generation_rejects_bad_sizes():
    with pytest.raises(UsageError):
        next_generation(np.zeros((0, 2)), 5, np.ones(2), 0.1, np.random.default_rng(0))
    with pytest.raises(UsageError):
        next_generation(np.zeros((2, 2)), 0, np.ones(2), 0.1, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# extraction loop
# ---------------------------------------------------------------------------

def _config(**kw):
    base = dict(population_size=300, selection_size=90, generations=12,
                bounds=UNIT_BOX, seed=13)
    base.update(kw)
    return SamplerConfig(**base)


def test_run_extraction_accounting_and_generations():
    oracle = _two_class_oracle()
    config = _config()
    result = run_extraction(oracle, config)
    n, i = config.population_size, config.generations
    assert len(result.dataset) == n * i
    assert result.queries == n * i
    assert oracle.query_count == n * i
    gens = result.dataset.generations
    assert np.array_equal(np.unique(gens), np.arange(i))
    assert all((gens == t).sum() == n for t in range(i))
    for t, s in enumerate(result.stats):
        assert s.generation == t
        assert sum(s.argmax_histogram) == n
        assert 0.0 <= s.top2_gap_frac <= 1.0
        assert s.min_max_prob <= s.mean_max_prob


def test_run_extraction_is_deterministic():
    config = _config(seed=21)
    a = run_extraction(_two_class_oracle(), config)
    b = run_extraction(_two_class_oracle(), config)
    assert np.array_equal(a.dataset.features, b.dataset.features)
    assert np.array_equal(a.dataset.probs, b.dataset.probs)
    assert [s.to_dict() for s in a.stats] == [s.to_dict() for s in b.stats]
    c = run_extraction(_two_class_oracle(), _config(seed=22))
    assert not np.array_equal(a.dataset.features, c.dataset.features)


def test_lc_run_drives_confidence_down():
    result = run_extraction(_two_class_oracle(), _config(generations=30, seed=3))
    # Selection pre-filters for low confidence, so the population mean is the
    # signal that actually decays across generations.
    pop = [s.mean_max_prob for s in result.stats]
    assert np.mean(pop[:3]) - np.mean(pop[20:]) >= 0.2
    # Noise allowance: no generation may rebound hard above its predecessor.
    for prev, cur in zip(pop, pop[1:]):
        assert cur <= prev + 0.05
    sel = [s.selected_mean_max_prob for s in result.stats]
    assert sel[-1] < 0.51


def test_hc_run_drives_confidence_up():
    result = run_extraction(
        _two_class_oracle(), _config(generations=20, fitness_mode="HC", seed=3)
    )
    assert result.stats[-1].mean_max_prob > result.stats[0].mean_max_prob
    assert result.stats[-1].mean_max_prob > 0.99


def test_population_starts_inside_bounds_and_clip_keeps_it_there():
    bounds = Bounds(np.array([-1.0, 2.0]), np.array([0.0, 5.0]))
    w = np.array([[3.0, 1.0], [0.0, 0.0]])
    oracle = linear_softmax_oracle(w, np.array([1.0, 0.0]))
    config = _config(bounds=bounds, clip_to_bounds=True, generations=8)
    result = run_extraction(oracle, config)
    feats = result.dataset.features
    assert feats[:, 0].min() >= -1.0 - 1e-6 and feats[:, 0].max() <= 0.0 + 1e-6
    assert feats[:, 1].min() >= 2.0 - 1e-6 and feats[:, 1].max() <= 5.0 + 1e-6


class _FlakyBackend:
    """Fails with a transport error after a fixed number of calls."""

    name = "flaky"
    input_dim = 2
    class_count = 2

    def __init__(self, good_calls):
        self.remaining = good_calls

    def predict(self, x):
        if self.remaining == 0:
            raise OracleError("backend went away")
        self.remaining -= 1
        z = np.column_stack([x[:, 0], -x[:, 0]])
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def test_mid_run_failure_dumps_partial_dataset(tmp_path):
    oracle = Oracle(_FlakyBackend(good_calls=3))
    config = _config(population_size=50, selection_size=10, generations=10)
    with pytest.raises(OracleError):
        run_extraction(oracle, config, failure_dump_dir=tmp_path)
    partial = tmp_path / "dataset_partial.bamd"
    assert partial.exists()
    from bamkit.core import LabeledDataset

    ds = LabeledDataset.load(partial)
    assert len(ds) == 3 * 50
    report = json.loads((tmp_path / "error_report.json").read_text())
    assert report["failed_generation"] == 3
    assert report["queries"] == 150


def test_stats_jsonl_round_trip(tmp_path):
    result = run_extraction(_two_class_oracle(), _config(generations=4))
    path = tmp_path / "stats.jsonl"
    write_stats_jsonl(result.stats, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 4
    parsed = [json.loads(line) for line in lines]
    assert parsed == [s.to_dict() for s in result.stats]


def test_sampler_config_validation():
    with pytest.raises(UsageError):
        _config(selection_size=1000)
    with pytest.raises(UsageError):
        _config(generations=0)
    with pytest.raises(UsageError):
        _config(mutation_scale=0.0)
    with pytest.raises(UsageError):
        _config(fitness_mode="best")
