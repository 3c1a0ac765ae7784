"""Boundary-seeking evolutionary sampler.

Each generation the whole population is labeled by the oracle and
archived, the least-confident samples survive (low-confidence mode),
and survivors are jittered by a fraction of the population's own
per-feature spread to form the next generation. Confidence pressure
drives samples toward decision boundaries while the shrinking spread
anneals the step size, no gradients or crossover involved.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import Bounds, LabeledDataset, as_sample_batch, as_soft_label_batch, derive_rng
from .errors import OracleError, UsageError
from .oracle import Oracle

# Spans are floored so a feature the population has collapsed on keeps
# a nonzero mutation width.
SPAN_FLOOR = 1e-8

FITNESS_MODES = ("LC", "HC")


@dataclass(frozen=True)
class SamplerConfig:
    """Evolution settings: sizes, budget, mutation, and fitness direction.

    population_size is N, selection_size is k, generations is the
    number of labeled generations, so the oracle cost of a run is
    exactly N * generations.
    """

    population_size: int
    selection_size: int
    generations: int
    bounds: Bounds
    mutation_scale: float = 0.1
    fitness_mode: str = "LC"
    clip_to_bounds: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise UsageError("population_size must be >= 1")
        if not 1 <= self.selection_size <= self.population_size:
            raise UsageError("selection_size must lie in [1, population_size]")
        if self.generations < 1:
            raise UsageError("generations must be >= 1")
        if self.mutation_scale <= 0:
            raise UsageError("mutation_scale must be positive")
        if self.fitness_mode not in FITNESS_MODES:
            raise UsageError(f"fitness_mode must be one of {FITNESS_MODES}")


# ---------------------------------------------------------------------------
# evolution primitives
# ---------------------------------------------------------------------------

def fitness(probs, mode: str = "LC") -> np.ndarray:
    """Fitness of each soft label: -max(p) in LC mode, +max(p) in HC mode.

    Higher is fitter in both modes, so LC rewards samples the victim is
    unsure about and HC rewards confident ones.
    """
    if mode not in FITNESS_MODES:
        raise UsageError(f"fitness_mode must be one of {FITNESS_MODES}")
    arr = np.asarray(probs, dtype=np.float64)
    single = arr.ndim == 1
    arr = as_soft_label_batch(arr[None, :] if single else arr)
    top = arr.max(axis=1)
    out = -top if mode == "LC" else top
    return float(out[0]) if single else out


def _selection_order(probs: np.ndarray, k: int, mode: str) -> np.ndarray:
    """Indices of the k fittest rows, descending fitness, stable on ties."""
    scores = fitness(probs, mode)
    return np.argsort(-scores, kind="stable")[:k]


def select_top_k(samples, probs, k: int, mode: str = "LC") -> np.ndarray:
    """The k fittest samples, ordered by descending fitness.

    Ties keep the lower population index first, so selection is fully
    deterministic given its inputs.
    """
    x = as_sample_batch(samples)
    p = as_soft_label_batch(probs)
    if x.shape[0] != p.shape[0]:
        raise UsageError(f"{x.shape[0]} samples but {p.shape[0]} labels")
    if not 1 <= k <= x.shape[0]:
        raise UsageError(f"k must lie in [1, {x.shape[0]}], got {k}")
    return x[_selection_order(p, k, mode)]


def feature_spans(samples, floor: float = SPAN_FLOOR) -> np.ndarray:
    """Per-feature max minus min over the population, floored at `floor`."""
    x = as_sample_batch(samples)
    if x.shape[0] == 0:
        raise UsageError("spans need at least one sample")
    return np.maximum(x.max(axis=0) - x.min(axis=0), floor)


def mutate(x, spans, scale: float, rng: np.random.Generator,
           bounds: Bounds | None = None) -> np.ndarray:
    """Jitter each feature by scale * span * U(-1, 1).

    Args:
        x: one sample (d,) or a batch (n, d).
        spans: per-feature widths (d,).
        scale: mutation scale, gamma.
        rng: noise source.
        bounds: when given, the result is clamped into the box.

    Returns:
        A new array; the input is never modified.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = as_sample_batch(arr[None, :] if single else arr)
    w = np.asarray(spans, dtype=np.float64)
    if w.shape != (batch.shape[1],):
        raise UsageError(f"spans must be ({batch.shape[1]},), got {w.shape}")
    out = batch + rng.uniform(-1.0, 1.0, size=batch.shape) * (scale * w)
    if bounds is not None:
        out = np.clip(out, bounds.low, bounds.high)
    return out[0] if single else out


def next_generation(selected, size: int, spans, scale: float,
                    rng: np.random.Generator, bounds: Bounds | None = None) -> np.ndarray:
    """Mutate the survivors into a full population of `size` children.

    Each survivor parents floor(size / k) children; the size mod k
    leftover children go to the fittest survivors, one each, assuming
    `selected` is in descending-fitness order. Children are laid out
    parent-major: all of survivor 0's children first, then survivor 1's.
    """
    parents = as_sample_batch(selected)
    k = parents.shape[0]
    if k == 0:
        raise UsageError("need at least one survivor to breed from")
    if size < 1:
        raise UsageError("population size must be >= 1")
    counts = np.full(k, size // k, dtype=np.int64)
    counts[: size % k] += 1
    base = np.repeat(parents, counts, axis=0)
    return mutate(base, spans, scale, rng, bounds)


# ---------------------------------------------------------------------------
# per-generation statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationStats:
    """Confidence and coverage summary of one labeled generation."""

    generation: int
    mean_max_prob: float
    min_max_prob: float
    top2_gap_frac: float
    argmax_histogram: tuple[int, ...]
    distinct_argmax: int
    selected_mean_max_prob: float
    selected_distinct_argmax: int

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "mean_max_prob": self.mean_max_prob,
            "min_max_prob": self.min_max_prob,
            "top2_gap_frac": self.top2_gap_frac,
            "argmax_histogram": list(self.argmax_histogram),
            "distinct_argmax": self.distinct_argmax,
            "selected_mean_max_prob": self.selected_mean_max_prob,
            "selected_distinct_argmax": self.selected_distinct_argmax,
        }


def compute_generation_stats(generation: int, probs: np.ndarray,
                             selected_idx: np.ndarray) -> GenerationStats:
    """Summarize one generation from its labels and selection indices."""
    c = probs.shape[1]
    top = probs.max(axis=1)
    top2 = np.partition(probs, c - 2, axis=1)
    gap = top2[:, -1] - top2[:, -2]
    classes = np.argmax(probs, axis=1)
    hist = np.bincount(classes, minlength=c)
    sel_classes = classes[selected_idx]
    return GenerationStats(
        generation=generation,
        mean_max_prob=float(top.mean()),
        min_max_prob=float(top.min()),
        top2_gap_frac=float((gap < 0.1).mean()),
        argmax_histogram=tuple(int(v) for v in hist),
        distinct_argmax=int((hist > 0).sum()),
        selected_mean_max_prob=float(top[selected_idx].mean()),
        selected_distinct_argmax=int(np.unique(sel_classes).size),
    )


def write_stats_jsonl(stats: list[GenerationStats], path) -> None:
    """One JSON object per line, one line per generation."""
    with open(path, "w") as fh:
        for s in stats:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# the extraction loop
# ---------------------------------------------------------------------------

@dataclass
class ExtractionResult:
    """Everything one extraction run produced."""

    dataset: LabeledDataset
    stats: list[GenerationStats]
    queries: int


def run_extraction(oracle: Oracle, config: SamplerConfig,
                   failure_dump_dir=None) -> ExtractionResult:
    """Run the full evolutionary extraction and collect every labeled sample.

    Generation 0 is drawn uniformly over config.bounds. Every
    generation is labeled by the oracle in full and appended to the
    transfer dataset (soft labels, no filtering), then the top
    selection_size samples by fitness seed the next generation via
    span-scaled mutation. Each generation's randomness comes from its
    own stream derived from (config.seed, generation index), so results
    are reproducible bit for bit.

    Args:
        oracle: metered victim handle; must match config.bounds' width.
        config: evolution settings.
        failure_dump_dir: when the oracle dies mid-run, the partial
            dataset and an error report are written here before the
            error propagates.

    Returns:
        ExtractionResult; its dataset has exactly population_size *
        generations records and its queries counter matches.
    """
    bounds = config.bounds
    if bounds.dim != oracle.input_dim:
        raise UsageError(
            f"bounds are {bounds.dim}-dimensional but the oracle wants {oracle.input_dim}"
        )
    n, k = config.population_size, config.selection_size
    start_count = oracle.query_count

    init_rng = derive_rng(config.seed, 0)
    population = init_rng.uniform(bounds.low, bounds.high, size=(n, bounds.dim))

    feats: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    gens: list[np.ndarray] = []
    stats: list[GenerationStats] = []

    def partial_dataset() -> LabeledDataset:
        if not feats:
            return LabeledDataset.empty(bounds.dim, oracle.class_count)
        return LabeledDataset(
            np.concatenate(feats), np.concatenate(labels), np.concatenate(gens)
        )

    for t in range(config.generations):
        try:
            probs = oracle.predict_proba(population)
        except OracleError as exc:
            if failure_dump_dir is not None:
                _dump_failure(failure_dump_dir, partial_dataset(), stats, t, exc,
                              oracle.query_count - start_count)
            raise
        feats.append(population.astype(np.float32))
        labels.append(probs.astype(np.float32))
        gens.append(np.full(n, t, dtype=np.uint32))

        sel_idx = _selection_order(probs, k, config.fitness_mode)
        stats.append(compute_generation_stats(t, probs, sel_idx))

        if t + 1 < config.generations:
            spans = feature_spans(population)
            population = next_generation(
                population[sel_idx], n, spans, config.mutation_scale,
                derive_rng(config.seed, t + 1),
                bounds if config.clip_to_bounds else None,
            )

    return ExtractionResult(
        dataset=partial_dataset(),
        stats=stats,
        queries=oracle.query_count - start_count,
    )


def _dump_failure(out_dir, dataset: LabeledDataset, stats: list[GenerationStats],
                  generation: int, error: Exception, queries: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    dataset.save(os.path.join(out_dir, "dataset_partial.bamd"))
    write_stats_jsonl(stats, os.path.join(out_dir, "stats_partial.jsonl"))
    report = {
        "phase": "extraction",
        "failed_generation": generation,
        "completed_generations": len(stats),
        "queries": queries,
        "error": str(error),
    }
    with open(os.path.join(out_dir, "error_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
