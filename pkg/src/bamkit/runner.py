"""End-to-end experiment orchestration.

A run is described by one JSON config and a master seed. Every phase
(victim setup, extraction, substitute training, evaluation, attack)
draws its randomness from a sub-seed derived from the master seed and
a fixed phase label, so phases can be re-run or reordered without
disturbing each other, and the whole pipeline is reproducible bit for
bit. Artifacts land in a directory named by the config hash, never by
timestamp, so a re-run overwrites itself.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth
from .adversarial import AttackConfig, evaluate_transfer
from .core import Bounds, LabeledDataset, dataset_merge, derive_seed, derive_rng, write_json
from .errors import ConfigError, UsageError
from .metrics import EvalReport, accuracy, agreement, one_vs_rest_aucs, query_ratio
from .oracle import (
    Oracle,
    gaussian_mixture_oracle,
    linear_softmax_oracle,
    oracle_from_checkpoint,
    remote_oracle,
    train_victim,
)
from .sampler import ExtractionResult, SamplerConfig, run_extraction, write_stats_jsonl
from .substitute import (
    MlpClassifier,
    NetSpec,
    TrainConfig,
    save_checkpoint,
    train_substitute,
)

logger = logging.getLogger("bamkit")

# Phase labels for seed derivation. Values are part of the reproducibility
# contract: changing them changes every derived stream.
PHASE_VICTIM = 1
PHASE_EXTRACT = 2
PHASE_TRAIN = 3
PHASE_EVAL = 4
PHASE_ATTACK = 5

VICTIM_KINDS = ("linear-softmax", "gaussian-mixture", "trained-net", "checkpoint", "remote")
ABLATION_MODES = ("LC", "HC", "HC&LC", "half-half")
SWEEP_AXES = {
    "N": "population_size",
    "k": "selection_size",
    "I": "generations",
    "population_size": "population_size",
    "selection_size": "selection_size",
    "generations": "generations",
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VictimSpec:
    """What plays the victim: a backend kind plus its parameters."""

    kind: str
    input_dim: int
    class_count: int
    params: dict

    def __post_init__(self):
        if self.kind not in VICTIM_KINDS:
            raise ConfigError(f"victim kind must be one of {VICTIM_KINDS}, got {self.kind!r}")
        if self.input_dim < 1 or self.class_count < 2:
            raise ConfigError("victim needs input_dim >= 1 and class_count >= 2")


@dataclass(frozen=True)
class EvalSpec:
    """Evaluation-set size and the reference size behind query_ratio."""

    test_size: int = 1000
    reference_size: int = 50000

    def __post_init__(self):
        if self.test_size < 1 or self.reference_size < 1:
            raise ConfigError("test_size and reference_size must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved description of one pipeline run."""

    seed: int
    victim: VictimSpec
    sampler: SamplerConfig
    hidden: tuple[int, ...]
    train: TrainConfig
    attack: AttackConfig
    evaluation: EvalSpec
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        s = self.sampler
        a = self.attack
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "victim": {
                "kind": self.victim.kind,
                "input_dim": self.victim.input_dim,
                "class_count": self.victim.class_count,
                "params": self.victim.params,
            },
            "sampler": {
                "population_size": s.population_size,
                "selection_size": s.selection_size,
                "generations": s.generations,
                "mutation_scale": s.mutation_scale,
                "fitness_mode": s.fitness_mode,
                "clip_to_bounds": s.clip_to_bounds,
                "init_low": list(s.bounds.low),
                "init_high": list(s.bounds.high),
            },
            "substitute": {
                "hidden": list(self.hidden),
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "learning_rate": self.train.learning_rate,
                "val_fraction": self.train.val_fraction,
            },
            "attack": {
                "epsilon": a.epsilon,
                "steps": a.steps,
                "step_size": a.step_size,
                "random_start": a.random_start,
                "clamp_low": a.clamp_low,
                "clamp_high": a.clamp_high,
            },
            "evaluation": {
                "test_size": self.evaluation.test_size,
                "reference_size": self.evaluation.reference_size,
            },
        }


def _section(raw: dict, name: str, defaults: dict, required: tuple[str, ...] = ()) -> dict:
    got = raw.get(name, {})
    if not isinstance(got, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(got) - set(defaults) - set(required)
    if unknown:
        raise ConfigError(f"config section {name!r} has unknown keys: {sorted(unknown)}")
    missing = [k for k in required if k not in got]
    if missing:
        raise ConfigError(f"config section {name!r} is missing keys: {missing}")
    merged = dict(defaults)
    merged.update(got)
    return merged


def _broadcast_bound(value, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ConfigError(f"{name} must be a scalar or a list of length {dim}")
    return arr


def config_from_dict(raw: dict) -> RunConfig:
    """Parse and validate a config dict, rejecting unknown keys.

    Raises ConfigError on structural problems, inconsistent dimensions,
    or out-of-range values.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    top_known = {"seed", "out_dir", "victim", "sampler", "substitute", "attack", "evaluation"}
    unknown = set(raw) - top_known
    if unknown:
        raise ConfigError(f"config has unknown top-level keys: {sorted(unknown)}")

    vic = _section(raw, "victim", {"params": {}}, required=("kind", "input_dim", "class_count"))
    victim = VictimSpec(
        kind=vic["kind"],
        input_dim=int(vic["input_dim"]),
        class_count=int(vic["class_count"]),
        params=dict(vic["params"]),
    )

    smp = _section(
        raw,
        "sampler",
        {
            "mutation_scale": 0.1,
            "fitness_mode": "LC",
            "clip_to_bounds": False,
            "init_low": 0.0,
            "init_high": 1.0,
        },
        required=("population_size", "selection_size", "generations"),
    )
    bounds = Bounds(
        _broadcast_bound(smp["init_low"], victim.input_dim, "sampler.init_low"),
        _broadcast_bound(smp["init_high"], victim.input_dim, "sampler.init_high"),
    )
    try:
        sampler = SamplerConfig(
            population_size=int(smp["population_size"]),
            selection_size=int(smp["selection_size"]),
            generations=int(smp["generations"]),
            bounds=bounds,
            mutation_scale=float(smp["mutation_scale"]),
            fitness_mode=str(smp["fitness_mode"]),
            clip_to_bounds=bool(smp["clip_to_bounds"]),
        )
    except UsageError as exc:
        raise ConfigError(f"sampler: {exc}") from exc

    sub = _section(
        raw,
        "substitute",
        {
            "hidden": [32, 32],
            "epochs": 30,
            "batch_size": 256,
            "learning_rate": 1e-3,
            "val_fraction": 0.1,
        },
    )
    try:
        train_cfg = TrainConfig(
            epochs=int(sub["epochs"]),
            batch_size=int(sub["batch_size"]),
            learning_rate=float(sub["learning_rate"]),
            val_fraction=float(sub["val_fraction"]),
        )
    except UsageError as exc:
        raise ConfigError(f"substitute: {exc}") from exc

    atk = _section(
        raw,
        "attack",
        {
            "epsilon": 30.0 / 255.0,
            "steps": 10,
            "step_size": None,
            "random_start": True,
            "clamp_to_bounds": False,
            "clamp_low": None,
            "clamp_high": None,
        },
    )
    clamp_low, clamp_high = atk["clamp_low"], atk["clamp_high"]
    if atk["clamp_to_bounds"]:
        if clamp_low is not None or clamp_high is not None:
            raise ConfigError("attack: give clamp_to_bounds or explicit clamps, not both")
        clamp_low = float(bounds.low.min())
        clamp_high = float(bounds.high.max())
    try:
        attack = AttackConfig(
            epsilon=float(atk["epsilon"]),
            steps=int(atk["steps"]),
            step_size=None if atk["step_size"] is None else float(atk["step_size"]),
            random_start=bool(atk["random_start"]),
            clamp_low=clamp_low,
            clamp_high=clamp_high,
        )
    except UsageError as exc:
        raise ConfigError(f"attack: {exc}") from exc

    ev = _section(raw, "evaluation", {"test_size": 1000, "reference_size": 50000})
    evaluation = EvalSpec(test_size=int(ev["test_size"]), reference_size=int(ev["reference_size"]))

    hidden = tuple(int(h) for h in sub["hidden"])
    if not hidden or any(h < 1 for h in hidden):
        raise ConfigError("substitute.hidden must be a non-empty list of positive widths")

    return RunConfig(
        seed=int(raw.get("seed", 0)),
        victim=victim,
        sampler=sampler,
        hidden=hidden,
        train=train_cfg,
        attack=attack,
        evaluation=evaluation,
        out_dir=str(raw.get("out_dir", "runs")),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_hash(config: RunConfig) -> str:
    """Digest of everything that affects results (out_dir excluded)."""
    payload = config.to_dict()
    payload.pop("out_dir")
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def artifact_dir(config: RunConfig, out_root=None) -> Path:
    root = Path(out_root) if out_root is not None else Path(config.out_dir)
    return root / config_hash(config)[:12]


# ---------------------------------------------------------------------------
# victim construction
# ---------------------------------------------------------------------------

@dataclass
class BuiltVictim:
    """A ready oracle plus whatever is known about where it came from."""

    oracle: Oracle
    model: MlpClassifier | None = None
    heldout_accuracy: float | None = None
    task_seed: int | None = None
    data_params: dict | None = None


def _victim_params(spec: VictimSpec) -> tuple:
    """Resolve analytic victim parameters, presets included."""
    p = spec.params
    if spec.kind == "linear-softmax":
        if "preset" in p:
            scale = float(p.get("scale", 20.0 if p["preset"] == "two-class" else 12.0))
            if p["preset"] == "two-class":
                w, b = synth.two_class_linear_params(scale)
            elif p["preset"] == "junction":
                w, b = synth.junction_victim_params(scale, spec.class_count)
            else:
                raise ConfigError(f"unknown linear-softmax preset {p['preset']!r}")
        else:
            try:
                w, b = np.asarray(p["weights"], dtype=np.float64), np.asarray(
                    p["biases"], dtype=np.float64
                )
            except KeyError as exc:
                raise ConfigError("linear-softmax needs weights/biases or a preset") from exc
        if w.shape != (spec.class_count, spec.input_dim):
            raise ConfigError(
                f"victim weights are {w.shape}, expected "
                f"{(spec.class_count, spec.input_dim)}"
            )
        return w, b
    if spec.kind == "gaussian-mixture":
        if "preset" in p:
            if p["preset"] != "triangle":
                raise ConfigError(f"unknown gaussian-mixture preset {p['preset']!r}")
            means, covs, priors = synth.triangle_mixture_params(
                radius=float(p.get("radius", 0.25)), spread=float(p.get("spread", 0.12))
            )
        else:
            try:
                means = np.asarray(p["means"], dtype=np.float64)
                covs = np.asarray(p["covariances"], dtype=np.float64)
                priors = np.asarray(p["priors"], dtype=np.float64)
            except KeyError as exc:
                raise ConfigError(
                    "gaussian-mixture needs means/covariances/priors or a preset"
                ) from exc
        if means.shape != (spec.class_count, spec.input_dim):
            raise ConfigError(
                f"victim means are {means.shape}, expected "
                f"{(spec.class_count, spec.input_dim)}"
            )
        return means, covs, priors
    raise ConfigError(f"{spec.kind} victims have no analytic parameters")


def build_victim(spec: VictimSpec, master_seed: int,
                 oracle_url: str | None = None) -> BuiltVictim:
    """Stand up the victim oracle described by the spec.

    oracle_url, when given, overrides the spec and connects to a remote
    server instead; the server's advertised dimensions must match the
    config's.
    """
    if oracle_url is not None:
        spec = VictimSpec("remote", spec.input_dim, spec.class_count,
                          {"url": oracle_url})
    if spec.kind == "linear-softmax":
        w, b = _victim_params(spec)
        return BuiltVictim(oracle=linear_softmax_oracle(w, b))
    if spec.kind == "gaussian-mixture":
        means, covs, priors = _victim_params(spec)
        return BuiltVictim(oracle=gaussian_mixture_oracle(means, covs, priors))
    if spec.kind == "checkpoint":
        path = spec.params.get("path")
        if not path:
            raise ConfigError("checkpoint victim needs a params.path")
        oracle = oracle_from_checkpoint(path)
        if oracle.input_dim != spec.input_dim or oracle.class_count != spec.class_count:
            raise ConfigError(
                f"checkpoint is {oracle.input_dim}d/{oracle.class_count}c but config says "
                f"{spec.input_dim}d/{spec.class_count}c"
            )
        return BuiltVictim(oracle=oracle)
    if spec.kind == "remote":
        url = spec.params.get("url")
        if not url:
            raise ConfigError("remote victim needs a params.url (or pass --oracle-url)")
        oracle = remote_oracle(url)
        if oracle.input_dim != spec.input_dim or oracle.class_count != spec.class_count:
            raise ConfigError(
                f"server is {oracle.input_dim}d/{oracle.class_count}c but config says "
                f"{spec.input_dim}d/{spec.class_count}c"
            )
        return BuiltVictim(oracle=oracle)
    # trained-net: fit a fresh network on generated data.
    p = dict(spec.params)
    data = dict(p.pop("data", {}))
    data_kind = data.pop("kind", "blobs")
    if data_kind != "blobs":
        raise ConfigError(f"unknown victim data kind {data_kind!r}")
    train_n = int(data.pop("train_n", 4000))
    spread = float(data.pop("spread", 0.08))
    clip = data.pop("clip", None)
    if data:
        raise ConfigError(f"victim data has unknown keys: {sorted(data)}")
    hidden = tuple(int(h) for h in p.pop("hidden", (32, 32)))
    epochs = int(p.pop("epochs", 40))
    batch_size = int(p.pop("batch_size", 128))
    # Victim training sets are small, so favor a hotter rate than the
    # substitute default.
    learning_rate = float(p.pop("learning_rate", 5e-3))
    holdout = float(p.pop("holdout_fraction", 0.2))
    if p:
        raise ConfigError(f"trained-net victim has unknown params: {sorted(p)}")

    task_seed = derive_seed(master_seed, PHASE_VICTIM, 0)
    sample_seed = derive_seed(master_seed, PHASE_VICTIM, 1)
    net_seed = derive_seed(master_seed, PHASE_VICTIM, 2)
    clip_pair = tuple(clip) if clip is not None else None
    x, y = synth.sample_prototype_blobs(
        train_n, spec.class_count, spec.input_dim, spread, task_seed, sample_seed,
        clip=clip_pair,
    )
    trained = train_victim(
        x, y,
        hidden=hidden,
        class_count=spec.class_count,
        train_cfg=TrainConfig(
            epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
            shuffle_seed=net_seed,
        ),
        seed=net_seed,
        holdout_fraction=holdout,
    )
    logger.info("victim trained: held-out accuracy %.4f", trained.heldout_accuracy)
    return BuiltVictim(
        oracle=trained.oracle,
        model=trained.model,
        heldout_accuracy=trained.heldout_accuracy,
        task_seed=task_seed,
        data_params={"spread": spread, "clip": clip_pair},
    )


def make_test_set(built: BuiltVictim, config: RunConfig, sample_seed: int):
    """Evaluation points plus truth labels when the task defines them.

    Victims trained on generated data are tested on fresh draws from
    the same task (real ground truth). Analytic, checkpoint, and remote
    victims are tested on uniform draws over the sampler bounds, where
    the victim's own decision is the reference and truth is None.
    """
    n = config.evaluation.test_size
    if built.task_seed is not None:
        x, y = synth.sample_prototype_blobs(
            n, config.victim.class_count, config.victim.input_dim,
            built.data_params["spread"], built.task_seed, sample_seed,
            clip=built.data_params["clip"],
        )
        return x, y
    bounds = config.sampler.bounds
    x = derive_rng(sample_seed, 2).uniform(bounds.low, bounds.high, size=(n, bounds.dim))
    return x, None


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    """Report dict plus where the artifacts were written."""

    report: dict
    out_path: Path
    dataset: LabeledDataset
    model: MlpClassifier


def _evaluate(model: MlpClassifier, built: BuiltVictim, x_test, truth,
              extraction_queries: int, config: RunConfig) -> EvalReport:
    victim_probs = built.oracle.predict_proba(x_test)
    sub_probs = model.predict_proba(x_test)
    agree = agreement(sub_probs, victim_probs)
    if truth is not None:
        acc = accuracy(sub_probs, truth)
        vic_acc = accuracy(victim_probs, truth)
        auc_truth = np.asarray(truth)
    else:
        # The victim is the data-generating truth for analytic backends.
        acc = agree
        vic_acc = 1.0
        auc_truth = np.argmax(victim_probs, axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        per_class = one_vs_rest_aucs(sub_probs, auc_truth)
    return EvalReport(
        accuracy=acc,
        victim_accuracy=vic_acc,
        agreement=agree,
        macro_auc=float(np.mean(list(per_class.values()))),
        per_class_auc=per_class,
        query_count=extraction_queries,
        query_ratio=query_ratio(extraction_queries, config.evaluation.reference_size),
    )


def run_full(config: RunConfig, out_root=None, oracle_url: str | None = None) -> RunOutcome:
    """Execute victim setup, extraction, training, evaluation, and attack.

    Writes config.json, dataset.bamd, stats.jsonl, substitute.bamm,
    report.json (and victim.bamm for freshly trained victims) into the
    config-hash-named artifact directory.

    Args:
        config: resolved run configuration.
        out_root: overrides config.out_dir as the artifact root.
        oracle_url: overrides the victim with a remote server.

    Returns:
        RunOutcome with the report dict, artifact path, transfer set,
        and trained substitute.
    """
    out = artifact_dir(config, out_root)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config.to_dict())
    master = config.seed
    timings: dict[str, float] = {}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    built = build_victim(config.victim, master, oracle_url)
    timings["victim"] = time.perf_counter() - t0
    if built.model is not None and config.victim.kind == "trained-net":
        save_checkpoint(built.model, out / "victim.bamm")

    t0 = time.perf_counter()
    sampler_cfg = dataclasses.replace(
        config.sampler, seed=derive_seed(master, PHASE_EXTRACT)
    )
    extraction = run_extraction(built.oracle, sampler_cfg, failure_dump_dir=out)
    timings["extraction"] = time.perf_counter() - t0
    extraction.dataset.save(out / "dataset.bamd")
    write_stats_jsonl(extraction.stats, out / "stats.jsonl")
    logger.info(
        "extraction done: %d records, %d queries, final mean max-prob %.4f",
        len(extraction.dataset), extraction.queries, extraction.stats[-1].mean_max_prob,
    )

    t0 = time.perf_counter()
    net = NetSpec(
        input_dim=config.victim.input_dim,
        hidden=config.hidden,
        class_count=config.victim.class_count,
        seed=derive_seed(master, PHASE_TRAIN),
    )
    train_cfg = dataclasses.replace(
        config.train, shuffle_seed=derive_seed(master, PHASE_TRAIN, 1)
    )
    trained = train_substitute(extraction.dataset, net, train_cfg)
    timings["training"] = time.perf_counter() - t0
    save_checkpoint(trained.model, out / "substitute.bamm")
    logger.info(
        "substitute trained: best epoch %s, final train loss %.5f",
        trained.best_epoch,
        trained.train_losses[-1] if trained.train_losses else float("nan"),
    )

    t0 = time.perf_counter()
    eval_queries_start = built.oracle.query_count
    x_test, truth = make_test_set(built, config, derive_seed(master, PHASE_EVAL))
    eval_report = _evaluate(trained.model, built, x_test, truth,
                            extraction.queries, config)
    timings["evaluation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    transfer = evaluate_transfer(
        trained.model, built.oracle, x_test, config.attack,
        seed=derive_seed(master, PHASE_ATTACK), truth=truth,
    )
    timings["attack"] = time.perf_counter() - t0
    eval_queries = built.oracle.query_count - eval_queries_start
    timings["total"] = time.perf_counter() - t_start

    report = {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "victim": {
            "backend": built.oracle.backend_name,
            "heldout_accuracy": built.heldout_accuracy,
        },
        "extraction": {
            "records": len(extraction.dataset),
            "queries": extraction.queries,
            "generations": [s.to_dict() for s in extraction.stats],
        },
        "training": {
            "train_losses": trained.train_losses,
            "val_losses": trained.val_losses,
            "best_epoch": trained.best_epoch,
            "val_size": trained.val_size,
        },
        "evaluation": eval_report.to_dict(),
        "attack": transfer.to_dict(),
        "queries": {
            "extraction": extraction.queries,
            "evaluation": eval_queries,
            "total": built.oracle.query_count,
        },
        # Timings are wall-clock and excluded from determinism claims.
        "timings_sec": timings,
    }
    write_json(out / "report.json", report)
    logger.info(
        "run complete: agreement %.4f, accuracy %.4f, transfer ASR %.4f -> %s",
        eval_report.agreement, eval_report.accuracy, transfer.asr_transfer, out,
    )
    return RunOutcome(report=report, out_path=out, dataset=extraction.dataset,
                      model=trained.model)


# ---------------------------------------------------------------------------
# ablation and sweep
# ---------------------------------------------------------------------------

def _train_and_score(dataset: LabeledDataset, built: BuiltVictim, config: RunConfig,
                     x_test, truth, queries: int) -> dict:
    net = NetSpec(
        input_dim=config.victim.input_dim,
        hidden=config.hidden,
        class_count=config.victim.class_count,
        seed=derive_seed(config.seed, PHASE_TRAIN),
    )
    train_cfg = dataclasses.replace(
        config.train, shuffle_seed=derive_seed(config.seed, PHASE_TRAIN, 1)
    )
    trained = train_substitute(dataset, net, train_cfg)
    eval_report = _evaluate(trained.model, built, x_test, truth, queries, config)
    transfer = evaluate_transfer(
        trained.model, built.oracle, x_test, config.attack,
        seed=derive_seed(config.seed, PHASE_ATTACK), truth=truth,
    )
    return {
        "records": len(dataset),
        "queries": queries,
        "accuracy": eval_report.accuracy,
        "agreement": eval_report.agreement,
        "macro_auc": eval_report.macro_auc,
        "asr_transfer": transfer.asr_transfer,
        "asr_whitebox": transfer.asr_whitebox,
        "asr_noise": transfer.asr_noise,
    }


def run_ablation(config: RunConfig, modes=ABLATION_MODES, out_root=None,
                 oracle_url: str | None = None) -> dict:
    """Compare fitness-direction variants under one victim and test set.

    LC and HC run the full budget with a shared extraction seed. HC&LC
    merges both full runs (double budget, queries reported as the sum).
    half-half merges an LC and an HC run of ceil(I/2) generations each.
    Every arm trains the same architecture with the same training seed
    and is scored on the same evaluation set.
    """
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {mode!r}, pick from {ABLATION_MODES}")
    out = artifact_dir(config, out_root)
    out.mkdir(parents=True, exist_ok=True)
    master = config.seed
    built = build_victim(config.victim, master, oracle_url)
    x_test, truth = make_test_set(built, config, derive_seed(master, PHASE_EVAL))
    extract_seed = derive_seed(master, PHASE_EXTRACT)

    full_runs: dict[str, ExtractionResult] = {}

    def full_run_for(mode: str) -> ExtractionResult:
        if mode not in full_runs:
            cfg = dataclasses.replace(config.sampler, fitness_mode=mode, seed=extract_seed)
            full_runs[mode] = run_extraction(built.oracle, cfg)
        return full_runs[mode]

    arms: dict[str, dict] = {}
    for mode in modes:
        if mode in ("LC", "HC"):
            res = full_run_for(mode)
            dataset, queries = res.dataset, res.queries
        elif mode == "HC&LC":
            lc, hc = full_run_for("LC"), full_run_for("HC")
            dataset = dataset_merge(lc.dataset, hc.dataset)
            queries = lc.queries + hc.queries
        else:  # half-half
            gens = math.ceil(config.sampler.generations / 2)
            lc_cfg = dataclasses.replace(
                config.sampler, fitness_mode="LC", generations=gens, seed=extract_seed
            )
            hc_cfg = dataclasses.replace(
                config.sampler, fitness_mode="HC", generations=gens,
                seed=derive_seed(master, PHASE_EXTRACT, 1),
            )
            lc = run_extraction(built.oracle, lc_cfg)
            hc = run_extraction(built.oracle, hc_cfg)
            dataset = dataset_merge(lc.dataset, hc.dataset)
            queries = lc.queries + hc.queries
        arms[mode] = _train_and_score(dataset, built, config, x_test, truth, queries)
        logger.info(
            "ablation %s: agreement %.4f, queries %d",
            mode, arms[mode]["agreement"], queries,
        )

    report = {
        "config_hash": config_hash(config),
        "victim": {
            "backend": built.oracle.backend_name,
            "heldout_accuracy": built.heldout_accuracy,
        },
        "test_size": int(np.asarray(x_test).shape[0]),
        "modes": arms,
    }
    write_json(out / "ablation.json", report)
    return report


def run_sweep(config: RunConfig, axis: str, values, out_root=None,
              oracle_url: str | None = None) -> list[dict]:
    """Re-run extract/train/evaluate along one sampler axis.

    axis is one of N, k, I (or the spelled-out field names). Invalid
    combinations, such as a selection size above the population size,
    are skipped with a warning. Rows go to sweep.csv in the artifact
    directory and are returned as dicts.
    """
    field = SWEEP_AXES.get(axis)
    if field is None:
        raise ConfigError(f"unknown sweep axis {axis!r}, pick from {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = artifact_dir(config, out_root)
    out.mkdir(parents=True, exist_ok=True)
    master = config.seed
    built = build_victim(config.victim, master, oracle_url)
    x_test, truth = make_test_set(built, config, derive_seed(master, PHASE_EVAL))
    extract_seed = derive_seed(master, PHASE_EXTRACT)

    rows: list[dict] = []
    for value in values:
        try:
            cfg = dataclasses.replace(
                config.sampler, **{field: int(value)}, seed=extract_seed
            )
        except UsageError as exc:
            warnings.warn(f"sweep {field}={value} skipped: {exc}", stacklevel=2)
            continue
        res = run_extraction(built.oracle, cfg)
        net = NetSpec(
            input_dim=config.victim.input_dim,
            hidden=config.hidden,
            class_count=config.victim.class_count,
            seed=derive_seed(master, PHASE_TRAIN),
        )
        train_cfg = dataclasses.replace(
            config.train, shuffle_seed=derive_seed(master, PHASE_TRAIN, 1)
        )
        trained = train_substitute(res.dataset, net, train_cfg)
        eval_report = _evaluate(trained.model, built, x_test, truth, res.queries, config)
        rows.append({
            "axis": field,
            "value": int(value),
            "queries": res.queries,
            "records": len(res.dataset),
            "accuracy": eval_report.accuracy,
            "agreement": eval_report.agreement,
            "macro_auc": eval_report.macro_auc,
        })
        logger.info("sweep %s=%s: agreement %.4f", field, value, eval_report.agreement)

    _write_sweep_csv(out / "sweep.csv", rows)
    return rows


def _write_sweep_csv(path, rows: list[dict]) -> None:
    columns = ["axis", "value", "queries", "records", "accuracy", "agreement", "macro_auc"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
