"""Untargeted max-norm PGD on the substitute, scored against the victim.

The attack never queries the victim while crafting: gradients come
from the substitute, and the victim is only consulted afterwards to
label clean and perturbed points. Transfer rate is reported next to a
whitebox reference (the substitute attacking itself) and a random
sign-noise floor at the same budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import argmax_batch, as_sample_batch, derive_rng
from .errors import UsageError
from .oracle import Oracle
from .substitute import MlpClassifier, input_gradient

# Allowed float slack when checking the perturbation budget.
BUDGET_SLACK = 1e-6


@dataclass(frozen=True)
class AttackConfig:
    """Max-norm budget and step schedule for PGD.

    step_size defaults to 2 * epsilon / steps, so the iterate can
    cross the ball and still land on the surface. clamp_low/high, when
    set, keep perturbed points inside the valid feature range.
    """

    epsilon: float
    steps: int = 10
    step_size: float | None = None
    random_start: bool = True
    clamp_low: float | None = None
    clamp_high: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")
        if self.steps < 1:
            raise UsageError("steps must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise UsageError("step_size must be positive")
        if (self.clamp_low is None) != (self.clamp_high is None):
            raise UsageError("set both clamp bounds or neither")
        if self.clamp_low is not None and self.clamp_low >= self.clamp_high:
            raise UsageError("clamp_low must be below clamp_high")

    @property
    def alpha(self) -> float:
        return self.step_size if self.step_size is not None else 2.0 * self.epsilon / self.steps


@dataclass(frozen=True)
class AdversarialExample:
    """One crafted point and what the substitute thinks of it."""

    original: np.ndarray
    perturbed: np.ndarray
    delta: np.ndarray
    source_class: int
    substitute_probs: np.ndarray


def _onehot(y: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((y.shape[0], class_count))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def _pgd_core(model: MlpClassifier, x0: np.ndarray, y: np.ndarray,
              cfg: AttackConfig, starts: np.ndarray | None) -> np.ndarray:
    """Shared PGD loop; starts is the pre-drawn random offset or None."""
    eps = cfg.epsilon
    x = x0 + starts if starts is not None else x0.copy()
    x = x0 + np.clip(x - x0, -eps, eps)
    if cfg.clamp_low is not None:
        x = np.clip(x, cfg.clamp_low, cfg.clamp_high)
    target = _onehot(y, model.spec.class_count)
    for _ in range(cfg.steps):
        grad = input_gradient(model, x, target)
        # Ascend the loss on the source class, one signed step.
        x = x + cfg.alpha * np.sign(grad)
        x = x0 + np.clip(x - x0, -eps, eps)
        if cfg.clamp_low is not None:
            # Clamping moves coordinates toward the (in-range) original,
            # so the budget survives it.
            x = np.clip(x, cfg.clamp_low, cfg.clamp_high)
    return x


def pgd_attack(model: MlpClassifier, x, source_class: int, cfg: AttackConfig,
               rng: np.random.Generator) -> AdversarialExample:
    """Craft one adversarial example against the substitute.

    Args:
        model: substitute providing gradients.
        x: clean input (d,).
        source_class: class to move away from, normally the victim's
            argmax on x.
        cfg: budget and schedule.
        rng: source for the random start (unused when disabled).

    Returns:
        AdversarialExample with max-norm delta within cfg.epsilon.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise UsageError(f"x must be a single sample (d,), got {arr.shape}")
    x0 = as_sample_batch(arr[None, :], model.spec.input_dim)
    if not 0 <= source_class < model.spec.class_count:
        raise UsageError(f"source_class must lie in [0, {model.spec.class_count})")
    starts = None
    if cfg.random_start:
        starts = rng.uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape)
    adv = _pgd_core(model, x0, np.array([source_class]), cfg, starts)
    probs = model.predict_proba(adv)[0]
    return AdversarialExample(
        original=arr.copy(),
        perturbed=adv[0],
        delta=adv[0] - arr,
        source_class=int(source_class),
        substitute_probs=probs,
    )


def pgd_attack_batch(model: MlpClassifier, x, y, cfg: AttackConfig, seed: int) -> np.ndarray:
    """Vectorized PGD over a batch with per-point random-start streams.

    Point i's start comes from a stream keyed by (seed, 0, i), so its
    result depends only on the seed, its index, and its own row; batch
    composition and evaluation order do not matter.
    """
    x0 = as_sample_batch(x, model.spec.input_dim)
    y = np.asarray(y)
    if y.shape != (x0.shape[0],):
        raise UsageError(f"y must be ({x0.shape[0]},), got {y.shape}")
    if x0.shape[0] == 0:
        raise UsageError("attack batch must be non-empty")
    starts = None
    if cfg.random_start:
        starts = np.stack([
            derive_rng(seed, 0, i).uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape[1])
            for i in range(x0.shape[0])
        ])
    return _pgd_core(model, x0, y.astype(np.int64), cfg, starts)


# ---------------------------------------------------------------------------
# transfer evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferReport:
    """Attack success rates at one budget, plus the reference baselines.

    Rates are over the eligible points (victim agrees with truth on the
    clean input). asr_transfer uses victim decisions on substitute-
    crafted points; asr_whitebox scores the same points against the
    substitute itself; asr_noise replaces PGD with random sign noise of
    the same magnitude.
    """

    epsilon: float
    steps: int
    step_size: float
    total_count: int
    eligible_count: int
    asr_transfer: float
    asr_whitebox: float
    asr_noise: float
    flip_rate_all: float
    max_abs_delta: float
    victim_queries: int

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "steps": self.steps,
            "step_size": self.step_size,
            "total_count": self.total_count,
            "eligible_count": self.eligible_count,
            "asr_transfer": self.asr_transfer,
            "asr_whitebox": self.asr_whitebox,
            "asr_noise": self.asr_noise,
            "flip_rate_all": self.flip_rate_all,
            "max_abs_delta": self.max_abs_delta,
            "victim_queries": self.victim_queries,
        }


def evaluate_transfer(model: MlpClassifier, victim: Oracle, x_test,
                      cfg: AttackConfig, seed: int, truth=None) -> TransferReport:
    """Craft on the substitute, score on the victim.

    The victim labels the clean points (defining each point's source
    class), PGD runs entirely on the substitute, and the victim then
    labels the perturbed and noise-perturbed points. Success means the
    victim's decision moved off the source class. When truth labels are
    given, only points the victim got right count toward the rates.

    Args:
        model: substitute under the attacker's control.
        victim: metered victim handle (charged 3 * n queries).
        x_test: clean evaluation points (n, d).
        cfg: attack budget and schedule.
        seed: master seed for start noise and the baseline noise.
        truth: optional integer labels enabling the victim-correct filter.

    Returns:
        TransferReport. Raises UsageError if no point is eligible.
    """
    x0 = as_sample_batch(x_test, model.spec.input_dim)
    if x0.shape[0] == 0:
        raise UsageError("evaluation set must be non-empty")
    start_queries = victim.query_count
    clean_probs = victim.predict_proba(x0)
    y_clean = argmax_batch(clean_probs)

    if truth is not None:
        t = np.asarray(truth)
        if t.shape != (x0.shape[0],):
            raise UsageError(f"truth must be ({x0.shape[0]},), got {t.shape}")
        eligible = y_clean == t.astype(np.int64)
    else:
        eligible = np.ones(x0.shape[0], dtype=bool)
    if not eligible.any():
        raise UsageError("victim got every evaluation point wrong, nothing to attack")

    x_adv = pgd_attack_batch(model, x0, y_clean, cfg, seed)

    # Same budget, zero intelligence: a random corner of the max-norm ball.
    signs = np.stack([
        np.sign(derive_rng(seed, 1, i).uniform(-1.0, 1.0, size=x0.shape[1]))
        for i in range(x0.shape[0])
    ])
    x_noise = x0 + cfg.epsilon * signs
    if cfg.clamp_low is not None:
        x_noise = np.clip(x_noise, cfg.clamp_low, cfg.clamp_high)

    victim_adv = argmax_batch(victim.predict_proba(x_adv))
    victim_noise = argmax_batch(victim.predict_proba(x_noise))
    sub_adv = argmax_batch(model.predict_proba(x_adv))

    flipped_adv = victim_adv != y_clean
    return TransferReport(
        epsilon=cfg.epsilon,
        steps=cfg.steps,
        step_size=cfg.alpha,
        total_count=int(x0.shape[0]),
        eligible_count=int(eligible.sum()),
        asr_transfer=float(flipped_adv[eligible].mean()),
        asr_whitebox=float((sub_adv != y_clean)[eligible].mean()),
        asr_noise=float((victim_noise != y_clean)[eligible].mean()),
        flip_rate_all=float(flipped_adv.mean()),
        max_abs_delta=float(np.abs(x_adv - x0).max()),
        victim_queries=int(victim.query_count - start_queries),
    )
