"""Synthetic victims and data generators for experiments and tests.

Everything here is deterministic given its seeds. The analytic victims
are chosen for known geometry: a single axis-aligned boundary, and a
three-class junction where all pairwise boundaries meet in the middle
of the unit square.
"""

from __future__ import annotations

import numpy as np

from .core import derive_rng
from .errors import UsageError


def two_class_linear_params(scale: float = 20.0):
    """Two-class linear victim on [0, 1]^2 whose boundary is x0 = 0.5.

    The logit gap is scale * (x0 - 0.5); the second feature is
    irrelevant. Returns (weights, biases) for the linear-softmax
    victim.
    """
    w = np.array([[scale, 0.0], [0.0, 0.0]])
    b = np.array([-scale / 2.0, 0.0])
    return w, b


def junction_victim_params(scale: float = 12.0, class_count: int = 3):
    """Linear victim whose classes meet at one junction in [0, 1]^2.

    Class c's logit is scale * u_c . (x - center) with the unit
    directions u_c spread evenly over the circle, so decision regions
    are wedges around (0.5, 0.5) and every pairwise boundary passes
    through the center.
    """
    if class_count < 2:
        raise UsageError("junction victim needs at least two classes")
    center = np.array([0.5, 0.5])
    angles = np.pi / 2 + 2 * np.pi * np.arange(class_count) / class_count
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    w = scale * dirs
    b = -w @ center
    return w, b


def triangle_mixture_params(radius: float = 0.25, spread: float = 0.12):
    """Three Gaussians at triangle vertices around (0.5, 0.5), equal priors."""
    center = np.array([0.5, 0.5])
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    means = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    covs = np.stack([np.eye(2) * spread**2 for _ in range(3)])
    priors = np.full(3, 1.0 / 3.0)
    return means, covs, priors


def sample_prototype_blobs(
    n: int,
    class_count: int,
    input_dim: int,
    spread: float,
    task_seed: int,
    sample_seed: int,
    clip: tuple[float, float] | None = None,
):
    """Gaussian blobs around per-class prototype centers.

    The prototypes depend only on task_seed, so train and test splits
    drawn with different sample_seeds share the same task. Labels are
    uniform over classes.

    Args:
        n: number of samples.
        class_count: number of prototypes.
        input_dim: feature dimension.
        spread: noise standard deviation around each prototype.
        task_seed: fixes the prototype locations.
        sample_seed: fixes labels and noise of this draw.
        clip: optional (low, high) clamp applied after adding noise.

    Returns:
        (x, y): features (n, input_dim) and integer labels (n,).
    """
    if n < 1 or class_count < 2 or input_dim < 1:
        raise UsageError("need n >= 1, class_count >= 2, input_dim >= 1")
    protos = derive_rng(task_seed, 0).uniform(0.2, 0.8, size=(class_count, input_dim))
    rng = derive_rng(sample_seed, 1)
    y = rng.integers(0, class_count, size=n)
    x = protos[y] + spread * rng.standard_normal((n, input_dim))
    if clip is not None:
        x = np.clip(x, clip[0], clip[1])
    return x, y
