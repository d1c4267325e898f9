"""Finite-difference verification of the backward pass.

The check runs the model in training mode so the batch-statistics path of
batchnorm is exercised, but with no dropout generator (dropout layers fall
back to identity) and with running-stat updates disabled, keeping every
loss evaluation a pure deterministic function of the parameters.

Two measures keep the oracle sharp:

  - Central differences are evaluated on a float64 clone of the model. At
    useful step sizes, float32 round-off in the two loss evaluations alone
    is larger than the tolerance being certified; the clone runs the same
    layer code, so float64 differencing verifies the same arithmetic.
  - The loss is piecewise smooth: relu and maxpool introduce kinks where
    one-sided derivatives disagree and a central difference measures
    nothing meaningful. A coordinate whose +-epsilon evaluations disagree
    on any relu sign or pool argmax straddles such a kink and is excluded
    (and counted) rather than compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Rng
from .layers import MaxPool2D, ReLU
from .losses import one_hot, softmax_cross_entropy
from .model import Model


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: int
    checked: int
    skipped: int


def _loss(model: Model, x, targets, class_weights) -> float:
    logits = model.forward(
        x, training=True, rng=None, update_stats=False, through_softmax=False
    )
    loss, _ = softmax_cross_entropy(logits, targets, class_weights)
    return loss


def _activation_pattern(model: Model) -> list[np.ndarray]:
    """Relu masks and pool argmax taps cached by the most recent forward."""
    pattern = []
    for layer in model.layers:
        if layer._cache is None:
            continue
        if isinstance(layer, ReLU):
            pattern.append(layer._cache[0].copy())
        elif isinstance(layer, MaxPool2D):
            pattern.append(layer._cache[1].copy())
    return pattern


def _same_pattern(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    model: Model,
    x: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray | None = None,
    epsilon: float = 1e-5,
    samples_per_param: int = 6,
    seed: int = 0,
    atol: float = 1e-9,
) -> GradCheckResult:
    """Compare analytic gradients against central differences.

    For each parameter tensor, samples_per_param coordinates are sampled
    (all of them when the tensor is small) and perturbed by +-epsilon.
    Returns the worst relative error |analytic - numeric| over
    max(|analytic|, |numeric|) across every compared coordinate, plus how
    many coordinates were skipped for straddling a kink. Differences at or
    below atol count as exact agreement: a difference of that size is
    round-off in the loss evaluations themselves (about 1e-16 * |loss| /
    epsilon), which is what the numeric estimate degenerates to on dead
    units whose true gradient is zero.
    """
    work = model.clone(dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if class_weights is not None:
        class_weights = np.asarray(class_weights, dtype=np.float64)

    logits = work.forward(
        x, training=True, rng=None, update_stats=False, through_softmax=False
    )
    targets = one_hot(np.asarray(labels), logits.shape[1])
    _, dlogits = softmax_cross_entropy(logits, targets, class_weights)
    work.backward(dlogits)
    analytic_grads = [(p.name, p.value, p.grad.copy()) for p in work.params()]

    picker = Rng(seed).derive(0x47434B)
    worst = 0.0
    worst_param = ""
    worst_index = -1
    checked = 0
    skipped = 0
    for name, value, grad in analytic_grads:
        flat = value.reshape(-1)
        grad_flat = grad.reshape(-1)
        size = flat.shape[0]
        if size <= samples_per_param:
            indices = list(range(size))
        else:
            indices = sorted({picker.below(size) for _ in range(samples_per_param)})
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + epsilon
            plus = _loss(work, x, targets, class_weights)
            plus_pattern = _activation_pattern(work)
            flat[idx] = original - epsilon
            minus = _loss(work, x, targets, class_weights)
            minus_pattern = _activation_pattern(work)
            flat[idx] = original
            if not _same_pattern(plus_pattern, minus_pattern):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * epsilon)
            analytic = grad_flat[idx]
            diff = abs(analytic - numeric)
            rel = 0.0 if diff <= atol else diff / max(abs(analytic), abs(numeric))
            checked += 1
            if rel > worst:
                worst = rel
                worst_param = name
                worst_index = idx
    return GradCheckResult(worst, worst_param, worst_index, checked, skipped)
