"""Class-weighted softmax cross-entropy, fused with its gradient."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, ZeroBatch


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeMismatch(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeMismatch(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def softmax_cross_entropy(
    logits: np.ndarray,
    targets: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean weighted cross-entropy over the batch and its logit gradient.

    targets are one-hot rows; per-sample loss is -w_y * log p_y where w_y is
    the weight of the true class, and the gradient is w_y * (p - t) / N
    (the usual softmax/CE fusion, scaled by the class weight). Probabilities
    use max-subtraction so large logits cannot overflow.
    """
    if logits.ndim != 2 or targets.shape != logits.shape:
        raise ShapeMismatch(
            f"logits {logits.shape} and one-hot targets "
            f"{getattr(targets, 'shape', None)} must both be (N, K)"
        )
    n, k = logits.shape
    if n == 0:
        raise ZeroBatch("cannot take a loss over an empty batch")
    if class_weights is None:
        class_weights = np.ones(k, dtype=logits.dtype)
    else:
        class_weights = np.asarray(class_weights, dtype=logits.dtype)
        if class_weights.shape != (k,):
            raise ShapeMismatch(
                f"class_weights shape {class_weights.shape} != ({k},)"
            )
    targets = np.asarray(targets, dtype=logits.dtype)

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    sample_weight = targets @ class_weights  # w_y per sample
    loss = float(-(sample_weight * (targets * log_p).sum(axis=1)).mean())
    p = np.exp(log_p)
    dlogits = (sample_weight[:, None] * (p - targets) / n).astype(logits.dtype)
    return loss, dlogits
