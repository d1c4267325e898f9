"""Confusion-matrix accumulation and the derived classification report."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, ShapeMismatch


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns are predicted classes."""

    class_names: tuple[str, ...]
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        k = len(self.class_names)
        if self.counts is None:
            self.counts = np.zeros((k, k), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (k, k):
                raise ShapeMismatch(
                    f"confusion matrix shape {self.counts.shape} != ({k}, {k})"
                )
            if (self.counts < 0).any():
                raise ShapeMismatch("confusion matrix counts must be nonnegative")

    def add(self, true_index: int, predicted_index: int) -> None:
        self.counts[true_index, predicted_index] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple[ClassMetrics, ...]
    accuracy: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    total: int


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_confusion(matrix: ConfusionMatrix) -> EvalReport:
    """Per-class precision/recall/F1 plus accuracy, micro and weighted means.

    Any metric whose denominator is zero is defined as 0. Micro averages
    pool TP/FP/FN over classes first; since every sample carries exactly one
    true and one predicted label, micro precision, recall and F1 all
    coincide with accuracy. Weighted averages weight per-class values by
    support.
    """
    counts = matrix.counts
    total = matrix.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has no observations")
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)
    support = counts.sum(axis=1).astype(np.float64)

    per_class = []
    for i, name in enumerate(matrix.class_names):
        precision = _ratio(tp[i], predicted[i])
        recall = _ratio(tp[i], support[i])
        f1 = _ratio(2 * precision * recall, precision + recall)
        per_class.append(ClassMetrics(name, precision, recall, f1, int(support[i])))

    accuracy = float(tp.sum() / total)
    pooled_tp = tp.sum()
    pooled_fp = (predicted - tp).sum()
    pooled_fn = (support - tp).sum()
    micro_p = _ratio(pooled_tp, pooled_tp + pooled_fp)
    micro_r = _ratio(pooled_tp, pooled_tp + pooled_fn)
    micro_f1 = _ratio(2 * micro_p * micro_r, micro_p + micro_r)

    weights = support / total
    weighted_p = float(sum(w * m.precision for w, m in zip(weights, per_class)))
    weighted_r = float(sum(w * m.recall for w, m in zip(weights, per_class)))
    weighted_f1 = float(sum(w * m.f1 for w, m in zip(weights, per_class)))

    return EvalReport(
        per_class=tuple(per_class),
        accuracy=accuracy,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
        weighted_precision=weighted_p,
        weighted_recall=weighted_r,
        weighted_f1=weighted_f1,
        total=total,
    )


def format_report(matrix: ConfusionMatrix, report: EvalReport) -> str:
    """Human-readable confusion matrix plus classification-report table."""
    names = matrix.class_names
    width = max(10, max(len(n) for n in names) + 2)
    lines = ["confusion matrix (rows true, columns predicted):"]
    header = " " * width + "".join(f"{n:>{width}}" for n in names)
    lines.append(header)
    for i, name in enumerate(names):
        row = "".join(f"{int(c):>{width}}" for c in matrix.counts[i])
        lines.append(f"{name:>{width}}{row}")
    lines.append("")
    lines.append(f"{'':{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}")
    for m in report.per_class:
        lines.append(
            f"{m.name:>{width}}{m.precision:>10.4f}{m.recall:>10.4f}"
            f"{m.f1:>10.4f}{m.support:>10}"
        )
    lines.append("")
    lines.append(f"{'accuracy':>{width}}{report.accuracy:>10.4f}  (n={report.total})")
    lines.append(
        f"{'micro':>{width}}{report.micro_precision:>10.4f}"
        f"{report.micro_recall:>10.4f}{report.micro_f1:>10.4f}"
    )
    lines.append(
        f"{'weighted':>{width}}{report.weighted_precision:>10.4f}"
        f"{report.weighted_recall:>10.4f}{report.weighted_f1:>10.4f}"
    )
    return "\n".join(lines)
