"""Classification metrics: confusion matrix, accuracy, balanced accuracy,
per-class recall, and grouped evaluation reports.

Balanced accuracy averages recall over the classes that actually occur in
y_true; classes with zero true samples are excluded from the mean and from
the recall maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, LabelEncoder, PersonProfile


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = number of samples of true class classes[i] predicted as classes[j]."""

    classes: tuple[int, ...]
    counts: np.ndarray

    def __post_init__(self):
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} does not match {k} classes")
        if (self.counts < 0).any():
            raise ValueError("negative counts")

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(
    y_true: Sequence[int], y_pred: Sequence[int], classes: Sequence[int]
) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    ordered = tuple(sorted(set(int(c) for c in classes)))
    index = {c: i for i, c in enumerate(ordered)}
    counts = np.zeros((len(ordered), len(ordered)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if int(t) not in index:
            raise ValueError(f"true label {t} not in the class set")
        if int(p) not in index:
            raise ValueError(f"predicted label {p} not in the class set")
        counts[index[int(t)], index[int(p)]] += 1
    return ConfusionMatrix(ordered, counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.n == 0:
        raise ValueError("accuracy is undefined on an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.n)


def per_class_recall(cm: ConfusionMatrix) -> dict[int, float]:
    """Recall per class code, only for classes with at least one true sample."""
    out = {}
    row_sums = cm.counts.sum(axis=1)
    for i, c in enumerate(cm.classes):
        if row_sums[i] > 0:
            out[c] = float(cm.counts[i, i] / row_sums[i])
    return out


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    recalls = per_class_recall(cm)
    if not recalls:
        raise ValueError("balanced accuracy is undefined without any true samples")
    return float(np.mean(list(recalls.values())))


def per_node_report(cm: ConfusionMatrix, node_encoder: LabelEncoder) -> dict[str, float]:
    """Per-class recall keyed by the decoded node label."""
    return {node_encoder.decode(c): r for c, r in per_class_recall(cm).items()}


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    per_class_recall: dict[int, float]
    confusion: ConfusionMatrix
    n: int


def evaluate(y_true: Sequence[int], y_pred: Sequence[int], classes: Sequence[int]) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred, classes)
    return EvalReport(accuracy(cm), balanced_accuracy(cm), per_class_recall(cm), cm, cm.n)


def evaluate_model(model, ds: Dataset) -> EvalReport:
    """Predict and score a dataset with any model exposing predict(X)."""
    return evaluate(ds.y(), model.predict(ds.X()), range(ds.n_classes))


def group_eval(
    ds: Dataset,
    model,
    group_by: str,
    profiles: Mapping[str, PersonProfile] | None = None,
) -> dict:
    """Partition the samples by an attribute and report metrics per group.

    group_by may be "task", "participant", or any profile field name (the
    latter requires the profiles map).
    """
    def attribute(sample):
        if group_by == "task":
            return sample.task
        if group_by == "participant":
            return sample.participant
        if profiles is None or sample.participant not in profiles:
            raise ValueError(f"grouping by {group_by!r} needs a profile for {sample.participant!r}")
        try:
            return getattr(profiles[sample.participant], group_by)
        except AttributeError:
            raise ValueError(f"unknown grouping attribute {group_by!r}") from None

    y_pred = model.predict(ds.X())
    y_true = ds.y()
    groups: dict = {}
    for i, s in enumerate(ds.samples):
        groups.setdefault(attribute(s), []).append(i)
    out = {}
    for value in sorted(groups, key=str):
        idx = np.array(groups[value])
        out[value] = evaluate(y_true[idx], y_pred[idx], range(ds.n_classes))
    return out
