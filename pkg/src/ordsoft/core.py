"""Domain types shared across the package: label spaces, sample sets,
confusion matrices and prediction records.

Grades are 0-indexed internally; reports print whatever clinical labels the
caller attaches. Argmax ties break toward the lower grade (under-calling
severity is the conservative default), which is what ``np.argmax`` does.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from .metrics import MetricReport

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LabelSpace:
    """An ordered set of grades indexed 0 .. n_classes-1."""

    n_classes: int

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError(f"a label space needs at least 2 grades, got {self.n_classes}")

    def contains(self, labels: np.ndarray) -> bool:
        labels = np.asarray(labels)
        return bool(labels.size == 0 or ((labels >= 0) & (labels < self.n_classes)).all())


@dataclass(frozen=True)
class SampleSet:
    """Flat feature vectors with one grade label per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if features.ndim != 2:
            raise ValueError("features must be an N x d matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be a vector with one entry per feature row")
        if np.isnan(features).any():
            raise ValueError("features contain NaN")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative grade indices")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "SampleSet":
        return SampleSet(self.features[indices], self.labels[indices])

    def to_csv(self, path: str) -> None:
        """Write as CSV with header f0,...,f{d-1},label."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{i}" for i in range(self.n_features)] + ["label"])
            for row, lab in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(lab)])

    @classmethod
    def from_csv(cls, path: str) -> "SampleSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1] != "label":
                raise ValueError(f"{path}: expected header f0,...,label")
            d = len(header) - 1
            feats, labs = [], []
            for row in reader:
                if not row:
                    continue
                feats.append([float(v) for v in row[:d]])
                labs.append(int(row[d]))
        return cls(np.asarray(feats, dtype=float).reshape(len(labs), d), np.asarray(labs, dtype=int))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Observed counts with true grade on rows, predicted grade on columns."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=int)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def predicted_labels_from_probs(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lower grade index."""
    return np.argmax(np.asarray(probs, dtype=float), axis=1)


@dataclass(frozen=True)
class PredictionSet:
    """True labels, hard predictions and the row-stochastic probabilities behind them."""

    true_labels: np.ndarray
    predicted_labels: np.ndarray
    predicted_probs: np.ndarray

    def __post_init__(self) -> None:
        true_labels = np.asarray(self.true_labels, dtype=int)
        predicted = np.asarray(self.predicted_labels, dtype=int)
        probs = np.asarray(self.predicted_probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("predicted_probs must be an N x J matrix")
        n = probs.shape[0]
        if true_labels.shape != (n,) or predicted.shape != (n,):
            raise ValueError("label vectors must match the probability matrix rows")
        if n:
            sums = probs.sum(axis=1)
            if np.abs(sums - 1.0).max() > ROW_SUM_TOL:
                raise ValueError("probability rows must sum to 1 within 1e-9")
            if (predicted != predicted_labels_from_probs(probs)).any():
                raise ValueError("predicted_labels must be the row argmax (ties to lower grade)")
        object.__setattr__(self, "true_labels", true_labels)
        object.__setattr__(self, "predicted_labels", predicted)
        object.__setattr__(self, "predicted_probs", probs)

    @classmethod
    def from_probs(cls, true_labels: np.ndarray, probs: np.ndarray) -> "PredictionSet":
        return cls(true_labels, predicted_labels_from_probs(probs), probs)

    @property
    def n_samples(self) -> int:
        return self.predicted_probs.shape[0]


def build_confusion(preds: PredictionSet, space: LabelSpace) -> ConfusionMatrix:
    """Count matrix O[i, j] = number of samples with true grade i predicted as j."""
    return confusion_from_labels(preds.true_labels, preds.predicted_labels, space)


def confusion_from_labels(
    true_labels: np.ndarray, predicted_labels: np.ndarray, space: LabelSpace
) -> ConfusionMatrix:
    true_labels = np.asarray(true_labels, dtype=int)
    predicted_labels = np.asarray(predicted_labels, dtype=int)
    if not space.contains(true_labels) or not space.contains(predicted_labels):
        raise ValueError(f"labels out of range for {space.n_classes} grades")
    j = space.n_classes
    counts = np.zeros((j, j), dtype=int)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class RunResult:
    """One (seed, strategy) training run: chosen config, metrics and predictions."""

    seed: int
    strategy: str
    chosen_config: Any
    metrics: "MetricReport"
    predictions: PredictionSet
    validation_amae: float | None = None
    extra: dict = field(default_factory=dict)
