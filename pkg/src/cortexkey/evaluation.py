"""Confusion matrices, per-class metrics, and stratified cross-validation.

Metric conventions: one-vs-rest TP/FP/FN per class; any zero denominator
yields 0; fold summaries use the population (divide-by-k) standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .ingest import Dataset, N_CLASSES, standardize_dataset, standardizer_fit


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (K, K), rows = actual class, columns = predicted

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0):
            raise DataError("confusion matrix counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassReport:
    per_class: tuple
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    total: int

    def as_dict(self) -> dict:
        return {
            "classes": {
                str(c): {"precision": m.precision, "recall": m.recall,
                         "f1": m.f1, "support": m.support}
                for c, m in enumerate(self.per_class)
            },
            "accuracy": self.accuracy,
            "macro_avg": {"precision": self.macro_precision,
                          "recall": self.macro_recall, "f1": self.macro_f1},
            "weighted_avg": {"precision": self.weighted_precision,
                             "recall": self.weighted_recall, "f1": self.weighted_f1},
            "total_support": self.total,
        }


@dataclass(frozen=True)
class CvResult:
    accuracies: tuple
    mean: float
    sd: float
    fold_val_indices: tuple = ()
    fold_train_indices: tuple = ()
    pooled_actual: tuple = ()
    pooled_predicted: tuple = ()

    def as_dict(self) -> dict:
        return {"folds": list(self.accuracies), "mean": self.mean, "sd": self.sd}


def confusion_matrix(actual, predicted, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    a = np.asarray(actual, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if a.shape != p.shape:
        raise DataError(f"actual/predicted length mismatch: {a.shape} vs {p.shape}")
    for name, v in (("actual", a), ("predicted", p)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise DataError(f"{name} labels outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (a, p), 1)
    return ConfusionMatrix(counts=counts)


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def class_report(cm: ConfusionMatrix) -> ClassReport:
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise DataError("empty confusion matrix")
    k = counts.shape[0]
    per_class = []
    for c in range(k):
        tp = float(counts[c, c])
        fp = float(counts[:, c].sum() - counts[c, c])
        fn = float(counts[c, :].sum() - counts[c, c])
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        per_class.append(ClassMetrics(precision, recall, f1, int(counts[c, :].sum())))

    supports = np.array([m.support for m in per_class], dtype=np.float64)
    weights = supports / total

    def macro(attr):
        return float(np.mean([getattr(m, attr) for m in per_class]))

    def weighted(attr):
        return float(np.sum([getattr(m, attr) * w for m, w in zip(per_class, weights)]))

    return ClassReport(
        per_class=tuple(per_class),
        accuracy=float(np.trace(counts)) / total,
        macro_precision=macro("precision"),
        macro_recall=macro("recall"),
        macro_f1=macro("f1"),
        weighted_precision=weighted("precision"),
        weighted_recall=weighted("recall"),
        weighted_f1=weighted("f1"),
        total=total,
    )


def stratified_kfold(labels, k: int = 10, seed: int = 42, shuffle: bool = True) -> list:
    """Partition indices into k folds preserving class proportions.

    Per class, indices are (optionally) shuffled with the seeded generator
    and dealt out in contiguous chunks; the earliest folds absorb the
    remainder sample for each class.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for c in sorted(int(v) for v in np.unique(labels)):
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise DataError(f"class {c} has {idx.size} samples, fewer than k={k}")
        if shuffle:
            rng.shuffle(idx)
        q, r = divmod(idx.size, k)
        start = 0
        for j in range(k):
            size = q + (1 if j < r else 0)
            folds[j].extend(idx[start:start + size].tolist())
            start += size
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def cross_validate(estimator_factory, dataset: Dataset, k: int = 10, seed: int = 42) -> CvResult:
    """k-fold CV with the standardizer refit inside each fold's training split.

    ``estimator_factory()`` must return a fresh object with
    ``fit(train: Dataset)`` and ``predict(ds: Dataset) -> labels``.
    """
    labels = dataset.labels()
    folds = stratified_kfold(labels, k=k, seed=seed)
    all_idx = np.arange(len(dataset))
    accuracies = []
    fold_train, fold_val = [], []
    pooled_actual, pooled_pred = [], []
    for fold_no, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, val_idx)
        train_ds = dataset.subset(train_idx)
        val_ds = dataset.subset(val_idx)
        scaler = standardizer_fit(train_ds)
        train_std = standardize_dataset(scaler, train_ds)
        val_std = standardize_dataset(scaler, val_ds)
        try:
            estimator = estimator_factory()
            estimator.fit(train_std)
            predicted = np.asarray(estimator.predict(val_std), dtype=np.int64)
        except Exception as exc:
            raise type(exc)(f"fold {fold_no} failed: {exc}") from exc
        actual = val_std.labels()
        accuracies.append(float((predicted == actual).mean()))
        fold_train.append(tuple(train_idx.tolist()))
        fold_val.append(tuple(val_idx.tolist()))
        pooled_actual.extend(actual.tolist())
        pooled_pred.extend(predicted.tolist())

    acc = np.array(accuracies)
    return CvResult(
        accuracies=tuple(accuracies),
        mean=float(acc.mean()),
        sd=float(acc.std()),  # population SD
        fold_val_indices=tuple(fold_val),
        fold_train_indices=tuple(fold_train),
        pooled_actual=tuple(pooled_actual),
        pooled_predicted=tuple(pooled_pred),
    )
