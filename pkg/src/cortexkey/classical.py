"""Gaussian Naive Bayes and linear one-vs-rest SVM on flattened windows.

Both fits are deterministic: GNB from data moments, the SVM via seeded
sub-gradient descent with iterate averaging. Ties in every argmax break
toward the lowest class id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .ingest import Dataset, TrialWindow

VAR_FLOOR_REL = 1e-9


@dataclass(frozen=True)
class GnbModel:
    priors: np.ndarray      # (K,) class frequencies, sum to 1
    means: np.ndarray       # (K, n_features)
    variances: np.ndarray   # (K, n_features), floored at var_floor
    var_floor: float

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class SvmConfig:
    C: float = 0.001
    epochs: int = 1000
    seed: int = 42


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray  # (K, n_features) one-vs-rest, averaged iterates
    biases: np.ndarray   # (K,)
    config: SvmConfig = field(default_factory=SvmConfig)
    # total objective of the running-average iterate, sampled every 100 epochs
    objective_checkpoints: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _as_features(x) -> np.ndarray:
    if isinstance(x, TrialWindow):
        return x.flat()
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _dataset_arrays(train):
    if isinstance(train, Dataset):
        return train.features(), train.labels()
    x, y = train
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def gnb_fit(train) -> GnbModel:
    """Class priors plus per-class per-feature mean and population variance.

    Variances are floored at 1e-9 times the largest overall feature variance
    (1e-9 when the data is entirely constant) so constant features never
    produce singular densities.
    """
    x, y = _dataset_arrays(train)
    n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DataError(f"class(es) {missing.tolist()} have no training samples")

    overall_var = x.var(axis=0)
    max_var = float(overall_var.max()) if overall_var.size else 0.0
    var_floor = VAR_FLOOR_REL * max_var if max_var > 0 else VAR_FLOOR_REL

    means = np.empty((n_classes, x.shape[1]))
    variances = np.empty_like(means)
    for c in range(n_classes):
        xc = x[y == c]
        means[c] = xc.mean(axis=0)
        variances[c] = np.maximum(xc.var(axis=0), var_floor)
    priors = counts / counts.sum()
    return GnbModel(priors=priors, means=means, variances=variances, var_floor=var_floor)


def gnb_log_posteriors(model: GnbModel, x) -> np.ndarray:
    """Normalized log P(C|x) via stable log-sum-exp over the joint logs."""
    feats = _as_features(x)
    if feats.size != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {feats.size}")
    diff = feats[None, :] - model.means
    log_lik = -0.5 * (np.log(2.0 * np.pi * model.variances) + diff ** 2 / model.variances)
    joint = np.log(model.priors) + log_lik.sum(axis=1)
    shifted = joint - joint.max()
    return shifted - np.log(np.exp(shifted).sum())


def gnb_predict(model: GnbModel, x):
    """Return (class id, per-class posterior probabilities)."""
    log_post = gnb_log_posteriors(model, x)
    probs = np.exp(log_post)
    return int(np.argmax(probs)), probs


def gnb_predict_batch(model: GnbModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {x.shape[1]}")
    diff = x[:, None, :] - model.means[None, :, :]
    log_lik = -0.5 * (np.log(2.0 * np.pi * model.variances)[None] + diff ** 2 / model.variances[None])
    joint = np.log(model.priors)[None, :] + log_lik.sum(axis=2)
    return np.argmax(joint, axis=1)


def svm_objective(weights, biases, x, y_signs, c_penalty) -> float:
    """(1/2) sum_k ||w_k||^2 + C * sum_k sum_i hinge(y_ki * (w_k.x_i + b_k))."""
    scores = x @ weights.T + biases[None, :]          # (n, K)
    margins = y_signs.T * scores                      # (n, K)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    return 0.5 * float((weights ** 2).sum()) + c_penalty * float(hinge)


def svm_fit(train, config: SvmConfig = SvmConfig()) -> SvmModel:
    """One-vs-rest linear SVMs by seeded per-sample sub-gradient descent.

    All rest-vs-class problems share the per-epoch shuffle; the epoch step is
    1/(t+1); the returned weights are the average over epoch-end iterates.
    """
    x, y = _dataset_arrays(train)
    n, d = x.shape
    present = np.unique(y)
    if present.size < 2:
        raise DataError(f"SVM needs >= 2 classes, found {present.tolist()}")
    n_classes = int(y.max()) + 1

    y_signs = np.where(y[None, :] == np.arange(n_classes)[:, None], 1.0, -1.0)  # (K, n)
    weights = np.zeros((n_classes, d))
    biases = np.zeros(n_classes)
    w_sum = np.zeros_like(weights)
    b_sum = np.zeros_like(biases)
    checkpoints = []

    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        step = 1.0 / (epoch + 1)
        order = rng.permutation(n)
        for i in order:
            xi = x[i]
            margins = y_signs[:, i] * (weights @ xi + biases)
            active = margins < 1.0
            weights -= step * (weights / n)
            if active.any():
                coef = step * config.C * (y_signs[:, i] * active)
                weights += coef[:, None] * xi[None, :]
                biases += coef
        w_sum += weights
        b_sum += biases
        if (epoch + 1) % 100 == 0:
            w_avg = w_sum / (epoch + 1)
            b_avg = b_sum / (epoch + 1)
            checkpoints.append(svm_objective(w_avg, b_avg, x, y_signs, config.C))

    return SvmModel(
        weights=w_sum / config.epochs,
        biases=b_sum / config.epochs,
        config=config,
        objective_checkpoints=tuple(checkpoints),
    )


def svm_decision_values(model: SvmModel, x) -> np.ndarray:
    feats = _as_features(x)
    if feats.size != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {feats.size}")
    return model.weights @ feats + model.biases


def svm_predict(model: SvmModel, x) -> int:
    """Argmax over one-vs-rest decision values; ties go to the lowest class."""
    return int(np.argmax(svm_decision_values(model, x)))


def svm_predict_batch(model: SvmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {x.shape[1]}")
    return np.argmax(x @ model.weights.T + model.biases[None, :], axis=1)
