"""Uniform fit/predict adapters over the four classifier kinds.

These wrap the model-specific APIs behind the estimator protocol used by
cross-validation and the training CLI: ``fit(train: Dataset)`` then
``predict(ds: Dataset) -> labels``.
"""

from __future__ import annotations

import numpy as np

from . import bigru_attn, classical, nn_core
from .errors import DataError
from .ingest import Dataset

MODEL_KINDS = ("gnb", "svm", "mlp", "bigru_attn")


class GnbEstimator:
    kind = "gnb"

    def __init__(self):
        self.model = None

    def fit(self, train: Dataset):
        self.model = classical.gnb_fit(train)
        return self

    def predict(self, ds: Dataset) -> np.ndarray:
        return classical.gnb_predict_batch(self.model, ds.features())


class SvmEstimator:
    kind = "svm"

    def __init__(self, config: classical.SvmConfig = classical.SvmConfig()):
        self.config = config
        self.model = None

    def fit(self, train: Dataset):
        self.model = classical.svm_fit(train, self.config)
        return self

    def predict(self, ds: Dataset) -> np.ndarray:
        return classical.svm_predict_batch(self.model, ds.features())


class MlpEstimator:
    kind = "mlp"

    def __init__(self, train_config: nn_core.TrainConfig = nn_core.TrainConfig(),
                 hidden_sizes=(256, 128, 64)):
        self.train_config = train_config
        self.hidden_sizes = tuple(hidden_sizes)
        self.model = None
        self.history = None

    def fit(self, train: Dataset):
        in_dim = train.windows[0].values.size
        model = nn_core.MlpModel(in_dim=in_dim, hidden_sizes=self.hidden_sizes,
                                 dropout_rate=self.train_config.dropout_rate,
                                 seed=self.train_config.seed)
        self.model, self.history = nn_core.train(model, train, self.train_config)
        return self

    def predict(self, ds: Dataset) -> np.ndarray:
        probs, _ = self.model.forward_batch(ds.features(), "infer")
        return np.argmax(probs, axis=1)


class BiGruEstimator:
    kind = "bigru_attn"

    def __init__(self, train_config: nn_core.TrainConfig = nn_core.TrainConfig(),
                 hidden_size: int = bigru_attn.DEFAULT_HIDDEN):
        self.train_config = train_config
        self.hidden_size = hidden_size
        self.model = None
        self.history = None

    def fit(self, train: Dataset):
        self.model, self.history = bigru_attn.train_bigru(
            train, self.train_config, hidden_size=self.hidden_size)
        return self

    def predict(self, ds: Dataset) -> np.ndarray:
        probs, _ = self.model.forward_batch(ds.sequences(), "infer")
        return np.argmax(probs, axis=1)


def build_estimator(kind: str, train_config: nn_core.TrainConfig | None = None,
                    svm_config: classical.SvmConfig | None = None,
                    hidden_sizes=(256, 128, 64), hidden_size: int = 128):
    if kind == "gnb":
        return GnbEstimator()
    if kind == "svm":
        return SvmEstimator(svm_config or classical.SvmConfig())
    if kind == "mlp":
        return MlpEstimator(train_config or nn_core.TrainConfig(), hidden_sizes)
    if kind == "bigru_attn":
        return BiGruEstimator(train_config or nn_core.TrainConfig(), hidden_size)
    raise DataError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def predict_window_values(kind: str, model, values: np.ndarray,
                          want_attention: bool = False):
    """Standardized (T, C) window -> (class id, probabilities, attention|None).

    SVM decision values have no probabilistic calibration; they are softmaxed
    into pseudo-probabilities so every kind emits a distribution.
    """
    if kind == "gnb":
        cls, probs = classical.gnb_predict(model, values.reshape(-1))
        return cls, probs, None
    if kind == "svm":
        decisions = classical.svm_decision_values(model, values.reshape(-1))
        probs = nn_core.softmax(decisions)
        return int(np.argmax(decisions)), probs, None
    if kind == "mlp":
        cls, probs = nn_core.mlp_predict(model, values.reshape(-1))
        return cls, probs, None
    if kind == "bigru_attn":
        cls, probs, alpha = bigru_attn.predict(model, values)
        return cls, probs, (alpha if want_attention else None)
    raise DataError(f"unknown model kind {kind!r}")
