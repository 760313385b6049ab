"""Neural-network machinery shared by the MLP and the BiGRU-Attention model.

Everything is plain numpy with hand-written backward passes. Training is
single-threaded and bit-reproducible for a fixed seed; inference never
touches an RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .ingest import Dataset, stratified_split_indices

LOG_CLAMP = 1e-12  # floor for p_y before log, avoids log(0)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, kept units
    scaled by 1/(1-rate) so the expectation is preserved."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)


def he_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    l2_lambda: float = 0.01
    dropout_rate: float = 0.2
    batch_size: int = 128
    max_epochs: int = 100
    early_stop_patience: int = 10
    validation_fraction: float = 0.2
    seed: int = 42
    grad_clip_norm: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_lambda < 0.0:
            raise DataError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.early_stop_patience < 1:
            raise DataError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, learning_rate: float):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise DataError("params/grads length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DataError(f"param {i}: shape {p.shape} vs grad {g.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1 ** state.t)
        v_hat = state.v[i] / (1.0 - b2 ** state.t)
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def xent_loss(probabilities, label: int, weight_matrices=(), l2_lambda: float = 0.0):
    """Single-sample cross-entropy: -log p_y plus (lambda/2) * ||weights||^2.

    Biases are excluded from the penalty. Returns (loss, gradient w.r.t.
    logits = p - onehot(y)).
    """
    p = np.asarray(probabilities, dtype=np.float64)
    p_y = max(float(p[label]), LOG_CLAMP)
    loss = -np.log(p_y)
    loss += 0.5 * l2_lambda * sum(float((w ** 2).sum()) for w in weight_matrices)
    grad = p.copy()
    grad[label] -= 1.0
    return loss, grad


class MlpModel:
    """Feed-forward ReLU net with inverted dropout after each hidden layer."""

    kind = "mlp"

    def __init__(self, in_dim: int, hidden_sizes=(256, 128, 64), out_dim: int = 3,
                 dropout_rate: float = 0.2, seed: int = 42):
        self.in_dim = in_dim
        self.hidden_sizes = tuple(hidden_sizes)
        self.out_dim = out_dim
        self.dropout_rate = dropout_rate
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers: list[DenseLayer] = []
        fan_in = in_dim
        for width in self.hidden_sizes:
            self.layers.append(DenseLayer(he_uniform(rng, width, fan_in), np.zeros(width)))
            fan_in = width
        self.layers.append(DenseLayer(glorot_uniform(rng, out_dim, fan_in), np.zeros(out_dim)))

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def weight_param_indices(self) -> list:
        return [2 * i for i in range(len(self.layers))]

    @staticmethod
    def inputs_from(dataset: Dataset) -> np.ndarray:
        return dataset.features()

    def forward_batch(self, x: np.ndarray, mode: str = "infer",
                      rng: np.random.Generator | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DataError(f"expected (batch, {self.in_dim}) input, got {x.shape}")
        if mode == "train" and self.dropout_rate > 0 and rng is None:
            raise DataError("train-mode forward needs an rng for dropout")
        act = x
        hidden_caches = []
        for layer in self.layers[:-1]:
            pre = act @ layer.weights.T + layer.bias
            post = relu(pre)
            mask = None
            if mode == "train" and self.dropout_rate > 0:
                mask = dropout_mask(rng, post.shape, self.dropout_rate)
                post = post * mask
            hidden_caches.append((act, pre, mask))
            act = post
        out = self.layers[-1]
        logits = act @ out.weights.T + out.bias
        probs = softmax(logits)
        return probs, {"hidden": hidden_caches, "last_input": act}

    def backward_batch(self, cache, dlogits: np.ndarray) -> list:
        grads = [None] * (2 * len(self.layers))
        out = self.layers[-1]
        grads[-2] = dlogits.T @ cache["last_input"]
        grads[-1] = dlogits.sum(axis=0)
        dact = dlogits @ out.weights
        for i in range(len(self.layers) - 2, -1, -1):
            act_in, pre, mask = cache["hidden"][i]
            if mask is not None:
                dact = dact * mask
            dpre = dact * (pre > 0)
            grads[2 * i] = dpre.T @ act_in
            grads[2 * i + 1] = dpre.sum(axis=0)
            dact = dpre @ self.layers[i].weights
        return grads


def mlp_forward(model: MlpModel, x, mode: str = "infer",
                rng: np.random.Generator | None = None):
    """Single-window forward pass; returns (per-class probabilities, cache)."""
    feats = np.asarray(x, dtype=np.float64).reshape(-1)
    probs, cache = model.forward_batch(feats[None, :], mode, rng)
    return probs[0], cache


def mlp_predict(model: MlpModel, x):
    probs, _ = mlp_forward(model, x, mode="infer")
    return int(np.argmax(probs)), probs


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float

    def as_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_loss": self.val_loss, "train_acc": self.train_acc,
                "val_acc": self.val_acc}


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def to_jsonl(self) -> str:
        import json
        return "\n".join(json.dumps(e.as_dict()) for e in self.epochs) + "\n"


def _batch_loss_and_grad(model, probs, labels, l2_lambda):
    """Mean NLL over the batch plus the L2 penalty; dlogits = (p - onehot)/B."""
    b = probs.shape[0]
    p_y = np.maximum(probs[np.arange(b), labels], LOG_CLAMP)
    nll = -np.log(p_y).mean()
    l2 = 0.0
    if l2_lambda > 0:
        weights = [model.parameters()[i] for i in model.weight_param_indices()]
        l2 = 0.5 * l2_lambda * sum(float((w ** 2).sum()) for w in weights)
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return nll + l2, dlogits


def _clip_global_norm(grads, max_norm: float):
    total = np.sqrt(sum(float((g ** 2).sum()) for g in grads))
    if total > max_norm and total > 0:
        scale = max_norm / total
        return [g * scale for g in grads], total
    return grads, total


def _evaluate(model, x, labels, l2_lambda):
    probs, _ = model.forward_batch(x, "infer")
    b = probs.shape[0]
    p_y = np.maximum(probs[np.arange(b), labels], LOG_CLAMP)
    loss = -np.log(p_y).mean()
    if l2_lambda > 0:
        weights = [model.parameters()[i] for i in model.weight_param_indices()]
        loss += 0.5 * l2_lambda * sum(float((w ** 2).sum()) for w in weights)
    acc = float((np.argmax(probs, axis=1) == labels).mean())
    return float(loss), acc


def train(model, dataset: Dataset, config: TrainConfig = TrainConfig()):
    """Mini-batch Adam training with a stratified validation holdout.

    Early-stops on validation loss (strict improvement, configured patience)
    and restores the best epoch's weights. Returns (model, TrainHistory).
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    x_all = model.inputs_from(dataset)
    y_all = dataset.labels()
    train_idx, val_idx = stratified_split_indices(y_all, config.validation_fraction, config.seed)
    x_train, y_train = x_all[train_idx], y_all[train_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    weight_idx = set(model.weight_param_indices())
    adam = AdamState.for_params(params)

    history = TrainHistory()
    best_val = np.inf
    best_state = [p.copy() for p in params]
    best_epoch = 0
    stall = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_idx))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            xb, yb = x_train[batch], y_train[batch]
            probs, cache = model.forward_batch(xb, "train", rng)
            loss, dlogits = _batch_loss_and_grad(model, probs, yb, config.l2_lambda)
            grads = model.backward_batch(cache, dlogits)
            if config.l2_lambda > 0:
                for i in weight_idx:
                    grads[i] = grads[i] + config.l2_lambda * params[i]
            if config.grad_clip_norm is not None:
                grads, _ = _clip_global_norm(grads, config.grad_clip_norm)
            adam_step(params, grads, adam, config.learning_rate)
            loss_sum += loss * len(batch)
            correct += int((np.argmax(probs, axis=1) == yb).sum())

        train_loss = loss_sum / len(order)
        train_acc = correct / len(order)
        val_loss, val_acc = _evaluate(model, x_val, y_val, config.l2_lambda)
        history.epochs.append(EpochStats(epoch, float(train_loss), val_loss,
                                         float(train_acc), val_acc))

        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            for p, s in zip(params, best_state):
                p[...] = s
            raise NumericError(
                f"non-finite loss at epoch {epoch} "
                f"(train={train_loss}, val={val_loss}); weights restored to "
                f"epoch {best_epoch}", last_good_epoch=best_epoch)

        if val_loss < best_val:
            best_val = val_loss
            best_state = [p.copy() for p in params]
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                break

    for p, s in zip(params, best_state):
        p[...] = s
    history.best_epoch = best_epoch
    return model, history


def gradient_check(model, x, label: int, step: float = 1e-5,
                   l2_lambda: float = 0.0, max_checked: int = 10_000,
                   subset_seed: int = 0, mode: str = "infer",
                   dropout_seed: int | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    In train mode the same ``dropout_seed`` is re-used for every forward
    call so the sampled masks are identical across perturbations. When the
    model has more than ``max_checked`` parameters a seeded random subset of
    at least 200 entries is checked instead.
    """
    x = np.asarray(x, dtype=np.float64)

    def fwd_rng():
        return np.random.default_rng(dropout_seed) if dropout_seed is not None else None

    def loss_only():
        probs, _ = model.forward_batch(x[None], mode, fwd_rng())
        weights = [model.parameters()[i] for i in model.weight_param_indices()]
        loss, _ = xent_loss(probs[0], label, weights, l2_lambda)
        return loss

    probs, cache = model.forward_batch(x[None], mode, fwd_rng())
    _, dlogits = xent_loss(probs[0], label)
    grads = model.backward_batch(cache, dlogits[None])
    params = model.parameters()
    if l2_lambda > 0:
        for i in model.weight_param_indices():
            grads[i] = grads[i] + l2_lambda * params[i]

    total = sum(p.size for p in params)
    picks = []
    if total <= max_checked:
        for pi, p in enumerate(params):
            picks.extend((pi, fi) for fi in range(p.size))
    else:
        sub_rng = np.random.default_rng(subset_seed)
        n_pick = max(200, max_checked // 10)
        flat_ids = sub_rng.choice(total, size=n_pick, replace=False)
        bounds = np.cumsum([p.size for p in params])
        for fid in flat_ids:
            pi = int(np.searchsorted(bounds, fid, side="right"))
            offset = fid - (bounds[pi - 1] if pi > 0 else 0)
            picks.append((pi, int(offset)))

    max_rel = 0.0
    for pi, fi in picks:
        flat = params[pi].reshape(-1)
        orig = flat[fi]
        flat[fi] = orig + step
        loss_plus = loss_only()
        flat[fi] = orig - step
        loss_minus = loss_only()
        flat[fi] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = grads[pi].reshape(-1)[fi]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
