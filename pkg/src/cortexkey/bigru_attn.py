"""Bidirectional GRU with additive scalar attention pooling and a softmax head.

The recurrence, per time step and direction:

    z_t = sigmoid(W_z . [h_{t-1}, x_t] + b_z)
    r_t = sigmoid(W_r . [h_{t-1}, x_t] + b_r)
    h~_t = tanh(W_h . [r_t * h_{t-1}, x_t] + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * h~_t

Per-step scores W . h_t + b are softmaxed into attention weights whose
weighted sum of hidden rows forms the context vector fed to the head.
Gradients flow through the full unrolled recurrence (backpropagation through
time); no autodiff framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .ingest import Dataset
from .nn_core import (DenseLayer, TrainConfig, dropout_mask, glorot_uniform,
                      sigmoid, softmax, train)

DEFAULT_HIDDEN = 128
DEFAULT_GRAD_CLIP = 5.0


@dataclass
class GruCellParams:
    """One direction's gate parameters; each weight maps [h, x] to H outputs."""

    w_z: np.ndarray  # (H, H+D)
    b_z: np.ndarray  # (H,)
    w_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1] - self.w_z.shape[0]

    @classmethod
    def init(cls, hidden_size: int, input_size: int, rng: np.random.Generator):
        def w():
            return glorot_uniform(rng, hidden_size, hidden_size + input_size)

        def b():
            return np.zeros(hidden_size)

        return cls(w_z=w(), b_z=b(), w_r=w(), b_r=b(), w_h=w(), b_h=b())


@dataclass
class BiGruParams:
    forward_cell: GruCellParams
    backward_cell: GruCellParams


@dataclass
class AttentionParams:
    w: np.ndarray  # (2H,)
    b: np.ndarray  # scalar stored as shape (1,)


def _cell_step_batch(cell: GruCellParams, h_prev: np.ndarray, x_t: np.ndarray):
    """One gated step on a (B, H) state and (B, D) input; returns state + cache."""
    v = np.concatenate([h_prev, x_t], axis=1)
    z = sigmoid(v @ cell.w_z.T + cell.b_z)
    r = sigmoid(v @ cell.w_r.T + cell.b_r)
    vh = np.concatenate([r * h_prev, x_t], axis=1)
    h_tilde = np.tanh(vh @ cell.w_h.T + cell.b_h)
    h_new = (1.0 - z) * h_prev + z * h_tilde
    return h_new, (h_prev, x_t, z, r, h_tilde)


def gru_cell_step(cell: GruCellParams, h_prev, x_t) -> np.ndarray:
    """Single-vector gated step: blends h_prev with the candidate state."""
    h_prev = np.asarray(h_prev, dtype=np.float64).reshape(1, -1)
    x_t = np.asarray(x_t, dtype=np.float64).reshape(1, -1)
    if h_prev.shape[1] != cell.hidden_size or x_t.shape[1] != cell.input_size:
        raise DataError(
            f"cell expects H={cell.hidden_size}, D={cell.input_size}; "
            f"got h={h_prev.shape[1]}, x={x_t.shape[1]}")
    h_new, _ = _cell_step_batch(cell, h_prev, x_t)
    return h_new[0]


def _direction_forward(cell: GruCellParams, x: np.ndarray, reverse: bool):
    """Run one direction over (B, T, D); states and caches indexed by time t."""
    b, t_len, _ = x.shape
    h = np.zeros((b, cell.hidden_size))
    states = np.empty((b, t_len, cell.hidden_size))
    caches = [None] * t_len
    ts = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in ts:
        h, caches[t] = _cell_step_batch(cell, h, x[:, t, :])
        states[:, t, :] = h
    return states, caches


def _direction_backward(cell: GruCellParams, caches, dstates: np.ndarray, reverse: bool):
    """BPTT for one direction; dstates holds per-step output gradients."""
    t_len = dstates.shape[1]
    hsz = cell.hidden_size
    g = {k: np.zeros_like(getattr(cell, k))
         for k in ("w_z", "b_z", "w_r", "b_r", "w_h", "b_h")}
    dh_carry = np.zeros((dstates.shape[0], hsz))
    ts = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in reversed(list(ts)):
        h_prev, x_t, z, r, h_tilde = caches[t]
        dh = dstates[:, t, :] + dh_carry
        dz = dh * (h_tilde - h_prev)
        dh_tilde = dh * z
        dh_prev = dh * (1.0 - z)

        da_h = dh_tilde * (1.0 - h_tilde ** 2)
        vh = np.concatenate([r * h_prev, x_t], axis=1)
        g["w_h"] += da_h.T @ vh
        g["b_h"] += da_h.sum(axis=0)
        dvh = da_h @ cell.w_h
        drh = dvh[:, :hsz]
        dr = drh * h_prev
        dh_prev += drh * r

        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        v = np.concatenate([h_prev, x_t], axis=1)
        g["w_z"] += da_z.T @ v
        g["b_z"] += da_z.sum(axis=0)
        g["w_r"] += da_r.T @ v
        g["b_r"] += da_r.sum(axis=0)
        dv = da_z @ cell.w_z + da_r @ cell.w_r
        dh_carry = dh_prev + dv[:, :hsz]
    return g


def bigru_forward(params: BiGruParams, sequence) -> np.ndarray:
    """(T, D) sequence -> (T, 2H) hidden matrix, zero initial states.

    Row t concatenates the forward state after x_1..x_t with the backward
    state after x_T..x_t.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise DataError(f"expected a non-empty (T, D) sequence, got {seq.shape}")
    if seq.shape[1] != params.forward_cell.input_size:
        raise DataError(
            f"sequence has {seq.shape[1]} channels, cells expect "
            f"{params.forward_cell.input_size}")
    x = seq[None]
    fwd, _ = _direction_forward(params.forward_cell, x, reverse=False)
    bwd, _ = _direction_forward(params.backward_cell, x, reverse=True)
    return np.concatenate([fwd[0], bwd[0]], axis=1)


def attention_pool(params: AttentionParams, hidden) -> tuple:
    """Softmax the per-step scores and return (context vector, weights)."""
    h = np.asarray(hidden, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise DataError(f"expected (T, 2H) hidden matrix, got {h.shape}")
    if h.shape[1] != params.w.size:
        raise DataError(f"hidden width {h.shape[1]} != attention width {params.w.size}")
    scores = h @ params.w + params.b[0]
    alpha = softmax(scores)
    return alpha @ h, alpha


class BiGruAttnModel:
    """BiGRU encoder + attention pooling + dense softmax head."""

    kind = "bigru_attn"

    def __init__(self, in_dim: int, hidden_size: int = DEFAULT_HIDDEN,
                 out_dim: int = 3, dropout_rate: float = 0.2, seed: int = 42):
        self.in_dim = in_dim
        self.hidden_size = hidden_size
        self.out_dim = out_dim
        self.dropout_rate = dropout_rate
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.bigru = BiGruParams(
            forward_cell=GruCellParams.init(hidden_size, in_dim, rng),
            backward_cell=GruCellParams.init(hidden_size, in_dim, rng),
        )
        width = 2 * hidden_size
        self.attention = AttentionParams(
            w=glorot_uniform(rng, 1, width)[0], b=np.zeros(1))
        self.head = DenseLayer(glorot_uniform(rng, out_dim, width), np.zeros(out_dim))

    def parameters(self) -> list:
        cells = (self.bigru.forward_cell, self.bigru.backward_cell)
        out = []
        for cell in cells:
            out.extend([cell.w_z, cell.b_z, cell.w_r, cell.b_r, cell.w_h, cell.b_h])
        out.extend([self.attention.w, self.attention.b])
        out.extend([self.head.weights, self.head.bias])
        return out

    def weight_param_indices(self) -> list:
        # gate weights of both cells, the attention vector, the head matrix
        return [0, 2, 4, 6, 8, 10, 12, 14]

    @staticmethod
    def inputs_from(dataset: Dataset) -> np.ndarray:
        return dataset.sequences()

    def forward_batch(self, x: np.ndarray, mode: str = "infer",
                      rng: np.random.Generator | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise DataError(f"expected (batch, T, {self.in_dim}) input, got {x.shape}")
        if x.shape[1] < 1:
            raise DataError("sequence length must be >= 1")
        if mode == "train" and self.dropout_rate > 0 and rng is None:
            raise DataError("train-mode forward needs an rng for dropout")

        fwd_states, fwd_cache = _direction_forward(self.bigru.forward_cell, x, False)
        bwd_states, bwd_cache = _direction_forward(self.bigru.backward_cell, x, True)
        hidden = np.concatenate([fwd_states, bwd_states], axis=2)  # (B, T, 2H)

        mask_hidden = mask_ctx = None
        hidden_d = hidden
        if mode == "train" and self.dropout_rate > 0:
            mask_hidden = dropout_mask(rng, hidden.shape, self.dropout_rate)
            hidden_d = hidden * mask_hidden

        scores = hidden_d @ self.attention.w + self.attention.b[0]  # (B, T)
        alpha = softmax(scores)
        context = np.einsum("bt,bth->bh", alpha, hidden_d)

        context_d = context
        if mode == "train" and self.dropout_rate > 0:
            mask_ctx = dropout_mask(rng, context.shape, self.dropout_rate)
            context_d = context * mask_ctx

        logits = context_d @ self.head.weights.T + self.head.bias
        probs = softmax(logits)
        cache = {
            "fwd_cache": fwd_cache, "bwd_cache": bwd_cache,
            "hidden_d": hidden_d, "alpha": alpha, "context_d": context_d,
            "mask_hidden": mask_hidden, "mask_ctx": mask_ctx,
        }
        return probs, cache

    def backward_batch(self, cache, dlogits: np.ndarray) -> list:
        hidden_d = cache["hidden_d"]
        alpha = cache["alpha"]

        d_head_w = dlogits.T @ cache["context_d"]
        d_head_b = dlogits.sum(axis=0)
        dcontext = dlogits @ self.head.weights
        if cache["mask_ctx"] is not None:
            dcontext = dcontext * cache["mask_ctx"]

        dalpha = np.einsum("bh,bth->bt", dcontext, hidden_d)
        dhidden_d = alpha[:, :, None] * dcontext[:, None, :]
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        d_attn_w = np.einsum("bt,bth->h", dscores, hidden_d)
        d_attn_b = np.array([dscores.sum()])
        dhidden_d = dhidden_d + dscores[:, :, None] * self.attention.w[None, None, :]

        dhidden = dhidden_d
        if cache["mask_hidden"] is not None:
            dhidden = dhidden * cache["mask_hidden"]

        hsz = self.hidden_size
        g_fwd = _direction_backward(self.bigru.forward_cell, cache["fwd_cache"],
                                    dhidden[:, :, :hsz], reverse=False)
        g_bwd = _direction_backward(self.bigru.backward_cell, cache["bwd_cache"],
                                    dhidden[:, :, hsz:], reverse=True)
        return [
            g_fwd["w_z"], g_fwd["b_z"], g_fwd["w_r"], g_fwd["b_r"], g_fwd["w_h"], g_fwd["b_h"],
            g_bwd["w_z"], g_bwd["b_z"], g_bwd["w_r"], g_bwd["b_r"], g_bwd["w_h"], g_bwd["b_h"],
            d_attn_w, d_attn_b, d_head_w, d_head_b,
        ]


def model_forward(model: BiGruAttnModel, window, mode: str = "infer",
                  rng: np.random.Generator | None = None):
    """Single-window forward pass; returns (per-class probabilities, cache)."""
    seq = np.asarray(window, dtype=np.float64)
    if seq.ndim != 2:
        raise DataError(f"expected a (T, D) window, got shape {seq.shape}")
    probs, cache = model.forward_batch(seq[None], mode, rng)
    return probs[0], cache


def predict(model: BiGruAttnModel, window):
    """Infer-mode prediction: (class id, probabilities, attention weights)."""
    probs, cache = model_forward(model, window, mode="infer")
    return int(np.argmax(probs)), probs, cache["alpha"][0]


def train_bigru(dataset: Dataset, config: TrainConfig = TrainConfig(),
                hidden_size: int = DEFAULT_HIDDEN):
    """Train a fresh BiGRU-Attention model under the shared training contract.

    BPTT gradients are clipped at global norm 5.0 unless the config sets its
    own limit.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    if config.grad_clip_norm is None:
        config = TrainConfig(**{**config.__dict__, "grad_clip_norm": DEFAULT_GRAD_CLIP})
    in_dim = dataset.windows[0].values.shape[1]
    model = BiGruAttnModel(in_dim=in_dim, hidden_size=hidden_size,
                           dropout_rate=config.dropout_rate, seed=config.seed)
    return train(model, dataset, config)
