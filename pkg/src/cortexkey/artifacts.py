"""Model persistence: magic + JSON header line + concatenated f32 blobs.

Layout:

    bytes 0..7   magic b"EEGKBD1\\n"
    one UTF-8 JSON line: {"kind", "version", "params": [{"name", "shape"}...],
                          "hyperparameters", "standardizer", "meta"}
    little-endian float32 blobs, concatenated in header order

Parameters are quantized to float32 at artifact creation; materialized
models carry those exact values, so save -> load -> save is byte-identical
and predictions are reproduced exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bigru_attn import AttentionParams, BiGruAttnModel, BiGruParams, GruCellParams
from .classical import GnbModel, SvmConfig, SvmModel
from .errors import DataError
from .ingest import Standardizer
from .nn_core import DenseLayer, MlpModel

MAGIC = b"EEGKBD1\n"
FORMAT_VERSION = 1
KINDS = ("gnb", "svm", "mlp", "bigru_attn")


@dataclass
class ModelArtifact:
    kind: str
    hyperparameters: dict
    params: dict  # name -> float32 ndarray, insertion order = blob order
    standardizer: Standardizer | None = None
    version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")


def _f32(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype="<f4")


def _f64(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float64)


def build_artifact(model, standardizer: Standardizer | None = None,
                   meta: dict | None = None) -> ModelArtifact:
    """Snapshot a trained model (any of the four kinds) into an artifact."""
    if isinstance(model, GnbModel):
        f = model.means.shape[1]
        return ModelArtifact(
            kind="gnb",
            hyperparameters={"n_features": f, "var_floor": model.var_floor},
            params={"priors": _f32(model.priors), "means": _f32(model.means),
                    "variances": _f32(model.variances)},
            standardizer=standardizer, meta=meta or {})
    if isinstance(model, SvmModel):
        return ModelArtifact(
            kind="svm",
            hyperparameters={"n_features": model.n_features, "C": model.config.C,
                             "epochs": model.config.epochs, "seed": model.config.seed},
            params={"weights": _f32(model.weights), "biases": _f32(model.biases)},
            standardizer=standardizer, meta=meta or {})
    if isinstance(model, MlpModel):
        params = {}
        for i, layer in enumerate(model.layers):
            params[f"layer{i}.weights"] = _f32(layer.weights)
            params[f"layer{i}.bias"] = _f32(layer.bias)
        return ModelArtifact(
            kind="mlp",
            hyperparameters={"in_dim": model.in_dim,
                             "hidden_sizes": list(model.hidden_sizes),
                             "out_dim": model.out_dim,
                             "dropout_rate": model.dropout_rate,
                             "seed": model.seed},
            params=params, standardizer=standardizer, meta=meta or {})
    if isinstance(model, BiGruAttnModel):
        params = {}
        for tag, cell in (("fwd", model.bigru.forward_cell),
                          ("bwd", model.bigru.backward_cell)):
            for key in ("w_z", "b_z", "w_r", "b_r", "w_h", "b_h"):
                params[f"{tag}.{key}"] = _f32(getattr(cell, key))
        params["attn.w"] = _f32(model.attention.w)
        params["attn.b"] = _f32(model.attention.b)
        params["head.weights"] = _f32(model.head.weights)
        params["head.bias"] = _f32(model.head.bias)
        return ModelArtifact(
            kind="bigru_attn",
            hyperparameters={"in_dim": model.in_dim,
                             "hidden_size": model.hidden_size,
                             "out_dim": model.out_dim,
                             "dropout_rate": model.dropout_rate,
                             "seed": model.seed},
            params=params, standardizer=standardizer, meta=meta or {})
    raise DataError(f"cannot serialize model of type {type(model).__name__}")


def materialize(artifact: ModelArtifact):
    """Rebuild a runnable model from an artifact's exact float32 values."""
    hp = artifact.hyperparameters
    p = artifact.params
    if artifact.kind == "gnb":
        return GnbModel(priors=_f64(p["priors"]), means=_f64(p["means"]),
                        variances=_f64(p["variances"]),
                        var_floor=float(hp["var_floor"]))
    if artifact.kind == "svm":
        return SvmModel(weights=_f64(p["weights"]), biases=_f64(p["biases"]),
                        config=SvmConfig(C=float(hp["C"]), epochs=int(hp["epochs"]),
                                         seed=int(hp["seed"])))
    if artifact.kind == "mlp":
        model = MlpModel(in_dim=int(hp["in_dim"]),
                         hidden_sizes=tuple(hp["hidden_sizes"]),
                         out_dim=int(hp["out_dim"]),
                         dropout_rate=float(hp["dropout_rate"]),
                         seed=int(hp["seed"]))
        for i, layer in enumerate(model.layers):
            layer.weights = _f64(p[f"layer{i}.weights"])
            layer.bias = _f64(p[f"layer{i}.bias"])
        return model
    if artifact.kind == "bigru_attn":
        model = BiGruAttnModel(in_dim=int(hp["in_dim"]),
                               hidden_size=int(hp["hidden_size"]),
                               out_dim=int(hp["out_dim"]),
                               dropout_rate=float(hp["dropout_rate"]),
                               seed=int(hp["seed"]))
        cells = {}
        for tag in ("fwd", "bwd"):
            cells[tag] = GruCellParams(**{key: _f64(p[f"{tag}.{key}"])
                                          for key in ("w_z", "b_z", "w_r", "b_r", "w_h", "b_h")})
        model.bigru = BiGruParams(forward_cell=cells["fwd"], backward_cell=cells["bwd"])
        model.attention = AttentionParams(w=_f64(p["attn.w"]), b=_f64(p["attn.b"]))
        model.head = DenseLayer(weights=_f64(p["head.weights"]), bias=_f64(p["head.bias"]))
        return model
    raise DataError(f"unknown model kind {artifact.kind!r}")


def save_model(artifact: ModelArtifact, path) -> None:
    header = {
        "kind": artifact.kind,
        "version": artifact.version,
        "params": [{"name": name, "shape": list(arr.shape)}
                   for name, arr in artifact.params.items()],
        "hyperparameters": artifact.hyperparameters,
        "standardizer": (
            None if artifact.standardizer is None else
            {"means": artifact.standardizer.means.tolist(),
             "stds": artifact.standardizer.stds.tolist()}),
        "meta": artifact.meta,
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        for arr in artifact.params.values():
            f.write(_f32(arr).tobytes())


def load_model(path) -> ModelArtifact:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: bad magic, not a model file")
    nl = blob.find(b"\n", len(MAGIC))
    if nl < 0:
        raise DataError(f"{path}: truncated file, no header line")
    try:
        header = json.loads(blob[len(MAGIC):nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable header: {exc}") from exc

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unknown format version {version!r}")

    declared = header.get("params", [])
    expected_bytes = sum(int(np.prod(d["shape"])) for d in declared) * 4
    payload = blob[nl + 1:]
    if len(payload) != expected_bytes:
        raise DataError(
            f"{path}: blob length mismatch, header declares {expected_bytes} "
            f"bytes, found {len(payload)}")

    params = {}
    offset = 0
    for d in declared:
        shape = tuple(int(s) for s in d["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[d["name"]] = arr.reshape(shape).copy()
        offset += count * 4

    std = None
    raw_std = header.get("standardizer")
    if raw_std is not None:
        std = Standardizer(means=np.asarray(raw_std["means"], dtype=np.float64),
                           stds=np.asarray(raw_std["stds"], dtype=np.float64))
    return ModelArtifact(kind=header["kind"],
                         hyperparameters=header.get("hyperparameters", {}),
                         params=params, standardizer=std, version=version,
                         meta=header.get("meta", {}))
