"""Prediction and replay service: HTTP endpoints plus a streaming protocol.

Loaded models are immutable shared state. Each replay session is owned by
exactly one streaming connection; its cursor has a single writer (the
connection's replay task), so concurrent sessions never interfere.
"""

from __future__ import annotations

import asyncio
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .artifacts import ModelArtifact, load_model, materialize
from .errors import DataError
from .ingest import Dataset, read_windows, standardize_array
from .models import predict_window_values

MODEL_FILE_SUFFIX = ".ekm"
KEY_FOR_CLASS = {0: None, 1: "d", 2: "l"}
DEFAULT_PORT = 8714


@dataclass(frozen=True)
class PredictionEvent:
    ordinal: int
    class_id: int
    key: str | None  # None <=> rest
    probs: tuple
    latency_ms: float
    attention: tuple | None = None

    def as_frame(self) -> dict:
        frame = {"type": "prediction", "ordinal": self.ordinal,
                 "class": self.class_id, "key": self.key,
                 "probs": list(self.probs), "latency_ms": self.latency_ms}
        if self.attention is not None:
            frame["attention"] = list(self.attention)
        return frame

    def as_json(self) -> dict:
        body = {"ordinal": self.ordinal, "class": self.class_id, "key": self.key,
                "probs": list(self.probs), "latency_ms": self.latency_ms}
        if self.attention is not None:
            body["attention"] = list(self.attention)
        return body


@dataclass
class LoadedModel:
    model_id: str
    artifact: ModelArtifact
    model: object


@dataclass
class ReplaySession:
    session_id: str
    dataset: Dataset
    model_id: str
    speed: float
    include_attention: bool = False
    cursor: int = 0
    state: str = "playing"  # playing | paused | finished
    claimed: bool = False


class ModelStore:
    """Immutable registry of models loaded from ``*.ekm`` files."""

    def __init__(self):
        self._models: dict[str, LoadedModel] = {}

    @classmethod
    def from_dir(cls, models_dir) -> "ModelStore":
        store = cls()
        for path in sorted(Path(models_dir).glob(f"*{MODEL_FILE_SUFFIX}")):
            store.add(path.name[:-len(MODEL_FILE_SUFFIX)], load_model(path))
        return store

    def add(self, model_id: str, artifact: ModelArtifact) -> None:
        self._models[model_id] = LoadedModel(model_id, artifact, materialize(artifact))

    def get(self, model_id: str) -> LoadedModel:
        if model_id not in self._models:
            raise KeyError(model_id)
        return self._models[model_id]

    def listing(self) -> list:
        out = []
        for lm in self._models.values():
            entry = {"id": lm.model_id, "kind": lm.artifact.kind}
            if "accuracy" in lm.artifact.meta:
                entry["accuracy_meta"] = lm.artifact.meta["accuracy"]
            out.append(entry)
        return out

    def ids(self) -> list:
        return list(self._models)


def _expected_shape_ok(loaded: LoadedModel, values: np.ndarray) -> bool:
    hp = loaded.artifact.hyperparameters
    if loaded.artifact.kind == "bigru_attn":
        if values.shape[1] != int(hp["in_dim"]):
            return False
        std = loaded.artifact.standardizer
        return std is None or values.size == std.means.size
    expected = int(hp["n_features"] if "n_features" in hp else hp["in_dim"])
    return values.size == expected


def predict_window(loaded: LoadedModel, values: np.ndarray, ordinal: int = 0,
                   include_attention: bool = False) -> PredictionEvent:
    """Standardize, run infer-mode prediction, and map the class to its key."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError(f"window must be 2-D, got shape {values.shape}")
    if not _expected_shape_ok(loaded, values):
        raise DataError(
            f"window shape {values.shape} does not match model {loaded.model_id!r}")
    start = time.perf_counter()
    if loaded.artifact.standardizer is not None:
        values = standardize_array(loaded.artifact.standardizer, values)
    cls, probs, alpha = predict_window_values(
        loaded.artifact.kind, loaded.model, values, want_attention=include_attention)
    latency_ms = (time.perf_counter() - start) * 1000.0
    return PredictionEvent(
        ordinal=ordinal, class_id=cls, key=KEY_FOR_CLASS[cls],
        probs=tuple(float(p) for p in probs), latency_ms=latency_ms,
        attention=None if alpha is None else tuple(float(a) for a in alpha))


async def replay_run(session: ReplaySession, store: ModelStore, sink,
                     controls: asyncio.Queue | None = None) -> None:
    """Emit one prediction frame per window at the session's pace.

    ``sink`` is awaited with each outgoing frame dict. Control frames arrive
    on ``controls``; this task is the sole writer of the session cursor.
    Pacing is drift-free: event k is scheduled at start + k/speed on the
    monotonic clock.
    """
    loop = asyncio.get_running_loop()
    count = len(session.dataset)
    if count == 0:
        raise DataError("replay on empty window set")
    next_deadline: float | None = None

    async def emit_next():
        window = session.dataset.windows[session.cursor]
        event = predict_window(store.get(session.model_id), window.values,
                               ordinal=session.cursor,
                               include_attention=session.include_attention)
        session.cursor += 1
        await sink(event.as_frame())
        if session.cursor >= count:
            session.state = "finished"
            await sink({"type": "state", "value": "finished"})

    async def handle(frame: dict) -> None:
        nonlocal next_deadline
        ftype = frame.get("type")
        if ftype == "select_model":
            model_id = frame.get("id")
            if model_id in store.ids():
                session.model_id = model_id
            return
        if ftype != "control":
            return
        action = frame.get("action")
        if action == "play" and session.state != "finished":
            session.state = "playing"
            next_deadline = None
            await sink({"type": "state", "value": session.state})
        elif action == "pause" and session.state != "finished":
            session.state = "paused"
            await sink({"type": "state", "value": session.state})
        elif action == "step" and session.state != "finished":
            await emit_next()
        elif action == "seek":
            target = int(frame.get("value", 0))
            session.cursor = min(max(target, 0), count)
            if session.cursor < count and session.state == "finished":
                session.state = "paused"
                await sink({"type": "state", "value": session.state})
        elif action == "speed":
            session.speed = max(0.0, float(frame.get("value", 0.0)))
            next_deadline = None

    await sink({"type": "state", "value": session.state})
    while True:
        if session.state == "playing" and session.speed > 0:
            now = loop.time()
            if next_deadline is None:
                next_deadline = now  # first event of a (re)started run is immediate
            if controls is not None:
                try:
                    frame = controls.get_nowait()
                    await handle(frame)
                    continue
                except asyncio.QueueEmpty:
                    pass
                timeout = max(0.0, next_deadline - now)
                try:
                    frame = await asyncio.wait_for(controls.get(), timeout)
                    await handle(frame)
                    continue
                except asyncio.TimeoutError:
                    pass
            else:
                await asyncio.sleep(max(0.0, next_deadline - now))
            await emit_next()
            next_deadline += 1.0 / session.speed if session.speed > 0 else 0.0
            if session.state == "finished" and controls is None:
                return
        else:
            if controls is None:
                return  # nothing can ever resume an uncontrolled session
            frame = await controls.get()
            await handle(frame)


class PredictBody(BaseModel):
    model: str
    window: list
    attention: bool = False


class ReplayBody(BaseModel):
    model: str
    windows: str
    speed: float = 1.0
    attention: bool = False


def create_app(models_dir=None, windows_dir=None, store: ModelStore | None = None) -> FastAPI:
    app = FastAPI(title="cortexkey")
    from fastapi.middleware.cors import CORSMiddleware
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.store = store if store is not None else ModelStore.from_dir(models_dir)
    app.state.windows_dir = Path(windows_dir) if windows_dir else Path.cwd()
    app.state.sessions = {}

    @app.get("/models")
    async def list_models():
        return {"models": app.state.store.listing()}

    @app.post("/predict")
    async def predict(body: PredictBody):
        try:
            loaded = app.state.store.get(body.model)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {body.model!r}")
        try:
            values = np.asarray(body.window, dtype=np.float64)
            if values.ndim != 2:
                raise DataError(f"window must be 2-D, got {values.shape}")
            event = await asyncio.to_thread(
                predict_window, loaded, values, 0, body.attention)
        except (DataError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return event.as_json()

    @app.post("/replay")
    async def start_replay(body: ReplayBody):
        try:
            app.state.store.get(body.model)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {body.model!r}")
        if "/" in body.windows or ".." in body.windows:
            raise HTTPException(status_code=422, detail="bad window set name")
        path = app.state.windows_dir / f"{body.windows}.windows.bin"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown window set {body.windows!r}")
        try:
            dataset = read_windows(path)
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if body.speed < 0:
            raise HTTPException(status_code=422, detail="speed must be >= 0")
        token = uuid.uuid4().hex
        app.state.sessions[token] = ReplaySession(
            session_id=token, dataset=dataset, model_id=body.model,
            speed=body.speed, include_attention=body.attention)
        return {"session": token}

    @app.websocket("/stream")
    async def stream(ws: WebSocket, session: str):
        sess = app.state.sessions.get(session)
        if sess is None or sess.claimed:
            await ws.accept()
            await ws.close(code=1008, reason="unknown or already-claimed session")
            return
        sess.claimed = True
        await ws.accept()
        controls: asyncio.Queue = asyncio.Queue()

        async def sink(frame: dict):
            await ws.send_text(json.dumps(frame))

        async def run():
            try:
                await replay_run(sess, app.state.store, sink, controls)
            except (WebSocketDisconnect, RuntimeError):
                pass  # peer went away mid-send

        replay_task = asyncio.create_task(run())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    frame = json.loads(raw)
                except json.JSONDecodeError:
                    continue  # malformed control frames are ignored
                await controls.put(frame)
        except WebSocketDisconnect:
            pass
        finally:
            replay_task.cancel()
            try:
                await replay_task
            except (asyncio.CancelledError, Exception):
                pass
            app.state.sessions.pop(session, None)

    return app
