"""Session loading, onset detection, trial windowing, splits, standardization.

A session bundle is three sibling files sharing a stem:

    <stem>.meta.json   UTF-8 JSON: {"id", "nS", "sampFreq", "channels"}
    <stem>.eeg         raw little-endian float32, row-major, nS x n_channels
    <stem>.markers     nS unsigned bytes, one marker per sample

Trial windows are cut at marker transitions and flattened time-major:
feature index = t * n_channels + channel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

# 10-20 montage retained for decoding; A1/A2 (earlobes) and X5 are dropped.
DEFAULT_KEEP_CHANNELS: tuple[str, ...] = (
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2",
    "F7", "F8", "T3", "T4", "T5", "T6", "Fz", "Cz", "Pz",
)

WINDOW_LEN = 200
N_CLASSES = 3
VALID_MARKERS = frozenset({0, 1, 2})


@dataclass(frozen=True)
class SessionMeta:
    id: str
    num_samples: int
    sample_rate_hz: int
    channel_names: tuple[str, ...]

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.num_samples < 0:
            raise DataError(f"num_samples must be nonnegative, got {self.num_samples}")

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.sample_rate_hz


@dataclass(frozen=True)
class RawSession:
    """Multichannel samples plus the per-sample marker stream.

    ``channels`` lists the columns actually present in ``samples`` (19 after
    the default pruning); ``meta.channel_names`` keeps the original montage.
    """

    meta: SessionMeta
    channels: tuple[str, ...]
    samples: np.ndarray  # (nS, len(channels)) microvolts
    markers: np.ndarray  # (nS,) values in {0, 1, 2}

    def __post_init__(self):
        if self.samples.shape[0] != self.meta.num_samples:
            raise DataError(
                f"samples rows {self.samples.shape[0]} != nS {self.meta.num_samples}"
            )
        if self.markers.shape[0] != self.meta.num_samples:
            raise DataError(
                f"markers length {self.markers.shape[0]} != nS {self.meta.num_samples}"
            )
        if self.samples.shape[1] != len(self.channels):
            raise DataError(
                f"samples has {self.samples.shape[1]} columns for {len(self.channels)} channels"
            )
        bad = set(np.unique(self.markers)) - VALID_MARKERS
        if bad:
            raise DataError(f"marker values outside {{0,1,2}}: {sorted(bad)}")


@dataclass(frozen=True)
class Onset:
    """A marker transition: markers[sample_index] != markers[sample_index - 1]."""

    sample_index: int
    label: int


@dataclass(frozen=True)
class TrialWindow:
    """One onset-aligned epoch, time-major (row t = one sample instant).

    Production windows are 200 x 19; synthetic tasks may use other shapes.
    """

    values: np.ndarray  # (window_len, n_channels)
    label: int
    source: tuple[str, int] = ("", -1)  # (session id, onset sample index)

    def flat(self) -> np.ndarray:
        """Flattened feature vector, index = t * n_channels + channel."""
        return self.values.reshape(-1)


@dataclass(frozen=True)
class Dataset:
    windows: tuple[TrialWindow, ...]
    class_counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        counts = [0] * N_CLASSES
        for w in self.windows:
            if not 0 <= w.label < N_CLASSES:
                raise DataError(f"label {w.label} outside {{0,1,2}}")
            counts[w.label] += 1
        object.__setattr__(self, "class_counts", tuple(counts))

    def __len__(self) -> int:
        return len(self.windows)

    def labels(self) -> np.ndarray:
        return np.array([w.label for w in self.windows], dtype=np.int64)

    def features(self) -> np.ndarray:
        """(n, T*C) matrix of flattened windows."""
        return np.stack([w.flat() for w in self.windows]) if self.windows else np.empty((0, 0))

    def sequences(self) -> np.ndarray:
        """(n, T, C) array of unflattened windows."""
        return np.stack([w.values for w in self.windows]) if self.windows else np.empty((0, 0, 0))

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.windows[i] for i in indices))


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score transform, fit on training data only."""

    means: np.ndarray  # (n_features,)
    stds: np.ndarray   # (n_features,) strictly positive

    def __post_init__(self):
        if np.any(self.stds <= 0):
            raise DataError("standardizer stds must all be positive")


def load_session(path, keep_channels=DEFAULT_KEEP_CHANNELS) -> RawSession:
    """Load one session bundle and prune it to ``keep_channels`` in keep order."""
    stem = Path(path)
    meta_path = stem.with_name(stem.name + ".meta.json")
    eeg_path = stem.with_name(stem.name + ".eeg")
    markers_path = stem.with_name(stem.name + ".markers")
    for p in (meta_path, eeg_path, markers_path):
        if not p.exists():
            raise FileNotFoundError(f"session bundle file missing: {p}")

    raw_meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        meta = SessionMeta(
            id=str(raw_meta["id"]),
            num_samples=int(raw_meta["nS"]),
            sample_rate_hz=int(raw_meta["sampFreq"]),
            channel_names=tuple(raw_meta["channels"]),
        )
    except KeyError as exc:
        raise DataError(f"{meta_path}: missing meta field {exc}") from exc

    n_chan = len(meta.channel_names)
    payload = np.fromfile(eeg_path, dtype="<f4")
    if payload.size != meta.num_samples * n_chan:
        raise DataError(
            f"{eeg_path}: expected {meta.num_samples * n_chan} float32 values "
            f"({meta.num_samples} x {n_chan}), found {payload.size}"
        )
    samples = payload.reshape(meta.num_samples, n_chan).astype(np.float64)

    markers = np.fromfile(markers_path, dtype=np.uint8)
    if markers.size != meta.num_samples:
        raise DataError(
            f"{markers_path}: expected {meta.num_samples} marker bytes, found {markers.size}"
        )
    bad = set(np.unique(markers)) - VALID_MARKERS
    if bad:
        raise DataError(f"{markers_path}: marker values outside {{0,1,2}}: {sorted(bad)}")

    unknown = [c for c in keep_channels if c not in meta.channel_names]
    if unknown:
        raise DataError(f"unknown channel name(s) in keep list: {unknown}")
    cols = [meta.channel_names.index(c) for c in keep_channels]

    return RawSession(
        meta=meta,
        channels=tuple(keep_channels),
        samples=samples[:, cols],
        markers=markers.astype(np.int64),
    )


def extract_onsets(markers) -> list[Onset]:
    """One Onset per index i >= 1 where markers[i] != markers[i-1].

    Index 0 never yields an onset: an onset is defined by change.
    """
    m = np.asarray(markers)
    if m.size == 0:
        raise DataError("markers must be non-empty")
    bad = set(np.unique(m)) - VALID_MARKERS
    if bad:
        raise DataError(f"marker values outside {{0,1,2}}: {sorted(bad)}")
    idx = np.flatnonzero(m[1:] != m[:-1]) + 1
    return [Onset(sample_index=int(i), label=int(m[i])) for i in idx]


def extract_windows(session: RawSession, onsets, window_len: int = WINDOW_LEN) -> list[TrialWindow]:
    """Cut [onset, onset + window_len) epochs; overruns past nS are dropped."""
    if window_len < 1:
        raise DataError(f"window_len must be >= 1, got {window_len}")
    n = session.meta.num_samples
    out = []
    for onset in onsets:
        if onset.sample_index + window_len > n:
            continue
        values = session.samples[onset.sample_index:onset.sample_index + window_len].copy()
        values.flags.writeable = False
        out.append(TrialWindow(values=values, label=onset.label,
                               source=(session.meta.id, onset.sample_index)))
    return out


def _round_half_even(x: float) -> int:
    return int(round(x))


def stratified_split_indices(labels, fraction: float, seed: int):
    """Seeded stratified shuffle split; returns (rest_indices, held_out_indices).

    Held-out counts start at round(class_count * fraction) per class and are
    adjusted (largest remainder first, ties to the lowest class id) so the
    total equals round(n * fraction).
    """
    labels = np.asarray(labels)
    n = labels.size
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must be in (0, 1), got {fraction}")
    if n == 0:
        raise DataError("cannot split an empty label vector")

    classes = sorted(int(c) for c in np.unique(labels))
    target_total = _round_half_even(n * fraction)
    per_class = {}
    remainders = {}
    for c in classes:
        count = int(np.sum(labels == c))
        if count < 2:
            raise DataError(f"class {c} has {count} window(s); need at least 2 to split")
        exact = count * fraction
        per_class[c] = _round_half_even(exact)
        remainders[c] = exact - per_class[c]

    diff = target_total - sum(per_class.values())
    if diff > 0:
        order = sorted(classes, key=lambda c: (-remainders[c], c))
        i = 0
        while diff > 0:
            c = order[i % len(order)]
            if per_class[c] < int(np.sum(labels == c)):
                per_class[c] += 1
                diff -= 1
            i += 1
    elif diff < 0:
        order = sorted(classes, key=lambda c: (remainders[c], c))
        i = 0
        while diff < 0:
            c = order[i % len(order)]
            if per_class[c] > 0:
                per_class[c] -= 1
                diff += 1
            i += 1

    rng = np.random.default_rng(seed)
    held, rest = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        held.extend(idx[:per_class[c]].tolist())
        rest.extend(idx[per_class[c]:].tolist())
    return sorted(rest), sorted(held)


def assemble(sessions, window_len: int = WINDOW_LEN) -> Dataset:
    """Extract onset-aligned windows from every session, in session order."""
    windows = []
    for session in sessions:
        onsets = extract_onsets(session.markers)
        windows.extend(extract_windows(session, onsets, window_len))
    return Dataset(tuple(windows))


def split_dataset(dataset: Dataset, test_fraction: float, seed: int):
    """Stratified shuffle split of a dataset into (train, test)."""
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    train_idx, test_idx = stratified_split_indices(dataset.labels(), test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def assemble_and_split(sessions, test_fraction: float, seed: int,
                       window_len: int = WINDOW_LEN):
    """Window all sessions then split stratified; deterministic per seed."""
    return split_dataset(assemble(sessions, window_len), test_fraction, seed)


def assemble_by_session(train_sessions, test_sessions, window_len: int = WINDOW_LEN):
    """Subject-wise alternative to the stratified split: whole sessions per side."""
    return assemble(train_sessions, window_len), assemble(test_sessions, window_len)


def standardizer_fit(train: Dataset) -> Standardizer:
    """Per-feature mean and population std over the training windows.

    Zero-variance features get std coerced to 1 so they pass through unscaled.
    """
    if len(train) < 2:
        raise DataError(f"standardizer needs >= 2 windows, got {len(train)}")
    x = train.features()
    means = x.mean(axis=0)
    stds = x.std(axis=0)  # population (divide by n)
    stds = np.where(stds == 0.0, 1.0, stds)
    return Standardizer(means=means, stds=stds)


def standardizer_apply(s: Standardizer, w: TrialWindow) -> TrialWindow:
    """Map each feature x -> (x - mean) / std, preserving window shape."""
    shape = w.values.shape
    flat = (w.flat() - s.means) / s.stds
    values = flat.reshape(shape)
    values.flags.writeable = False
    return TrialWindow(values=values, label=w.label, source=w.source)


def standardize_dataset(s: Standardizer, dataset: Dataset) -> Dataset:
    return Dataset(tuple(standardizer_apply(s, w) for w in dataset.windows))


def standardize_array(s: Standardizer, values: np.ndarray) -> np.ndarray:
    """Standardize one raw (T, C) window given as a bare array."""
    flat = (values.reshape(-1) - s.means) / s.stds
    return flat.reshape(values.shape)


def write_windows(path, dataset: Dataset) -> None:
    """Write a window set file: JSON header line, f32 payload, JSON label line."""
    if len(dataset) == 0:
        raise DataError("refusing to write an empty window set")
    t, c = dataset.windows[0].values.shape
    header = json.dumps({"count": len(dataset), "T": t, "C": c})
    labels = json.dumps({"labels": [int(w.label) for w in dataset.windows]})
    payload = dataset.sequences().astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(payload)
        f.write(labels.encode("utf-8") + b"\n")


def read_windows(path) -> Dataset:
    """Read a window set file written by :func:`write_windows`."""
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing window-set header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
        count, t, c = int(header["count"]), int(header["T"]), int(header["C"])
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: bad window-set header: {exc}") from exc
    body_start = nl + 1
    payload_bytes = count * t * c * 4
    if len(blob) < body_start + payload_bytes:
        raise DataError(f"{path}: truncated window payload")
    values = np.frombuffer(blob[body_start:body_start + payload_bytes], dtype="<f4")
    values = values.reshape(count, t, c).astype(np.float64)
    try:
        trailer = json.loads(blob[body_start + payload_bytes:].decode("utf-8"))
        labels = trailer["labels"]
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: bad window-set label trailer: {exc}") from exc
    if len(labels) != count:
        raise DataError(f"{path}: {len(labels)} labels for {count} windows")
    windows = []
    for i in range(count):
        v = values[i].copy()
        v.flags.writeable = False
        windows.append(TrialWindow(values=v, label=int(labels[i]), source=(str(path), i)))
    return Dataset(tuple(windows))
