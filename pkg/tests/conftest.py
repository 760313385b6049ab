import json
import zlib

import numpy as np
import pytest

from cortexkey.ingest import Dataset, TrialWindow

# 22-channel montage as recorded: 10-20 labels plus A1/A2 earlobes and X5.
FULL_CHANNELS = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2",
    "A1", "A2", "F7", "F8", "T3", "T4", "T5", "T6", "Fz", "Cz", "Pz", "X5",
]


def write_bundle(directory, stem, markers, data=None, channels=None,
                 sample_rate=200, meta_overrides=None, marker_bytes=None):
    """Write a session bundle (meta/eeg/markers) and return its stem path."""
    channels = list(channels) if channels is not None else list(FULL_CHANNELS)
    markers = np.asarray(markers, dtype=np.uint8)
    n = markers.size
    if data is None:
        rng = np.random.default_rng(zlib.crc32(stem.encode()))
        data = rng.normal(size=(n, len(channels))).astype(np.float32)
    data = np.asarray(data, dtype="<f4")
    meta = {"id": stem, "nS": n, "sampFreq": sample_rate, "channels": channels}
    if meta_overrides:
        meta.update(meta_overrides)
    base = directory / stem
    (directory / f"{stem}.meta.json").write_text(json.dumps(meta), encoding="utf-8")
    data.tofile(directory / f"{stem}.eeg")
    raw_markers = marker_bytes if marker_bytes is not None else markers.tobytes()
    (directory / f"{stem}.markers").write_bytes(raw_markers)
    return base


def make_window(values, label, source=("test", 0)):
    values = np.asarray(values, dtype=np.float64)
    values.flags.writeable = False
    return TrialWindow(values=values, label=label, source=source)


def sequence_dataset(n, t, d, seed, class_scale=2.0, noise=1.0):
    """Class k = noisy sequences with constant mean k * class_scale."""
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(n):
        label = i % 3
        vals = rng.normal(loc=label * class_scale, scale=noise, size=(t, d))
        windows.append(make_window(vals, label, source=("seq-toy", i)))
    return Dataset(tuple(windows))


def blob_dataset(n, n_features, seed, separation=4.0, sigma=1.0):
    """3-class Gaussian blobs with means ``separation`` sigmas apart."""
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(n):
        label = i % 3
        vals = rng.normal(loc=label * separation * sigma, scale=sigma,
                          size=(1, n_features))
        windows.append(make_window(vals, label, source=("blob-toy", i)))
    return Dataset(tuple(windows))


@pytest.fixture
def bundle_dir(tmp_path):
    return tmp_path
