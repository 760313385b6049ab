"""Onset-aligned ERP averages and marker-stream timelines.

Exports are numeric (CSV rows); rendering is left to downstream tools.
No baseline correction is applied (``baseline_correct`` defaults off).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_SAMPLE_RATE_HZ = 200


@dataclass(frozen=True)
class ErpCurve:
    channel: str
    class_filter: int | None
    values: np.ndarray  # (window_len,) mean microvolts per time step
    trial_count: int


@dataclass(frozen=True)
class EventSegment:
    """Half-open run [start_index, end_index) of one constant marker value."""

    start_index: int
    end_index: int
    marker: int


def compute_erp(windows, channel: int, class_filter: int | None = None,
                channel_name: str | None = None, baseline_correct: bool = False) -> ErpCurve:
    """Pointwise mean of one channel column across matching trial windows."""
    selected = [w for w in windows if class_filter is None or w.label == class_filter]
    if not selected:
        raise DataError(f"no windows match class filter {class_filter}")
    stack = np.stack([w.values[:, channel] for w in selected])
    values = stack.mean(axis=0)
    if baseline_correct:
        values = values - values[0]
    return ErpCurve(
        channel=channel_name if channel_name is not None else str(channel),
        class_filter=class_filter,
        values=values,
        trial_count=len(selected),
    )


def event_timeline(markers) -> list[EventSegment]:
    """Run-length encode the marker stream into contiguous segments."""
    m = np.asarray(markers)
    if m.size == 0:
        raise DataError("markers must be non-empty")
    boundaries = np.flatnonzero(m[1:] != m[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [m.size]))
    return [EventSegment(int(s), int(e), int(m[s])) for s, e in zip(starts, ends)]


def timeline_to_markers(segments) -> np.ndarray:
    """Inverse of :func:`event_timeline`; used to verify the encoding."""
    if not segments:
        raise DataError("empty timeline")
    out = np.empty(segments[-1].end_index, dtype=np.int64)
    for seg in segments:
        out[seg.start_index:seg.end_index] = seg.marker
    return out


def erp_csv_rows(curve: ErpCurve, sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ):
    """Yield (time_s, mean_uV, trial_count) rows for CSV export."""
    for t, v in enumerate(curve.values):
        yield t / sample_rate_hz, float(v), curve.trial_count
