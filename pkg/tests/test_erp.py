import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_window
from cortexkey.erp import (EventSegment, compute_erp, erp_csv_rows,
                           event_timeline, timeline_to_markers)
from cortexkey.errors import DataError


class TestComputeErp:
    def test_mean_of_two_trials(self):
        w1 = make_window(np.full((4, 2), 1.0), 1)
        w2 = make_window(np.full((4, 2), 3.0), 1)
        curve = compute_erp([w1, w2], channel=0)
        assert curve.values[0] == 2.0
        assert curve.trial_count == 2

    def test_single_trial_is_identity(self):
        vals = np.arange(8, dtype=float).reshape(4, 2)
        w = make_window(vals, 2)
        curve = compute_erp([w], channel=1)
        assert np.array_equal(curve.values, vals[:, 1])

    def test_class_filter(self):
        w1 = make_window(np.full((2, 1), 1.0), 0)
        w2 = make_window(np.full((2, 1), 9.0), 1)
        curve = compute_erp([w1, w2], channel=0, class_filter=1)
        assert curve.trial_count == 1
        assert np.all(curve.values == 9.0)

    def test_empty_selection(self):
        w = make_window(np.zeros((2, 1)), 0)
        with pytest.raises(DataError):
            compute_erp([w], channel=0, class_filter=2)

    def test_noise_averages_toward_template(self):
        rng = np.random.default_rng(77)
        template = np.sin(np.linspace(0, 4 * np.pi, 50))
        windows = [
            make_window((template + rng.normal(0, 1.0, size=50))[:, None], 1, ("n", i))
            for i in range(100)
        ]
        curve = compute_erp(windows, channel=0)
        # 5 sigma / sqrt(100) bound for seeded zero-mean unit noise
        assert np.max(np.abs(curve.values - template)) <= 0.5

    def test_identical_trials_equal_any_one(self):
        vals = np.linspace(-1, 1, 12).reshape(6, 2)
        windows = [make_window(vals, 0, ("k", i)) for i in range(5)]
        curve = compute_erp(windows, channel=1)
        assert np.array_equal(curve.values, vals[:, 1])

    def test_linearity_over_union(self):
        rng = np.random.default_rng(3)
        group_a = [make_window(rng.normal(size=(5, 1)), 0, ("a", i)) for i in range(3)]
        group_b = [make_window(rng.normal(size=(5, 1)), 0, ("b", i)) for i in range(7)]
        erp_a = compute_erp(group_a, 0).values
        erp_b = compute_erp(group_b, 0).values
        erp_ab = compute_erp(group_a + group_b, 0).values
        blended = (3 * erp_a + 7 * erp_b) / 10
        assert np.max(np.abs(erp_ab - blended)) < 1e-9


class TestEventTimeline:
    def test_run_length_example(self):
        segs = event_timeline([0, 0, 1, 1, 2])
        assert segs == [EventSegment(0, 2, 0), EventSegment(2, 4, 1), EventSegment(4, 5, 2)]

    def test_single_sample(self):
        assert event_timeline([1]) == [EventSegment(0, 1, 1)]

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            event_timeline([])

    @given(st.lists(st.integers(0, 2), min_size=1, max_size=300))
    @settings(max_examples=80, deadline=None)
    def test_decode_inverts_encode(self, markers):
        segs = event_timeline(markers)
        assert timeline_to_markers(segs).tolist() == markers
        # segments partition [0, n) with no gaps or overlaps
        assert segs[0].start_index == 0
        assert segs[-1].end_index == len(markers)
        for prev, cur in zip(segs, segs[1:]):
            assert prev.end_index == cur.start_index
            assert prev.marker != cur.marker


class TestCsvExport:
    def test_rows_use_sample_period(self):
        curve = compute_erp([make_window(np.ones((4, 1)), 0)], channel=0)
        rows = list(erp_csv_rows(curve, sample_rate_hz=200))
        assert rows[0] == (0.0, 1.0, 1)
        assert rows[1][0] == pytest.approx(1 / 200)
        assert len(rows) == 4
