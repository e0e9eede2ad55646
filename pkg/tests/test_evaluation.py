import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loco import evaluation as ev
from loco.errors import InvalidInputError


class TestDecode:
    def test_two_peaks(self):
        p = [0, 0, 0.9, 0, 0, 0.8, 0]
        assert ev.decode(p, 0.5, 2).times[0].tolist() == [2, 5]

    def test_silent(self):
        assert ev.decode(np.zeros(20), 0.5, 2).times[0].tolist() == []

    def test_suppression(self):
        p = [0.9, 0.85, 0, 0, 0]
        assert ev.decode(p, 0.5, 2).times[0].tolist() == [0]

    def test_plateau_keeps_earliest(self):
        assert ev.peak_pick([0, 0.7, 0.7, 0], 0.5, 2).tolist() == [1]

    def test_counts(self):
        p = np.array([[0.99, 0.0], [0.0, 0.5], [0.99, 0.5]])
        dec = ev.decode(p, 0.5, 1)
        np.testing.assert_allclose(dec.expected_counts, [1.98, 1.0])
        assert dec.modal_counts[0] == 2

    def test_bad_threshold(self):
        with pytest.raises(InvalidInputError):
            ev.decode([0.5], 1.0, 1)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(1, 8), st.floats(0.05, 0.95))
    def test_invariants(self, p, sep, thr):
        times = ev.peak_pick(p, thr, sep)
        assert np.all(np.diff(times) >= sep)
        assert all(p[t] > thr for t in times)


class TestMatch:
    def test_mixed(self):
        r = ev.match([10, 50], [12, 300], 5)
        assert (r.tp, r.fp, r.fn) == (1, 1, 1)
        assert r.f1 == pytest.approx(0.5)
        assert r.signed_errors == [-2]

    def test_identity(self):
        r = ev.match([3, 9, 40], [3, 9, 40], 2)
        assert r.precision == r.recall == r.f1 == 1.0
        assert r.signed_errors == [0, 0, 0]

    def test_both_empty(self):
        r = ev.match([], [], 2)
        assert r.f1 == 1.0 and r.precision == 1.0 and r.recall == 1.0

    def test_zero_tolerance(self):
        r = ev.match([4, 8], [4, 9], 0)
        assert (r.tp, r.fp, r.fn) == (1, 1, 1)

    def test_nearest_first(self):
        # 11 is nearer to 10 than 7 is, so 7 must stay unmatched
        r = ev.match([7, 11], [10], 3)
        assert r.tp == 1 and r.signed_errors == [1]

    def test_no_hits(self):
        r = ev.match([1], [100], 2)
        assert r.f1 == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 100), max_size=10, unique=True),
           st.lists(st.integers(0, 100), max_size=10, unique=True), st.integers(0, 6))
    def test_swap_symmetry(self, a, b, tol):
        a, b = sorted(a), sorted(b)
        r, s = ev.match(a, b, tol), ev.match(b, a, tol)
        assert (r.tp, r.fp, r.fn) == (s.tp, s.fn, s.fp)
        assert sorted(r.signed_errors) == sorted(-e for e in s.signed_errors)
        assert all(abs(e) <= tol for e in r.signed_errors)


class TestAggregate:
    def test_single(self):
        r = ev.match([10, 50], [12, 300], 5)
        s = ev.aggregate([r])
        assert (s.tp, s.fp, s.fn, s.f1) == (r.tp, r.fp, r.fn, r.f1)
        assert s.mean_error == -2.0

    def test_pooled(self):
        s = ev.aggregate([ev.MatchResult(1, 0, 0), ev.MatchResult(0, 1, 1)])
        assert s.precision == 0.5 and s.recall == 0.5

    def test_zero_spread(self):
        s = ev.aggregate([ev.match([1, 5], [1, 5], 1)])
        assert s.std_error == 0.0

    def test_macro(self):
        s = ev.aggregate([ev.MatchResult(1, 0, 0), ev.MatchResult(0, 1, 1)], macro=True)
        assert s.f1 == pytest.approx(0.5)

    def test_order_invariant(self):
        rs = [ev.match([1, 9], [2], 1), ev.match([], [4], 1), ev.match([3], [3], 0)]
        assert ev.aggregate(rs).f1 == ev.aggregate(rs[::-1]).f1

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            ev.aggregate([])


def test_center_matching():
    tp, fp, fn, d = ev.match_centers([(4, 4), (60, 60)], [(5, 4), (30, 30)], 16)
    assert (tp, fp, fn) == (1, 1, 1) and d == [1.0]


def test_csv_layout():
    r = ev.match([1], [1], 0)
    rows = [{"sample": 0, "channel": 0, "tp": 1, "fp": 0, "fn": 0, "precision": 1.0, "recall": 1.0, "f1": 1.0,
             "label_count": 1, "modal_count": 1, "expected_count": 1.0, "mean_error": 0.0}]
    text = ev.metrics_csv(rows, ev.aggregate([r]), 1.0)
    lines = text.splitlines()
    assert lines[0] == ",".join(ev.CSV_COLUMNS)
    assert lines[-1].startswith("summary,all,1,0,0")
    assert len(lines) == 3
