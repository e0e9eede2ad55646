"""Event decoding from probability sequences and tolerance-window scoring."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import pbd
from .errors import InvalidInputError


@dataclass
class DecodedEvents:
    times: list  # per channel, sorted int arrays
    expected_counts: np.ndarray
    modal_counts: np.ndarray


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    signed_errors: list = field(default_factory=list)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return _f1(self.precision, self.recall, self.tp + self.fp + self.fn)


def _ratio(num, den):
    return 1.0 if den == 0 else num / den


def _f1(p, r, total):
    if total == 0:
        return 1.0
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def peak_pick(p, threshold: float = 0.5, min_separation: int = 1) -> np.ndarray:
    """Local maxima of ``p`` strictly above ``threshold``, thinned greedily.

    Candidates are visited from largest to smallest (earlier index first on
    ties); one is dropped when an accepted peak lies fewer than
    ``min_separation`` steps away.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=np.int64)
    left = np.concatenate([[-np.inf], p[:-1]])
    right = np.concatenate([p[1:], [-np.inf]])
    cand = np.flatnonzero((p > threshold) & (p >= left) & (p >= right))
    order = sorted(cand, key=lambda i: (-p[i], i))
    kept: list[int] = []
    for i in order:
        if all(abs(i - j) >= min_separation for j in kept):
            kept.append(int(i))
    return np.array(sorted(kept), dtype=np.int64)


def decode(p, threshold: float = 0.5, min_separation: int = 1, k_max: int = 31) -> DecodedEvents:
    """Event times plus expected and most likely counts for ``T`` or ``T x C`` probabilities."""
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold}")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    times = [peak_pick(p[:, c], threshold, min_separation) for c in range(p.shape[1])]
    modal = np.array([int(np.argmax(pbd.pmf(p[:, c], k_max).masses)) for c in range(p.shape[1])], dtype=np.int64)
    return DecodedEvents(times=times, expected_counts=p.sum(axis=0), modal_counts=modal)


def match(pred, truth, tolerance: int) -> MatchResult:
    """Greedy one-to-one matching in order of increasing ``|pred - truth|``.

    Pairs further apart than ``tolerance`` are never matched.  Signed errors
    are ``pred - truth`` for each matched pair.
    """
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    pairs = sorted(
        (abs(int(a) - int(b)), i, j)
        for i, a in enumerate(pred)
        for j, b in enumerate(truth)
        if abs(int(a) - int(b)) <= tolerance
    )
    used_p, used_t = set(), set()
    errors = []
    for _, i, j in pairs:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        errors.append(int(pred[i] - truth[j]))
    tp = len(errors)
    return MatchResult(tp=tp, fp=len(pred) - tp, fn=len(truth) - tp, signed_errors=errors)


@dataclass
class Summary:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    mean_error: float
    std_error: float
    n: int


def aggregate(results, macro: bool = False) -> Summary:
    """Pool match results.

    Micro (default) sums tp/fp/fn before taking ratios; ``macro`` averages
    the per-result precision, recall and F1 instead.
    """
    results = list(results)
    if not results:
        raise InvalidInputError("cannot aggregate an empty list of results")
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    errors = np.array([e for r in results for e in r.signed_errors], dtype=np.float64)
    if macro:
        precision = float(np.mean([r.precision for r in results]))
        recall = float(np.mean([r.recall for r in results]))
        f1 = float(np.mean([r.f1 for r in results]))
    else:
        precision, recall = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        f1 = _f1(precision, recall, tp + fp + fn)
    return Summary(
        tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1,
        mean_error=float(errors.mean()) if errors.size else 0.0,
        std_error=float(errors.std()) if errors.size else 0.0,
        n=len(results),
    )


def match_centers(pred, truth, max_distance: float):
    """Greedy one-to-one pairing of 2-D points by increasing Euclidean distance.

    Returns ``(tp, fp, fn, distances)``.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    pairs = sorted(
        (float(np.hypot(*(a - b))), i, j)
        for i, a in enumerate(pred)
        for j, b in enumerate(truth)
    )
    used_p, used_t, dists = set(), set(), []
    for d, i, j in pairs:
        if d > max_distance or i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        dists.append(d)
    return len(dists), len(pred) - len(dists), len(truth) - len(dists), dists


CSV_COLUMNS = ("sample", "channel", "tp", "fp", "fn", "precision", "recall", "f1",
               "label_count", "modal_count", "expected_count", "mean_error")


def metrics_csv(rows, summary: Summary, count_accuracy: float) -> str:
    """Per-sample rows followed by one ``summary`` row, columns as in ``CSV_COLUMNS``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    writer.writerow(["summary", "all", summary.tp, summary.fp, summary.fn, _fmt(summary.precision),
                     _fmt(summary.recall), _fmt(summary.f1), "", _fmt(count_accuracy), "",
                     _fmt(summary.mean_error)])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v
