"""Randomized invariant checks for the count distribution, loss and curve.

Each check draws ``trials`` random cases from a seeded generator and returns
a :class:`CheckResult` holding the worst observed violation measure next to
its tolerance.  The PMF routine under test is injectable so that a broken
recursion can be shown to trip the suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hilbert, pbd
from . import loss as loco_loss


@dataclass
class CheckResult:
    name: str
    worst: float
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)

    @property
    def slack(self) -> float:
        return self.tolerance - self.worst


def _random_p(rng, t_lo, t_hi):
    return rng.uniform(size=int(rng.integers(t_lo, t_hi + 1)))


def sign_flipped_pmf(p, k_max):
    """Deliberately broken recursion (wrong sign on the incoming mass)."""
    p = np.asarray(p, dtype=np.float64)
    K = min(k_max, p.size)
    row = np.zeros(K + 1)
    row[0] = 1.0
    for pt in p:
        nxt = (1.0 - pt) * row
        nxt[1:] -= pt * row[:-1]
        nxt[K] = row[K] - pt * row[K - 1]
        row = nxt
    return pbd.CountDistribution(masses=row, k_max=K, truncated_tail=K < p.size)


def check_oracle_equivalence(rng, trials, pmf=pbd.pmf):
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 12)
        got = pmf(p, p.size).masses
        ref = pbd.pmf_bruteforce(p).masses
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return CheckResult("oracle-equivalence", worst, 1e-12, trials)


def check_normalization(rng, trials, pmf=pbd.pmf):
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 60)
        for k_max in (1, max(1, p.size // 3), p.size):
            worst = max(worst, abs(float(pmf(p, k_max).masses.sum()) - 1.0))
    return CheckResult("normalization", worst, 1e-12, trials)


def check_truncation(rng, trials, pmf=pbd.pmf):
    """Bins below the cut agree with the full PMF; the tail bin holds the rest."""
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 2, 80)
        full = pmf(p, p.size).masses
        k_max = int(rng.integers(1, p.size))
        cut = pmf(p, k_max).masses
        worst = max(worst, float(np.max(np.abs(cut[:k_max] - full[:k_max]))),
                    abs(float(cut[k_max] - full[k_max:].sum())), abs(float(cut.sum()) - 1.0))
    return CheckResult("truncation", worst, 1e-12, trials)


def check_decreasing_maximum(rng, trials, t_hi=200):
    worst = 0.0
    for _ in range(trials):
        rep = pbd.diagnostics(_random_p(rng, 1, t_hi))
        if rep.running_max.size > 1:
            worst = max(worst, float(np.max(np.diff(rep.running_max))))
    return CheckResult("decreasing-maximum", worst, 1e-12, trials)


def check_monotone_counts(rng, trials):
    """Prefix CDFs never increase as trials are added."""
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 60)
        cdf = np.cumsum(pbd.count_table(p, p.size), axis=-1)
        worst = max(worst, float(np.max(np.diff(cdf, axis=0))))
    return CheckResult("monotone-counts", worst, 1e-12, trials)


def check_variance(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 60)
        rep = pbd.diagnostics(p)
        table = pbd.count_table(p, p.size)
        steps = np.diff(np.concatenate([[0.0], rep.variance_series]))
        worst = max(worst, float(np.max(np.abs(steps - p * (1.0 - p)))), float(-np.min(steps)))
        for t in range(1, p.size + 1):
            worst = max(worst, abs(pbd.pmf_variance(table[t]) - rep.variance_series[t - 1]))
    return CheckResult("variance-increments", worst, 1e-10, trials)


def check_bounds(rng, trials, t_hi=200):
    worst = -math.inf
    for _ in range(trials):
        rep = pbd.diagnostics(_random_p(rng, 1, t_hi))
        last = rep.running_max[-1]
        worst = max(worst, last - rep.first_upper_bound, last - rep.lecam_bound)
    return CheckResult("bound-validity", max(worst, 0.0), 1e-12, trials)


def check_loss_lower_bound(rng, trials):
    worst = -math.inf
    for _ in range(trials):
        p = _random_p(rng, 1, 40)
        floor = -math.log(pbd.first_upper_bound(p))
        for y in range(p.size + 1):
            worst = max(worst, floor - pbd.nll(p, y, p.size))
    return CheckResult("loss-lower-bound", max(worst, 0.0), 1e-9, trials)


def check_gradient_oracle(rng, trials):
    """Reverse-mode gradient vs leave-one-out brute force, labels drawn from the model."""
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 12)
        y = int(np.sum(rng.uniform(size=p.size) < p))
        worst = max(worst, float(np.max(np.abs(pbd.nll_grad(p, y, p.size) - pbd.grad_oracle(p, y)))))
    return CheckResult("gradient-oracle", worst, 1e-12, trials)


def fd_relative_error(p, y, k_max, h=1e-6):
    """``||analytic - central difference|| / max(norms)`` for the count NLL."""
    analytic = pbd.nll_grad(p, y, k_max)
    numeric = np.empty_like(p)
    for t in range(p.size):
        up, down = p.copy(), p.copy()
        up[t] += h
        down[t] -= h
        numeric[t] = (pbd.nll_and_grad(up, y, k_max, want_grad=False)[0]
                      - pbd.nll_and_grad(down, y, k_max, want_grad=False)[0]) / (2.0 * h)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(analytic - numeric) / scale)


def check_gradient_fd(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p = rng.uniform(0.02, 0.98, size=int(rng.integers(1, 30)))
        y = int(np.sum(rng.uniform(size=p.size) < p))
        k_max = int(rng.integers(1, p.size + 1))
        worst = max(worst, fd_relative_error(p, y, k_max))
    return CheckResult("gradient-finite-difference", worst, 1e-5, trials)


def check_permutation(rng, trials, pmf=pbd.pmf):
    worst = 0.0
    for _ in range(trials):
        p = _random_p(rng, 1, 60)
        k_max = int(rng.integers(1, p.size + 1))
        a = pmf(p, k_max).masses
        b = pmf(rng.permutation(p), k_max).masses
        worst = max(worst, float(np.max(np.abs(a - b))))
    return CheckResult("permutation-invariance", worst, 1e-12, trials)


def check_batch_equivalence(rng, trials):
    """One-channel single-sample batch equals the scalar NLL; channels add up."""
    worst = 0.0
    for _ in range(trials):
        T, C = int(rng.integers(1, 40)), int(rng.integers(1, 4))
        p = rng.uniform(size=(T, C))
        y = rng.integers(0, T + 1, size=C)
        k_max = int(rng.integers(1, T + 2))
        total = loco_loss.batch_nll([p], [y], k_max).total
        parts = sum(loco_loss.batch_nll([p[:, c:c + 1]], [y[c:c + 1]], k_max).total for c in range(C))
        single = pbd.nll(p[:, 0], int(y[0]), k_max)
        worst = max(worst, abs(total - parts),
                    abs(loco_loss.batch_nll([p[:, :1]], [y[:1]], k_max).total - single))
    return CheckResult("channel-decomposition", worst, 1e-12, trials)


def check_init_grid(rng=None, trials=None):
    worst = 0.0
    for omega in (0.1, 0.3, 0.5, 0.9):
        for T in (1, 10, 100, 400):
            b = loco_loss.init_bias(omega, T)
            p = np.full(T, 1.0 / (1.0 + math.exp(-b)))
            worst = max(worst, abs(float(pbd.pmf(p, 31).masses[0]) - omega))
    return CheckResult("init-bias", worst, 1e-9, 16)


def check_hilbert(rng=None, trials=None, max_order=6):
    bad = 0
    for n in range(max_order + 1):
        cells = hilbert.curve_cells(n)
        bad += len({tuple(c) for c in cells}) != 4 ** n
        bad += sum(hilbert.xy2d(n, int(x), int(y)) != d for d, (x, y) in enumerate(cells))
        if n > 0:
            bad += int(np.sum(np.abs(np.diff(cells, axis=0)).sum(axis=1) != 1))
    return CheckResult("hilbert-bijection-adjacency", float(bad), 0.0, max_order + 1)


CHECKS: dict[str, Callable] = {
    "oracle-equivalence": check_oracle_equivalence,
    "normalization": check_normalization,
    "truncation": check_truncation,
    "decreasing-maximum": check_decreasing_maximum,
    "monotone-counts": check_monotone_counts,
    "variance-increments": check_variance,
    "bound-validity": check_bounds,
    "loss-lower-bound": check_loss_lower_bound,
    "gradient-oracle": check_gradient_oracle,
    "gradient-finite-difference": check_gradient_fd,
    "permutation-invariance": check_permutation,
    "channel-decomposition": check_batch_equivalence,
    "init-bias": check_init_grid,
    "hilbert-bijection-adjacency": check_hilbert,
}

_PMF_CHECKS = {"oracle-equivalence", "normalization", "truncation", "permutation-invariance"}


def run_all(seed: int, trials: int, pmf=pbd.pmf):
    """Run every check with its own child generator; returns a list of results."""
    results = []
    children = np.random.SeedSequence(seed).spawn(len(CHECKS))
    for child, (name, fn) in zip(children, CHECKS.items()):
        rng = np.random.default_rng(child)
        n = trials if name not in {"gradient-oracle", "gradient-finite-difference", "loss-lower-bound",
                                   "variance-increments"} else max(1, trials // 5)
        if name in _PMF_CHECKS:
            results.append(fn(rng, n, pmf=pmf))
        else:
            results.append(fn(rng, n))
    return results
