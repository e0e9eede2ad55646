"""Poisson-binomial count distribution: exact PMF, NLL, gradients and bounds.

A probability sequence ``p`` of length ``T`` defines independent Bernoulli
trials; the number of successes follows a Poisson-binomial law.  The PMF is
computed with the forward recursion over prefixes

    U(k, t) = (1 - p[t]) U(k, t-1) + p[t] U(k-1, t-1),   U(k, 0) = [k == 0]

in linear probability space, optionally right-truncated at ``k_max`` so that
the last bin collects every count ``>= k_max``.  Everything here is a pure
function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SizeError

EPS_MASS = 1e-12
BRUTEFORCE_MAX_T = 20


@dataclass(frozen=True)
class CountDistribution:
    masses: np.ndarray
    k_max: int
    truncated_tail: bool

    def __len__(self):
        return len(self.masses)


@dataclass(frozen=True)
class DiagnosticsReport:
    running_max: np.ndarray
    first_upper_bound: float
    lecam_bound: float
    variance_series: np.ndarray


def as_prob_sequence(p, allow_empty=False) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"probability sequence must be 1-D, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise InvalidInputError("probability sequence is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("probability sequence contains non-finite values")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    return arr


def _bins(T: int, k_max: int) -> int:
    if k_max < 1:
        raise InvalidInputError(f"k_max must be >= 1, got {k_max}")
    return min(int(k_max), int(T))


def count_table(p: np.ndarray, k_max: int) -> np.ndarray:
    """Prefix count distributions for every prefix length.

    ``p`` has shape ``(..., T)``; the result has shape ``(..., T+1, K+1)``
    with ``K = min(k_max, T)`` and row ``t`` holding the (truncated) PMF of
    the count after ``t`` trials.  No validation; callers check inputs.
    """
    p = np.asarray(p, dtype=np.float64)
    T = p.shape[-1]
    K = _bins(T, k_max)
    table = np.zeros(p.shape[:-1] + (T + 1, K + 1))
    table[..., 0, 0] = 1.0
    for t in range(1, T + 1):
        pt = p[..., t - 1, None]
        prev = table[..., t - 1, :]
        cur = table[..., t, :]
        cur[...] = (1.0 - pt) * prev
        cur[..., 1:] += pt * prev[..., :-1]
        # tail bin keeps all of its mass: nothing leaves a count >= K
        cur[..., K] = prev[..., K] + pt[..., 0] * prev[..., K - 1]
    return table


def pmf(p, k_max: int) -> CountDistribution:
    """Count PMF after the whole sequence, truncated at ``k_max`` bins.

    ``k_max >= len(p)`` gives the exact untruncated distribution.

    >>> pmf([0.6, 0.7], k_max=1).masses.round(12).tolist()
    [0.12, 0.88]
    """
    arr = as_prob_sequence(p)
    T = arr.size
    K = _bins(T, k_max)
    masses = count_table(arr, K)[-1]
    return CountDistribution(masses=masses, k_max=K, truncated_tail=K < T)


def _subset_pmf(p: np.ndarray) -> np.ndarray:
    # enumerate all 2**T outcomes explicitly: weight of each subset and its size
    weights = np.ones(1)
    sizes = np.zeros(1, dtype=np.int64)
    for pt in p:
        weights = np.concatenate([weights * (1.0 - pt), weights * pt])
        sizes = np.concatenate([sizes, sizes + 1])
    return np.bincount(sizes, weights=weights, minlength=p.size + 1)


def pmf_bruteforce(p) -> CountDistribution:
    """Exact PMF by summing over all subsets of the trials (testing oracle)."""
    arr = as_prob_sequence(p)
    if arr.size > BRUTEFORCE_MAX_T:
        raise SizeError(f"brute-force enumeration limited to T <= {BRUTEFORCE_MAX_T}, got {arr.size}")
    return CountDistribution(masses=_subset_pmf(arr), k_max=arr.size, truncated_tail=False)


def _check_count(y) -> int:
    if int(y) != y or y < 0:
        raise InvalidInputError(f"count label must be a nonnegative integer, got {y!r}")
    return int(y)


def nll_and_grad(p: np.ndarray, y, k_max: int, want_grad: bool = True):
    """Vectorized count NLL and its gradient with respect to ``p``.

    ``p`` has shape ``(..., T)`` and ``y`` broadcasts against ``p.shape[:-1]``.
    Sequences of different lengths may share a batch when padded with exact
    zeros: a trial with probability 0 leaves the distribution unchanged.
    Returns ``(loss, grad)`` with ``loss`` shaped like the leading dims.
    """
    p = np.asarray(p, dtype=np.float64)
    T = p.shape[-1]
    K = _bins(T, k_max)
    lead = p.shape[:-1]
    y = np.broadcast_to(np.minimum(np.asarray(y, dtype=np.int64), K), lead)
    table = count_table(p, K)
    final = table[..., T, :]
    mass = np.take_along_axis(final, y[..., None], axis=-1)[..., 0]
    floored = mass < EPS_MASS
    loss = -np.log(np.maximum(mass, EPS_MASS))
    if not want_grad:
        return loss, None

    adj = np.zeros(lead + (K + 1,))
    safe = np.where(floored, 1.0, mass)
    np.put_along_axis(adj, y[..., None], np.where(floored, 0.0, -1.0 / safe)[..., None], axis=-1)
    grad = np.zeros_like(p)
    keep = np.ones(K + 1)
    keep[K] = 0.0
    for t in range(T, 0, -1):
        pt = p[..., t - 1, None]
        prev = table[..., t - 1, :]
        shifted = np.zeros_like(prev)
        shifted[..., 1:] = prev[..., :-1]
        grad[..., t - 1] = np.sum(adj * (shifted - keep * prev), axis=-1)
        nxt = adj.copy()
        nxt[..., :K] = (1.0 - pt) * adj[..., :K] + pt * adj[..., 1:]
        adj = nxt
    return loss, grad


def nll(p, y, k_max: int) -> float:
    """Negative log-probability of observing ``y`` events.

    Counts above ``k_max`` are read from the tail bin; the mass is floored at
    ``EPS_MASS`` so the value stays finite.
    """
    arr = as_prob_sequence(p)
    y = _check_count(y)
    loss, _ = nll_and_grad(arr, y, k_max, want_grad=False)
    return float(loss)


def nll_grad(p, y, k_max: int) -> np.ndarray:
    """Gradient of :func:`nll` with respect to each ``p[t]``, by reverse-mode DP."""
    arr = as_prob_sequence(p)
    y = _check_count(y)
    _, grad = nll_and_grad(arr, y, k_max)
    return grad


def grad_oracle(p, y) -> np.ndarray:
    """Untruncated NLL gradient from leave-one-out brute-force PMFs.

    Uses dPr(Y=y)/dp[t] = Q_t(y-1) - Q_t(y), where Q_t is the count PMF of the
    sequence with trial ``t`` removed.
    """
    arr = as_prob_sequence(p)
    y = _check_count(y)
    if arr.size > BRUTEFORCE_MAX_T:
        raise SizeError(f"brute-force enumeration limited to T <= {BRUTEFORCE_MAX_T}, got {arr.size}")
    full = _subset_pmf(arr)
    prob = full[y] if y <= arr.size else 0.0
    grad = np.empty(arr.size)
    for t in range(arr.size):
        q = _subset_pmf(np.delete(arr, t))
        below = q[y - 1] if 1 <= y <= q.size else 0.0
        at = q[y] if y < q.size else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            grad[t] = -(below - at) / prob
    return grad


def poisson_mode_mass(lam: np.ndarray) -> np.ndarray:
    """Largest Poisson PMF value, attained at ``floor(lam)``."""
    lam = np.asarray(lam, dtype=np.float64)
    k = np.floor(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = k * np.log(lam) - lam - np.vectorize(math.lgamma)(k + 1.0)
    return np.where(lam > 0.0, np.exp(logm), 1.0)


def first_upper_bound(p) -> float:
    arr = as_prob_sequence(p)
    return float(0.5 + np.min(np.abs(0.5 - arr)))


def lecam_bound(p) -> float:
    """Poisson-approximation bound on the largest bin of the count PMF.

    Scans prefixes of the ascending-sorted sequence and keeps the smallest
    ``max_k Poisson(lam_l)(k) + 2 * sum_{j<=l} p_j**2``.
    """
    arr = np.sort(as_prob_sequence(p))
    lam = np.cumsum(arr)
    penalty = 2.0 * np.cumsum(arr * arr)
    return float(np.min(poisson_mode_mass(lam) + penalty))


def diagnostics(p) -> DiagnosticsReport:
    arr = as_prob_sequence(p)
    table = count_table(arr, arr.size)
    return DiagnosticsReport(
        running_max=table[1:].max(axis=-1),
        first_upper_bound=first_upper_bound(arr),
        lecam_bound=lecam_bound(arr),
        variance_series=np.cumsum(arr * (1.0 - arr)),
    )


def pmf_variance(masses) -> float:
    masses = np.asarray(masses, dtype=np.float64)
    k = np.arange(masses.size)
    mean = np.dot(k, masses)
    return float(np.dot((k - mean) ** 2, masses))
