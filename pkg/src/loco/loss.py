"""Batch count loss over multi-channel samples, clamping and bias initialization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pbd
from .errors import InvalidInputError

DEFAULT_EPS_P = 1e-6


@dataclass
class LossReport:
    total: float
    per_sample: np.ndarray
    per_channel: np.ndarray
    grads: list | None = field(default=None, repr=False)


def init_bias(omega: float, T: int) -> float:
    """Pre-sigmoid bias giving ``Pr(count == 0) == omega`` when all logits are zero.

    Each step then fires with probability ``1 - omega**(1/T)``.
    """
    if not 0.0 < omega < 1.0:
        raise InvalidInputError(f"omega must lie in (0, 1), got {omega}")
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    root = omega ** (1.0 / T)
    return math.log((1.0 - root) / root)


def clamp_probs(raw, eps_p: float = DEFAULT_EPS_P) -> np.ndarray:
    if not 0.0 <= eps_p < 0.1:
        raise InvalidInputError(f"eps_p must lie in [0, 0.1), got {eps_p}")
    raw = np.asarray(raw, dtype=np.float64)
    if eps_p == 0.0:
        return raw
    return np.clip(raw, eps_p, 1.0 - eps_p)


def clamp_mask(raw, eps_p: float = DEFAULT_EPS_P) -> np.ndarray:
    """1.0 where the clamp is the identity (gradient passes), 0.0 where it bites."""
    raw = np.asarray(raw, dtype=np.float64)
    if eps_p == 0.0:
        return np.ones_like(raw)
    return ((raw >= eps_p) & (raw <= 1.0 - eps_p)).astype(np.float64)


def _check_batch(p_batch, labels):
    if len(p_batch) != len(labels):
        raise InvalidInputError(f"{len(p_batch)} probability matrices but {len(labels)} labels")
    if not p_batch:
        raise InvalidInputError("empty batch")
    mats, counts = [], []
    for i, (p, y) in enumerate(zip(p_batch, labels)):
        p = np.asarray(p, dtype=np.float64)
        if p.ndim == 1:
            p = p[:, None]
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if p.ndim != 2 or p.shape[1] != y.size:
            raise InvalidInputError(f"sample {i}: probability shape {p.shape} does not match {y.size} count channels")
        if np.any(y < 0):
            raise InvalidInputError(f"sample {i}: negative count label")
        mats.append(p)
        counts.append(y)
    channels = {m.shape[1] for m in mats}
    if len(channels) != 1:
        raise InvalidInputError(f"inconsistent channel counts in batch: {sorted(channels)}")
    return mats, counts


def batch_nll(p_batch, labels, k_max: int, want_grad: bool = False) -> LossReport:
    """Mean over samples of the channel-summed count NLL.

    ``p_batch`` holds one ``T_i x C`` matrix per sample (already clamped);
    ``labels`` one length-``C`` count vector per sample.  Each sample is
    evaluated at its own length.  With ``want_grad`` the report carries one
    ``dL/dp`` matrix per sample, already divided by the batch size.
    """
    mats, counts = _check_batch(p_batch, labels)
    B, C = len(mats), mats[0].shape[1]
    per = np.zeros((B, C))
    grads = [] if want_grad else None
    for i, (p, y) in enumerate(zip(mats, counts)):
        # channels along the leading axis, time last
        loss, g = pbd.nll_and_grad(p.T, y, k_max, want_grad=want_grad)
        per[i] = loss
        if want_grad:
            grads.append(g.T / B)
    return LossReport(
        total=float(np.mean(per.sum(axis=1))),
        per_sample=per.sum(axis=1),
        per_channel=per.mean(axis=0),
        grads=grads,
    )


def padded_batch_nll(p: np.ndarray, lengths, counts, k_max: int, want_grad: bool = True):
    """Same loss as :func:`batch_nll` on a zero-padded ``B x T x C`` array.

    Steps at or beyond each sample's length are forced to probability 0,
    which leaves every count distribution exactly unchanged.  Returns
    ``(LossReport, grad)`` with ``grad`` shaped like ``p`` and zero on padding.
    """
    p = np.asarray(p, dtype=np.float64)
    B, T, C = p.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64).reshape(B, C)
    valid = np.arange(T)[None, :] < lengths[:, None]
    masked = np.where(valid[:, :, None], p, 0.0)
    loss, g = pbd.nll_and_grad(masked.transpose(0, 2, 1), counts, k_max, want_grad=want_grad)
    report = LossReport(
        total=float(np.mean(loss.sum(axis=1))),
        per_sample=loss.sum(axis=1),
        per_channel=loss.mean(axis=0),
    )
    if not want_grad:
        return report, None
    grad = g.transpose(0, 2, 1) * valid[:, :, None] / B
    return report, grad
