"""Minibatch training of the GRU counter on count-only labels."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import loss as loco_loss
from . import pbd, rnn
from .errors import TrainingDiverged

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 24
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    k_max: int = 31
    omega: float = 0.5
    eps_p: float = loco_loss.DEFAULT_EPS_P
    clip_norm: float = 5.0
    seed: int = 0


def pad_batch(samples):
    """Stack ``TrainingSample``-like objects into zero-padded arrays."""
    lengths = np.array([s.features.shape[0] for s in samples], dtype=np.int64)
    T = int(lengths.max())
    x = np.zeros((len(samples), T, samples[0].features.shape[1]))
    for i, s in enumerate(samples):
        x[i, : lengths[i]] = s.features
    counts = np.stack([np.asarray(s.counts, dtype=np.int64) for s in samples])
    return x, lengths, counts


def batch_loss_and_grads(params, x, lengths, counts, cfg: TrainConfig, want_grad=True):
    raw, cache = rnn.forward(params, x)
    p = loco_loss.clamp_probs(raw, cfg.eps_p)
    report, dp = loco_loss.padded_batch_nll(p, lengths, counts, cfg.k_max, want_grad=want_grad)
    if not want_grad:
        return report, None, p
    grads = rnn.backward(cache, dp * loco_loss.clamp_mask(raw, cfg.eps_p))
    return report, grads, p


def reference_length(samples) -> int:
    return int(round(np.mean([s.features.shape[0] for s in samples])))


def init_model(input_dim, channels, t_ref, cfg: TrainConfig):
    params = rnn.ModelParams.init(input_dim, cfg.hidden, channels, seed=cfg.seed, omega=cfg.omega, t_ref=t_ref)
    state = rnn.AdamState.create(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps_adam=cfg.eps_adam)
    return params, state


def evaluate_loss(params, samples, cfg: TrainConfig, batch_size=256):
    """Mean count NLL and mean absolute expected-count error over ``samples``."""
    total, count_err, n = 0.0, 0.0, 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo: lo + batch_size]
        x, lengths, counts = pad_batch(chunk)
        report, _, p = batch_loss_and_grads(params, x, lengths, counts, cfg, want_grad=False)
        valid = np.arange(x.shape[1])[None, :] < lengths[:, None]
        expected = (p * valid[:, :, None]).sum(axis=1)
        total += report.total * len(chunk)
        count_err += float(np.abs(expected - counts).mean(axis=1).sum())
        n += len(chunk)
    return total / n, count_err / n


def train(samples, cfg: TrainConfig, params=None, state=None, start_epoch=0, on_epoch=None):
    """Run ``cfg.epochs`` epochs of Adam over shuffled minibatches.

    ``on_epoch(epoch, params, state, stats)`` is called after every epoch.
    Raises :class:`TrainingDiverged` on a non-finite loss or gradient.
    Returns ``(params, state, history)``.
    """
    samples = list(samples)
    input_dim = samples[0].features.shape[1]
    channels = len(samples[0].counts)
    if params is None:
        params, state = init_model(input_dim, channels, reference_length(samples), cfg)
    history = []
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(samples))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[lo: lo + cfg.batch_size]]
            x, lengths, counts = pad_batch(batch)
            report, grads, _ = batch_loss_and_grads(params, x, lengths, counts, cfg)
            if not math.isfinite(report.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}",
                                       payload={"epoch": epoch, "step": state.step})
            grads, _ = rnn.clip_grads(grads, cfg.clip_norm)
            params, state = rnn.adam_step(params, grads, state)
            losses.append(report.total * len(batch))
        mean_loss = float(np.sum(losses) / len(samples))
        stats = {"epoch": epoch + 1, "loss": mean_loss}
        history.append(stats)
        log.info("epoch %d loss %.5f", epoch + 1, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch + 1, params, state, stats)
    return params, state, history


def predict(params, samples, eps_p=loco_loss.DEFAULT_EPS_P, batch_size=256):
    """Clamped per-step probabilities, one ``T_i x C`` array per sample."""
    out = []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo: lo + batch_size]
        x, lengths, _ = pad_batch(chunk)
        raw, _ = rnn.forward(params, x)
        p = loco_loss.clamp_probs(raw, eps_p)
        out.extend(p[i, : lengths[i]] for i in range(len(chunk)))
    return out


def modal_counts(p, k_max):
    return np.array([int(np.argmax(pbd.pmf(p[:, c], k_max).masses)) for c in range(p.shape[1])])
