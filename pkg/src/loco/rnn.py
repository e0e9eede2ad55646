"""Causal GRU sequence model with sigmoid outputs, BPTT and Adam.

Architecture, per time step ``t`` (batched over samples)::

    a_t = tanh(x_t W_in + b_in)
    z_t = sigmoid(a_t Wx_z + h_{t-1} Uh_z + b_z)
    r_t = sigmoid(a_t Wx_r + h_{t-1} Uh_r + b_r)
    n_t = tanh(a_t Wx_n + (r_t * h_{t-1}) Uh_n + b_n)
    h_t = (1 - z_t) * n_t + z_t * h_{t-1}
    p_t = sigmoid(h_t W_out + b_out)

The three gate blocks are stored side by side in ``W_x``, ``U_h`` and
``b_g`` in the order update, reset, candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import loss as loco_loss
from .errors import InvalidInputError, InvalidStateError, TrainingDiverged

PARAM_NAMES = ("W_in", "b_in", "W_x", "U_h", "b_g", "W_out", "b_out")


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def param_shapes(input_dim: int, hidden: int, channels: int) -> dict:
    H = hidden
    return {
        "W_in": (input_dim, H),
        "b_in": (H,),
        "W_x": (H, 3 * H),
        "U_h": (H, 3 * H),
        "b_g": (3 * H,),
        "W_out": (H, channels),
        "b_out": (channels,),
    }


@dataclass
class ModelParams:
    tensors: dict

    @property
    def input_dim(self) -> int:
        return self.tensors["W_in"].shape[0]

    @property
    def hidden(self) -> int:
        return self.tensors["W_in"].shape[1]

    @property
    def channels(self) -> int:
        return self.tensors["W_out"].shape[1]

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def size(self) -> int:
        return sum(v.size for v in self.tensors.values())

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, channels: int) -> "ModelParams":
        return cls({k: np.zeros(s) for k, s in param_shapes(input_dim, hidden, channels).items()})

    @classmethod
    def init(cls, input_dim: int, hidden: int, channels: int, seed: int,
             omega: float = 0.5, t_ref: int = 1) -> "ModelParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero gate biases.

        The output bias is set so an all-zero hidden state puts mass
        ``omega`` on the zero-count bin of a length-``t_ref`` sequence.
        """
        rng = np.random.default_rng(seed)
        shapes = param_shapes(input_dim, hidden, channels)
        tensors = {}
        for name in PARAM_NAMES:
            shape = shapes[name]
            if name.startswith("b"):
                tensors[name] = np.zeros(shape)
            else:
                s = 1.0 / math.sqrt(shape[0])
                tensors[name] = rng.uniform(-s, s, size=shape)
        tensors["b_out"][:] = loco_loss.init_bias(omega, t_ref)
        return cls(tensors)


@dataclass
class ForwardCache:
    params: ModelParams
    x: np.ndarray
    a: np.ndarray
    h: np.ndarray  # B x (T+1) x H, h[:, 0] is the zero initial state
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    p: np.ndarray
    batched: bool

    def __len__(self):
        return self.x.shape[1]


def _as_batch(x, input_dim):
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise InvalidInputError(f"expected T x {input_dim} (or B x T x {input_dim}) features, got shape {x.shape}")
    if x.shape[1] < 1:
        raise InvalidInputError("sequence length must be >= 1")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")
    return x, batched


def forward(params: ModelParams, x):
    """Per-step event probabilities for ``x`` of shape ``T x in`` or ``B x T x in``.

    Returns ``(p, cache)`` with ``p`` shaped ``T x C`` (or ``B x T x C``).
    """
    x, batched = _as_batch(x, params.input_dim)
    B, T, _ = x.shape
    H = params.hidden
    P = params.tensors
    a = np.tanh(x @ P["W_in"] + P["b_in"])
    xg = a @ P["W_x"] + P["b_g"]
    U_zr, U_n = P["U_h"][:, : 2 * H], P["U_h"][:, 2 * H:]
    h = np.zeros((B, T + 1, H))
    z = np.empty((B, T, H))
    r = np.empty((B, T, H))
    n = np.empty((B, T, H))
    for t in range(T):
        hp = h[:, t]
        zr = sigmoid(xg[:, t, : 2 * H] + hp @ U_zr)
        z[:, t], r[:, t] = zr[:, :H], zr[:, H:]
        n[:, t] = np.tanh(xg[:, t, 2 * H:] + (r[:, t] * hp) @ U_n)
        h[:, t + 1] = (1.0 - z[:, t]) * n[:, t] + z[:, t] * hp
    p = sigmoid(h[:, 1:] @ P["W_out"] + P["b_out"])
    cache = ForwardCache(params=params, x=x, a=a, h=h, z=z, r=r, n=n, p=p, batched=batched)
    return (p if batched else p[0]), cache


def backward(cache: ForwardCache, dL_dp) -> dict:
    """Exact BPTT gradients of a scalar loss given ``dL/dp`` for every output."""
    dL_dp = np.asarray(dL_dp, dtype=np.float64)
    if not cache.batched:
        dL_dp = dL_dp[None]
    if dL_dp.shape != cache.p.shape:
        raise InvalidStateError(f"gradient shape {dL_dp.shape} does not match cached outputs {cache.p.shape}")
    params = cache.params
    if cache.h.shape[2] != params.hidden or cache.x.shape[2] != params.input_dim:
        raise InvalidStateError("cache was produced by a model of different shape")
    P = params.tensors
    H = params.hidden
    B, T, _ = cache.x.shape
    h, z, r, n, a = cache.h, cache.z, cache.r, cache.n, cache.a
    U_zr, U_n = P["U_h"][:, : 2 * H], P["U_h"][:, 2 * H:]

    dlogit = dL_dp * cache.p * (1.0 - cache.p)
    hs = h[:, 1:]
    grads = {
        "W_out": np.einsum("bth,btc->hc", hs, dlogit),
        "b_out": dlogit.sum(axis=(0, 1)),
    }
    dH = dlogit @ P["W_out"].T
    dxg = np.empty((B, T, 3 * H))
    dU_zr = np.zeros((H, 2 * H))
    dU_n = np.zeros((H, H))
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        hp = h[:, t]
        zt, rt, nt = z[:, t], r[:, t], n[:, t]
        dh = dH[:, t] + dh_next
        dn_pre = dh * (1.0 - zt) * (1.0 - nt * nt)
        dz_pre = dh * (hp - nt) * zt * (1.0 - zt)
        drh = dn_pre @ U_n.T
        dr_pre = drh * hp * rt * (1.0 - rt)
        dU_n += (rt * hp).T @ dn_pre
        dzr = np.concatenate([dz_pre, dr_pre], axis=1)
        dU_zr += hp.T @ dzr
        dh_next = dh * zt + drh * rt + dzr @ U_zr.T
        dxg[:, t, : 2 * H] = dzr
        dxg[:, t, 2 * H:] = dn_pre
    grads["U_h"] = np.concatenate([dU_zr, dU_n], axis=1)
    grads["W_x"] = np.einsum("bth,btg->hg", a, dxg)
    grads["b_g"] = dxg.sum(axis=(0, 1))
    da_pre = (dxg @ P["W_x"].T) * (1.0 - a * a)
    grads["W_in"] = np.einsum("bti,bth->ih", cache.x, da_pre)
    grads["b_in"] = da_pre.sum(axis=(0, 1))
    return {k: grads[k] for k in PARAM_NAMES}


def grad_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grads(grads: dict, max_norm: float):
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    norm = grad_norm(grads)
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def create(cls, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps_adam=1e-8) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        return cls(m=zeros, v={k: z.copy() for k, z in zeros.items()}, lr=lr, beta1=beta1, beta2=beta2, eps_adam=eps_adam)


def adam_step(params: ModelParams, grads: dict, state: AdamState):
    """One bias-corrected Adam update.  Returns new ``(params, state)``."""
    for name, g in grads.items():
        if name not in params.tensors or g.shape != params.tensors[name].shape:
            raise InvalidInputError(f"gradient {name!r} does not match parameter shape")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingDiverged(
                f"non-finite gradient in {name!r} at step {state.step + 1}",
                payload={"tensor": name, "step": state.step + 1, "non_finite": bad},
            )
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_t, new_m, new_v = {}, {}, {}
    for name, w in params.tensors.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_t[name] = w - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps_adam)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(m=new_m, v=new_v, step=step, lr=state.lr, beta1=b1, beta2=b2, eps_adam=state.eps_adam)
    return ModelParams(new_t), new_state


def pipeline_loss(params: ModelParams, samples, k_max: int, eps_p: float = loco_loss.DEFAULT_EPS_P,
                  want_grad: bool = True):
    """Forward, clamp, count loss and (optionally) backward for a list of
    ``(features, counts)`` pairs, one sample at a time.  Returns ``(loss, grads)``
    with gradients averaged over samples."""
    caches, probs, masks = [], [], []
    for x, _ in samples:
        raw, cache = forward(params, x)
        caches.append(cache)
        probs.append(loco_loss.clamp_probs(raw, eps_p))
        masks.append(loco_loss.clamp_mask(raw, eps_p))
    report = loco_loss.batch_nll(probs, [c for _, c in samples], k_max, want_grad=want_grad)
    if not want_grad:
        return report.total, None
    total = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    for cache, g, mask in zip(caches, report.grads, masks):
        for k, v in backward(cache, g * mask).items():
            total[k] += v
    return report.total, total


def grad_check(params: ModelParams, sample, h: float = 1e-5, k_max: int = 31,
               eps_p: float = loco_loss.DEFAULT_EPS_P) -> float:
    """Largest per-tensor relative error between analytic and central-difference gradients.

    ``sample`` is a ``(features, counts)`` pair or a list of them.  The error
    of a tensor is ``||a - n|| / max(||a||, ||n||)`` (0 when both vanish).
    """
    samples = [sample] if isinstance(sample, tuple) else list(sample)
    _, analytic = pipeline_loss(params, samples, k_max, eps_p)
    worst = 0.0
    for name in PARAM_NAMES:
        w = params.tensors[name]
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up, _ = pipeline_loss(params, samples, k_max, eps_p, want_grad=False)
            w[idx] = old - h
            down, _ = pipeline_loss(params, samples, k_max, eps_p, want_grad=False)
            w[idx] = old
            numeric[idx] = (up - down) / (2.0 * h)
        scale = max(np.linalg.norm(analytic[name]), np.linalg.norm(numeric))
        if scale > 0.0:
            worst = max(worst, float(np.linalg.norm(analytic[name] - numeric) / scale))
    return worst
