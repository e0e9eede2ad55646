"""Checkpoint container for model parameters, Adam state and the run config.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"LOCOCKPT"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length N in bytes
    offset 20  N bytes   UTF-8 JSON header, keys sorted, no whitespace
    offset 20+N          tensor payload

The header holds ``tensors``, a list of ``{"name", "shape", "offset"}``
records, where ``offset`` is relative to the start of the payload and each
tensor is stored row-major as IEEE-754 float64 little-endian.  Tensor names
are ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``.  The header
also carries ``adam`` (step counter and hyperparameters), ``config`` (the
run configuration echo), ``config_hash`` and free-form ``meta``.
Writing is deterministic: identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .rnn import PARAM_NAMES, AdamState, ModelParams

MAGIC = b"LOCOCKPT"
VERSION = 1


def to_bytes(params: ModelParams, state: AdamState | None = None, config=None,
             config_hash: str = "", meta=None) -> bytes:
    tensors = [(f"param/{k}", params.tensors[k]) for k in PARAM_NAMES]
    if state is not None:
        tensors += [(f"adam_m/{k}", state.m[k]) for k in PARAM_NAMES]
        tensors += [(f"adam_v/{k}", state.v[k]) for k in PARAM_NAMES]
    records, chunks, offset = [], [], 0
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        records.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {
        "tensors": records,
        "adam": None if state is None else {
            "step": state.step, "lr": state.lr, "beta1": state.beta1,
            "beta2": state.beta2, "eps_adam": state.eps_adam,
        },
        "config": config or {},
        "config_hash": config_hash,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(chunks)


def from_bytes(raw: bytes):
    """Inverse of :func:`to_bytes`: ``(params, state_or_None, header)``."""
    if raw[:8] != MAGIC:
        raise FormatError("not a checkpoint: bad magic", offset=0)
    if len(raw) < 20:
        raise FormatError("truncated checkpoint header", offset=len(raw))
    version, n = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8)
    if len(raw) < 20 + n:
        raise FormatError("truncated checkpoint header", offset=len(raw))
    header = json.loads(raw[20:20 + n].decode("utf-8"))
    base = 20 + n
    tensors = {}
    for rec in header["tensors"]:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = base + rec["offset"]
        end = start + 8 * count
        if end > len(raw):
            raise FormatError(f"tensor {rec['name']} runs past end of file", offset=len(raw))
        tensors[rec["name"]] = np.frombuffer(raw[start:end], dtype="<f8").reshape(shape).astype(np.float64)
    params = ModelParams({k: tensors[f"param/{k}"] for k in PARAM_NAMES})
    state = None
    if header.get("adam") is not None:
        a = header["adam"]
        state = AdamState(
            m={k: tensors[f"adam_m/{k}"] for k in PARAM_NAMES},
            v={k: tensors[f"adam_v/{k}"] for k in PARAM_NAMES},
            step=a["step"], lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps_adam=a["eps_adam"],
        )
    return params, state, header


def save(path, params, state=None, config=None, config_hash="", meta=None):
    Path(path).write_bytes(to_bytes(params, state, config, config_hash, meta))


def load(path):
    return from_bytes(Path(path).read_bytes())
