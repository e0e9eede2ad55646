"""On-disk dataset layout.

A dataset directory holds, per split (``train`` / ``test``):

``<split>_features.idx``
    IDX float64 tensor ``N x T_pad x F``, zero-padded past each length.
``<split>_labels.tsv``
    ``sample<TAB>length<TAB>count_0 ... count_{C-1}``; the training input.
``<split>_truth.tsv``
    ``sample<TAB>channel<TAB>times`` (space-separated step indices).
    Evaluation only; the trainer never opens it.
``<split>_centers.tsv``
    ``sample<TAB>class<TAB>x<TAB>y`` glyph centers in pixels (2-D task only).

plus ``manifest.json`` with the seed, config hashes and config echo.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .synth import TrainingSample, load_idx, write_idx

MANIFEST = "manifest.json"


def write_split(out_dir, split: str, records):
    out = Path(out_dir)
    lengths = [r.length for r in records]
    F = records[0].features.shape[1]
    feats = np.zeros((len(records), max(lengths), F))
    for i, r in enumerate(records):
        feats[i, : r.length] = r.features
    write_idx(out / f"{split}_features.idx", feats, 0x0E)
    C = len(records[0].counts)
    with open(out / f"{split}_labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample\tlength\t" + "\t".join(f"count_{c}" for c in range(C)) + "\n")
        for i, r in enumerate(records):
            fh.write(f"{i}\t{r.length}\t" + "\t".join(str(int(c)) for c in r.counts) + "\n")
    with open(out / f"{split}_truth.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample\tchannel\ttimes\n")
        for i, r in enumerate(records):
            for c, times in enumerate(r.hidden_truth):
                fh.write(f"{i}\t{c}\t" + " ".join(str(int(t)) for t in times) + "\n")
    if "centers" in records[0].extra:
        with open(out / f"{split}_centers.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sample\tclass\tx\ty\n")
            for i, r in enumerate(records):
                for c, pts in enumerate(r.extra["centers"]):
                    for x, y in pts:
                        fh.write(f"{i}\t{c}\t{float(x)!r}\t{float(y)!r}\n")


def _read_tsv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split("\t") for line in fh]
    return rows[0], rows[1:]


def read_split(data_dir, split: str) -> list[TrainingSample]:
    """Features and count labels only."""
    d = Path(data_dir)
    feats, _ = load_idx(d / f"{split}_features.idx")
    _, rows = _read_tsv(d / f"{split}_labels.tsv")
    if len(rows) != feats.shape[0]:
        raise InvalidInputError(f"{split}: {len(rows)} label rows for {feats.shape[0]} feature sequences")
    out = []
    for i, row in enumerate(rows):
        length = int(row[1])
        out.append(TrainingSample(features=np.ascontiguousarray(feats[i, :length]),
                                  counts=np.array([int(c) for c in row[2:]], dtype=np.int64)))
    return out


def read_truth(data_dir, split: str, n: int, channels: int):
    truth = [[np.zeros(0, dtype=np.int64) for _ in range(channels)] for _ in range(n)]
    _, rows = _read_tsv(Path(data_dir) / f"{split}_truth.tsv")
    for row in rows:
        times = row[2].split() if len(row) > 2 else []
        truth[int(row[0])][int(row[1])] = np.array([int(t) for t in times], dtype=np.int64)
    return truth


def read_centers(data_dir, split: str, n: int, classes: int):
    path = Path(data_dir) / f"{split}_centers.tsv"
    pts = [[[] for _ in range(classes)] for _ in range(n)]
    _, rows = _read_tsv(path)
    for row in rows:
        pts[int(row[0])][int(row[1])].append((float(row[2]), float(row[3])))
    return [[np.array(p, dtype=np.float64).reshape(-1, 2) for p in s] for s in pts]


def write_manifest(out_dir, manifest: dict):
    text = json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    (Path(out_dir) / MANIFEST).write_text(text, encoding="utf-8")


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))
