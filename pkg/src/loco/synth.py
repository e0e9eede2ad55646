"""Synthetic labeled data: 1-D pulse sequences and 2-D glyph canvases.

Every generator is a pure function of its configuration and seed.  Records
carry the hidden event locations for evaluation, but training code only ever
sees :class:`TrainingSample`, which has no such field.
"""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, GenerationError, InvalidInputError
from .hilbert import HilbertCurve, index_of_point, scan_image

MAX_RETRIES = 1000


@dataclass(frozen=True)
class SynthConfig:
    T_min: int = 200
    T_max: int = 400
    channels: int = 2
    feature_dim: int = 8
    event_rate: tuple = (0.01, 0.01)
    min_separation: int = 5
    pulse_width: float = 3.0
    amplitude: float = 1.0
    noise_std: float = 0.2
    distractor_rate: float = 0.0

    def __post_init__(self):
        rates = self.event_rate
        if np.isscalar(rates):
            rates = (float(rates),) * self.channels
        object.__setattr__(self, "event_rate", tuple(float(r) for r in rates))
        if not 1 <= self.T_min <= self.T_max:
            raise InvalidInputError(f"need 1 <= T_min <= T_max, got {self.T_min}, {self.T_max}")
        if self.channels < 1 or self.feature_dim < 1:
            raise InvalidInputError("channels and feature_dim must be positive")
        if len(self.event_rate) != self.channels:
            raise InvalidInputError(f"{len(self.event_rate)} event rates for {self.channels} channels")
        if any(not 0.0 <= r <= 1.0 for r in self.event_rate):
            raise InvalidInputError("event rates must lie in [0, 1]")
        if self.min_separation < 1:
            raise InvalidInputError("min_separation must be >= 1")
        if self.pulse_width <= 0 or self.noise_std < 0 or self.distractor_rate < 0:
            raise InvalidInputError("pulse_width must be positive, noise_std and distractor_rate nonnegative")


@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray
    counts: np.ndarray

    @property
    def length(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SampleRecord:
    features: np.ndarray
    counts: np.ndarray
    hidden_truth: tuple
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.features.shape[0]

    def training_view(self) -> TrainingSample:
        return TrainingSample(self.features, self.counts)


def pulse_kernel(width: float) -> np.ndarray:
    """Gaussian bump with full width at half maximum ``width``, peak 1 at the center."""
    sigma = width / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    half = max(1, int(math.ceil(3.0 * sigma)))
    dt = np.arange(-half, half + 1)
    return np.exp(-0.5 * (dt / sigma) ** 2)


def spectral_profile(channel: int, channels: int, feature_dim: int) -> np.ndarray:
    """Per-channel spread over feature bins, centered on a channel-specific bin."""
    center = (channel + 0.5) * feature_dim / channels - 0.5
    spread = max(feature_dim / (4.0 * channels), 0.5)
    bins = np.arange(feature_dim)
    return np.exp(-0.5 * ((bins - center) / spread) ** 2)


def sample_event_times(rng, T: int, n_events: int, min_separation: int) -> np.ndarray:
    """Rejection-sample ``n_events`` distinct times in ``[0, T)`` pairwise ``>= min_separation`` apart."""
    times: list[int] = []
    budget = MAX_RETRIES * max(n_events, 1)
    while len(times) < n_events:
        if budget == 0:
            raise GenerationError(
                f"could not place {n_events} events with separation {min_separation} in {T} steps"
            )
        budget -= 1
        t = int(rng.integers(0, T))
        if all(abs(t - u) >= min_separation for u in times):
            times.append(t)
    return np.array(sorted(times), dtype=np.int64)


def _add_pulse(features, t, kernel, profile, amplitude):
    T = features.shape[0]
    half = kernel.size // 2
    lo, hi = max(0, t - half), min(T, t + half + 1)
    features[lo:hi] += amplitude * kernel[lo - t + half: hi - t + half, None] * profile[None, :]


def gen_sequence(cfg: SynthConfig, seed: int) -> SampleRecord:
    """One noisy feature sequence with planted per-channel pulses.

    Event times are the pulse peaks.  Distractors are broadband box pulses
    that belong to no channel.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(cfg.T_min, cfg.T_max + 1))
    feats = np.zeros((T, cfg.feature_dim))
    kernel = pulse_kernel(cfg.pulse_width)
    truth = []
    for c in range(cfg.channels):
        n = int(rng.binomial(T, cfg.event_rate[c]))
        times = sample_event_times(rng, T, n, cfg.min_separation)
        profile = spectral_profile(c, cfg.channels, cfg.feature_dim)
        for t in times:
            _add_pulse(feats, int(t), kernel, profile, cfg.amplitude)
        truth.append(times)
    if cfg.distractor_rate > 0:
        box = np.ones(kernel.size)
        flat = np.full(cfg.feature_dim, 0.5)
        for t in range(T):
            if rng.random() < cfg.distractor_rate:
                _add_pulse(feats, t, box, flat, cfg.amplitude)
    feats += rng.normal(0.0, cfg.noise_std, size=feats.shape)
    counts = np.array([len(t) for t in truth], dtype=np.int64)
    return SampleRecord(features=feats, counts=counts, hidden_truth=tuple(truth), seed=int(seed))


def sample_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def gen_dataset(cfg: SynthConfig, n: int, seed: int) -> list[SampleRecord]:
    return [gen_sequence(cfg, s) for s in sample_seeds(seed, n)]


# --- IDX files -------------------------------------------------------------

IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class IdxMeta:
    type_code: int
    shape: tuple
    normalized: bool


def _open(path, mode):
    path = Path(path)
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def load_idx(path, normalize: bool = True):
    """Read an IDX tensor.  Unsigned-byte data is mapped to ``[0, 1]`` when
    ``normalize`` is set (use ``normalize=False`` for label files).

    Returns ``(array, IdxMeta)``.
    """
    with _open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"file too short for IDX magic number: {len(raw)} bytes", offset=len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise FormatError("bad IDX magic: first two bytes must be zero", offset=0)
    code, ndim = raw[2], raw[3]
    if code not in IDX_TYPES:
        raise FormatError(f"unknown IDX type code 0x{code:02X}", offset=2)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"truncated IDX header: need {header} bytes, got {len(raw)}", offset=len(raw))
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = IDX_TYPES[code]
    expected = header + int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"IDX payload size mismatch: expected {expected} bytes in total, got {len(raw)}",
            offset=min(len(raw), expected),
        )
    data = np.frombuffer(raw, dtype=dtype, offset=header).reshape(shape)
    normalized = normalize and code == 0x08
    arr = data.astype(np.float64) / 255.0 if normalized else data.astype(dtype.newbyteorder("="))
    return arr, IdxMeta(type_code=code, shape=tuple(shape), normalized=normalized)


def write_idx(path, array, meta: IdxMeta | int = 0x0E):
    """Write ``array`` as IDX.  ``meta`` is a type code or the metadata returned
    by :func:`load_idx`, in which case normalized bytes are scaled back."""
    code = meta.type_code if isinstance(meta, IdxMeta) else int(meta)
    normalized = isinstance(meta, IdxMeta) and meta.normalized
    if code not in IDX_TYPES:
        raise InvalidInputError(f"unknown IDX type code 0x{code:02X}")
    arr = np.asarray(array)
    if normalized:
        arr = np.rint(arr * 255.0)
    payload = arr.astype(IDX_TYPES[code]).tobytes()
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    with _open(path, "wb") as fh:
        fh.write(header + payload)


# --- 2-D canvases ----------------------------------------------------------

@dataclass(frozen=True)
class CanvasConfig:
    width: int = 64
    height: int = 64
    depth: int = 1
    classes: int = 2
    min_glyphs: int = 1
    max_glyphs: int = 3
    glyph_size: int = 5
    noise_std: float = 0.0
    max_retries: int = MAX_RETRIES
    # when > 0, glyph centers must fall in distinct cells of this size
    center_cell: int = 0


@dataclass(frozen=True)
class CanvasRecord:
    image: np.ndarray  # W x H x d
    counts: np.ndarray
    centers: tuple  # per class: k x 2 array of (x, y) box centers in pixels
    seed: int


def _glyph_array(img, depth):
    g = np.asarray(img, dtype=np.float64)
    if g.ndim == 2:
        g = np.repeat(g[:, :, None], depth, axis=2)
    return g


def _center_cell(x0, y0, w, h, size):
    return int((x0 + w / 2.0) // size), int((y0 + h / 2.0) // size)


def compose_canvas(glyphs, cfg: CanvasConfig, seed: int) -> CanvasRecord:
    """Paste class-labeled glyphs at uniformly random, non-overlapping positions.

    ``glyphs`` is a list of ``(class_index, image)`` with images ``w x h`` or
    ``w x h x d``.  Bounding boxes are kept pairwise disjoint.
    """
    rng = np.random.default_rng(seed)
    canvas = np.zeros((cfg.width, cfg.height, cfg.depth))
    boxes: list[tuple[int, int, int, int]] = []
    centers: list[list] = [[] for _ in range(cfg.classes)]
    for cls, img in glyphs:
        if not 0 <= cls < cfg.classes:
            raise InvalidInputError(f"glyph class {cls} outside [0, {cfg.classes})")
        g = _glyph_array(img, cfg.depth)
        w, h = g.shape[:2]
        if w > cfg.width or h > cfg.height:
            raise InvalidInputError(f"glyph {w}x{h} larger than canvas {cfg.width}x{cfg.height}")
        for _ in range(cfg.max_retries):
            x0 = int(rng.integers(0, cfg.width - w + 1))
            y0 = int(rng.integers(0, cfg.height - h + 1))
            disjoint = all(x0 >= bx1 or bx0 >= x0 + w or y0 >= by1 or by0 >= y0 + h for bx0, by0, bx1, by1 in boxes)
            if disjoint and cfg.center_cell > 0:
                cell = _center_cell(x0, y0, w, h, cfg.center_cell)
                disjoint = all(_center_cell(bx0, by0, bx1 - bx0, by1 - by0, cfg.center_cell) != cell
                               for bx0, by0, bx1, by1 in boxes)
            if disjoint:
                break
        else:
            raise GenerationError(f"could not place glyph {len(boxes) + 1} without overlap")
        boxes.append((x0, y0, x0 + w, y0 + h))
        canvas[x0:x0 + w, y0:y0 + h] = g
        centers[cls].append((x0 + w / 2.0, y0 + h / 2.0))
    if cfg.noise_std > 0:
        canvas += rng.normal(0.0, cfg.noise_std, size=canvas.shape)
    counts = np.array([len(c) for c in centers], dtype=np.int64)
    return CanvasRecord(
        image=canvas,
        counts=counts,
        centers=tuple(np.array(c, dtype=np.float64).reshape(-1, 2) for c in centers),
        seed=int(seed),
    )


def synthetic_glyph(cls: int, size: int, rng) -> np.ndarray:
    """Class 0 is a filled disc, class 1 a hollow square; intensity jittered."""
    s = size
    xs = np.arange(s) - (s - 1) / 2.0
    if cls == 0:
        rr = xs[:, None] ** 2 + xs[None, :] ** 2
        g = (rr <= ((s - 1) / 2.0) ** 2 + 0.5).astype(np.float64)
    elif cls == 1:
        g = np.ones((s, s))
        g[1:-1, 1:-1] = 0.0
    else:
        raise InvalidInputError(f"no synthetic glyph for class {cls}")
    return g * rng.uniform(0.7, 1.0)


def glyph_bank_from_idx(images, labels, digits):
    """Group IDX digit images by class; ``digits[i]`` is the digit used for class ``i``."""
    labels = np.asarray(labels).astype(np.int64)
    return [np.asarray(images)[labels == d] for d in digits]


def gen_canvas(cfg: CanvasConfig, seed: int, bank=None) -> CanvasRecord:
    """Random canvas with ``min_glyphs..max_glyphs`` glyphs of random classes.

    Glyphs come from ``bank`` (per-class image stacks, images indexed
    ``[row, col]`` and transposed to ``[x, y]``) or are synthesized.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(cfg.min_glyphs, cfg.max_glyphs + 1))
    glyphs = []
    for _ in range(k):
        cls = int(rng.integers(0, cfg.classes))
        if bank is None:
            glyphs.append((cls, synthetic_glyph(cls, cfg.glyph_size, rng)))
        else:
            stack = bank[cls]
            glyphs.append((cls, stack[int(rng.integers(0, len(stack)))].T))
    return compose_canvas(glyphs, cfg, int(rng.integers(0, 2**32)))


def canvas_to_sample(rec: CanvasRecord, curve: HilbertCurve) -> SampleRecord:
    """Serialize a canvas along the curve; truth is the cell index of each glyph center."""
    scan = scan_image(rec.image, curve)
    truth = tuple(
        np.array(sorted(index_of_point(curve, x, y) for x, y in c), dtype=np.int64) for c in rec.centers
    )
    return SampleRecord(
        features=scan.sequence,
        counts=rec.counts.copy(),
        hidden_truth=truth,
        seed=rec.seed,
        extra={"centers": rec.centers},
    )


def gen_canvas_dataset(cfg: CanvasConfig, curve: HilbertCurve, n: int, seed: int, bank=None) -> list[SampleRecord]:
    return [canvas_to_sample(gen_canvas(cfg, s, bank), curve) for s in sample_seeds(seed, n)]
