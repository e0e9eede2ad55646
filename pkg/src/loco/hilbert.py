"""Hilbert-curve serialization of images into causal window sequences.

A curve of order ``n`` visits the ``2**n x 2**n`` cells of a grid so that
consecutive indices are edge-adjacent.  Images are cut into non-overlapping
``w x h`` windows, one per cell, and emitted in curve order.

Images are indexed ``image[x, y, channel]``; cell ``(cx, cy)`` covers pixels
``cx*w <= x < (cx+1)*w`` and ``cy*h <= y < (cy+1)*h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class HilbertCurve:
    order: int
    cell_w: int = 8
    cell_h: int = 8

    def __post_init__(self):
        if self.order < 0:
            raise InvalidInputError(f"curve order must be >= 0, got {self.order}")
        if self.cell_w < 1 or self.cell_h < 1:
            raise InvalidInputError("cell size must be positive")

    @property
    def side(self) -> int:
        return 1 << self.order

    @property
    def length(self) -> int:
        return 4 ** self.order

    @property
    def width(self) -> int:
        return self.side * self.cell_w

    @property
    def height(self) -> int:
        return self.side * self.cell_h


def _rotate(s, x, y, rx, ry):
    if ry == 0:
        if rx == 1:
            x = s - 1 - x
            y = s - 1 - y
        x, y = y, x
    return x, y


def d2xy(n: int, d: int) -> tuple[int, int]:
    """Cell coordinates of curve index ``d`` on the order-``n`` curve."""
    if not 0 <= d < 4 ** n:
        raise InvalidInputError(f"index {d} outside [0, {4 ** n}) for order {n}")
    side = 1 << n
    x = y = 0
    t = d
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        x, y = _rotate(s, x, y, rx, ry)
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def xy2d(n: int, x: int, y: int) -> int:
    """Curve index of cell ``(x, y)``; inverse of :func:`d2xy`."""
    side = 1 << n
    if not (0 <= x < side and 0 <= y < side):
        raise InvalidInputError(f"cell ({x}, {y}) outside the {side}x{side} grid")
    d = 0
    s = side // 2
    while s > 0:
        rx = 1 if (x & s) > 0 else 0
        ry = 1 if (y & s) > 0 else 0
        d += s * s * ((3 * rx) ^ ry)
        x, y = _rotate(side, x, y, rx, ry)
        s //= 2
    return d


def curve_cells(n: int) -> np.ndarray:
    """``4**n x 2`` array of cell coordinates in visiting order."""
    return np.array([d2xy(n, d) for d in range(4 ** n)], dtype=np.int64).reshape(-1, 2)


@dataclass
class ScanResult:
    sequence: np.ndarray  # T x (w*h*d)
    pad_x: int = 0
    pad_y: int = 0
    meta: dict = field(default_factory=dict)


def scan_image(image, curve: HilbertCurve) -> ScanResult:
    """Flatten ``w x h`` windows of ``image`` in curve order.

    Smaller images are zero-padded on the high-x / high-y side up to the
    curve's extent and the padding is recorded; larger images are rejected.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise InvalidInputError(f"image must be W x H or W x H x d, got shape {img.shape}")
    W, H, depth = img.shape
    if W > curve.width or H > curve.height:
        raise InvalidInputError(f"image {W}x{H} exceeds curve extent {curve.width}x{curve.height}")
    pad_x, pad_y = curve.width - W, curve.height - H
    if pad_x or pad_y:
        img = np.pad(img, ((0, pad_x), (0, pad_y), (0, 0)))
    w, h, side = curve.cell_w, curve.cell_h, curve.side
    # blocks[cx, cy] is the window of cell (cx, cy)
    blocks = img.reshape(side, w, side, h, depth).transpose(0, 2, 1, 3, 4).reshape(side, side, w * h * depth)
    cells = curve_cells(curve.order)
    seq = blocks[cells[:, 0], cells[:, 1]]
    return ScanResult(sequence=seq, pad_x=pad_x, pad_y=pad_y,
                      meta={"order": curve.order, "cell": (w, h), "depth": depth})


def cell_of_point(curve: HilbertCurve, px: float, py: float) -> tuple[int, int]:
    cx = min(int(px // curve.cell_w), curve.side - 1)
    cy = min(int(py // curve.cell_h), curve.side - 1)
    return cx, cy


def index_of_point(curve: HilbertCurve, px: float, py: float) -> int:
    """Curve index of the cell containing the continuous point ``(px, py)``."""
    return xy2d(curve.order, *cell_of_point(curve, px, py))


def cell_center(curve: HilbertCurve, d: int) -> tuple[float, float]:
    """Pixel-space center of the cell visited at index ``d``."""
    cx, cy = d2xy(curve.order, d)
    return (cx + 0.5) * curve.cell_w, (cy + 0.5) * curve.cell_h
