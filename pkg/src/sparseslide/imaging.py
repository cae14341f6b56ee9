"""Raster primitives for slide thumbnails and annotation masks.

Grayscale images, binary masks, integral images (summed-area tables),
separable Gaussian blur, Otsu thresholding, box-filter downsampling and
8-connected component labeling, plus binary PGM (P5) I/O. Everything here
runs on small planes -- thumbnails and annotation maps -- never on
full-resolution slide pixels, so plain numpy is plenty.

Conventions, fixed so results replay exactly:

* images are row-major, origin at the top-left, 8-bit values;
* rectangles are half-open: [x0, x1) x [y0, y1);
* blur pads by mirroring with edge repetition, which keeps the total
  intensity of the float result exact before rounding;
* integral tables are int64, wide enough for a full 65536 x 65536 mask.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

TISSUE_FRACTION_MIN = 0.20


@dataclass(frozen=True)
class Rect:
    """Half-open axis-aligned rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return max(0, self.x1 - self.x0)

    @property
    def height(self) -> int:
        return max(0, self.y1 - self.y0)

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def is_empty(self) -> bool:
        return self.x1 <= self.x0 or self.y1 <= self.y0

    def clipped(self, width: int, height: int) -> "Rect":
        """Intersection with the [0, width) x [0, height) frame."""
        return Rect(
            max(0, self.x0),
            max(0, self.y0),
            min(width, self.x1),
            min(height, self.y1),
        )

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )


def _frozen_2d(arr: np.ndarray, dtype) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("expected a non-empty 2-D array")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, shape (height, width), immutable."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _frozen_2d(np.asarray(self.pixels).copy(), np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    @classmethod
    def constant(cls, width: int, height: int, value: int) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Binary raster with values in {0, 1}, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits).copy()
        if arr.size and arr.max(initial=0) > 1:
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _frozen_2d(arr, np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """Summed-area table; ``table[y][x]`` is the sum over [0, x) x [0, y).

    The table has one extra row and column of zeros so region queries
    need no boundary special cases.
    """

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen_2d(np.asarray(self.table), np.int64))

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1


@dataclass(frozen=True)
class Component:
    """One 8-connected foreground component of a binary mask."""

    id: int
    area: int
    bbox: Rect


# ---------------------------------------------------------------------------
# point and neighborhood operations
# ---------------------------------------------------------------------------


def invert(img: GrayImage) -> GrayImage:
    """Photometric inversion: each pixel becomes 255 - value."""
    return GrayImage(255 - img.pixels)


def binarize(img: GrayImage, threshold: int) -> BinaryMask:
    """1 where pixel value is strictly greater than ``threshold``."""
    return BinaryMask((img.pixels > threshold).astype(np.uint8))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    if radius == 0:
        return np.ones(1, dtype=np.float64)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with truncation radius ceil(3*sigma).

    The two 1-D passes accumulate in float64 and the result is rounded
    to the nearest integer once at the end, so the output equals a
    direct 2-D convolution with the normalized outer-product kernel.
    Borders are padded by mirroring with edge repetition. sigma == 0 is
    the identity.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    kernel = _gaussian_kernel(sigma)
    radius = len(kernel) // 2
    if radius == 0:
        return img
    acc = img.pixels.astype(np.float64)
    for axis in (1, 0):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(acc, pad, mode="symmetric")
        windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
        acc = windows @ kernel
    out = np.clip(np.floor(acc + 0.5), 0, 255).astype(np.uint8)
    return GrayImage(out)


def otsu_threshold(img: GrayImage) -> int:
    """Otsu's threshold over the 256-bin histogram.

    Evaluates the between-class variance at every candidate t in
    [0, 255] with class 0 = pixels <= t, and returns the smallest
    maximizing t. A constant image returns its single intensity value
    (every split is degenerate there, so the argmax would be
    meaningless).
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    nonzero = np.flatnonzero(hist)
    if len(nonzero) == 1:
        return int(nonzero[0])
    w0 = np.cumsum(hist, dtype=np.int64)
    s0 = np.cumsum(hist * np.arange(256, dtype=np.int64), dtype=np.int64)
    total, grand = int(w0[-1]), int(s0[-1])
    # between-class variance is (s0*w1 - s1*w0)^2 / (w0*w1); the argmax is
    # taken with exact integer cross-multiplication because the squared
    # numerator can exceed 2^53 and float rounding would break ties
    best_t, best_num2, best_den = -1, -1, 1
    for t in range(256):
        wa, sa = int(w0[t]), int(s0[t])
        wb = total - wa
        if wa == 0 or wb == 0:
            continue
        num = sa * wb - (grand - sa) * wa
        num2, den = num * num, wa * wb
        if num2 * best_den > best_num2 * den:
            best_t, best_num2, best_den = t, num2, den
    return best_t


def downsample(img: GrayImage, factor: int) -> GrayImage:
    """Box-filter downsampling by an integer factor.

    Output dimensions are ceil(dim / factor). Partial blocks on the
    right/bottom edges average over the pixels actually present.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return img
    h, w = img.pixels.shape
    row_starts = np.arange(0, h, factor)
    col_starts = np.arange(0, w, factor)
    sums = np.add.reduceat(img.pixels.astype(np.float64), row_starts, axis=0)
    sums = np.add.reduceat(sums, col_starts, axis=1)
    row_counts = np.minimum(row_starts + factor, h) - row_starts
    col_counts = np.minimum(col_starts + factor, w) - col_starts
    counts = np.outer(row_counts, col_counts)
    out = np.floor(sums / counts + 0.5).astype(np.uint8)
    return GrayImage(out)


# ---------------------------------------------------------------------------
# integral images
# ---------------------------------------------------------------------------


def build_integral(mask: BinaryMask) -> IntegralImage:
    h, w = mask.bits.shape
    table = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask.bits, axis=0, dtype=np.int64), axis=1, out=table[1:, 1:])
    return IntegralImage(table)


def query_region_sum(integral: IntegralImage, rect: Rect) -> int:
    """Number of set bits inside ``rect``; out-of-bounds parts count 0."""
    r = rect.clipped(integral.width, integral.height)
    if r.is_empty:
        return 0
    t = integral.table
    return int(t[r.y1, r.x1] - t[r.y0, r.x1] - t[r.y1, r.x0] + t[r.y0, r.x0])


# ---------------------------------------------------------------------------
# connected components
# ---------------------------------------------------------------------------

_NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def connected_components(mask: BinaryMask) -> list[Component]:
    """8-connected components, ids assigned in raster-scan discovery order.

    Ids start at 1. Flood fill touches only foreground pixels, so cost
    scales with the number of set bits, not the mask area.
    """
    bits = mask.bits
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)
    components: list[Component] = []
    # flatnonzero walks in raster order, which fixes the id assignment
    for flat in np.flatnonzero(bits):
        y, x = divmod(int(flat), w)
        if labels[y, x]:
            continue
        comp_id = len(components) + 1
        stack = [(y, x)]
        labels[y, x] = comp_id
        area = 0
        min_x = max_x = x
        min_y = max_y = y
        while stack:
            cy, cx = stack.pop()
            area += 1
            min_x = min(min_x, cx)
            max_x = max(max_x, cx)
            min_y = min(min_y, cy)
            max_y = max(max_y, cy)
            for dy, dx in _NEIGHBORS_8:
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not labels[ny, nx]:
                    labels[ny, nx] = comp_id
                    stack.append((ny, nx))
        components.append(Component(comp_id, area, Rect(min_x, min_y, max_x + 1, max_y + 1)))
    return components


# ---------------------------------------------------------------------------
# PGM (P5) I/O
# ---------------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*([^\s#]+)")


def _parse_pgm(data: bytes) -> tuple[int, int, bytes]:
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise ValueError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    width, height, maxval = (int(f) for f in fields[1:])
    if width < 1 or height < 1:
        raise ValueError("bad PGM dimensions")
    if not 1 <= maxval <= 255:
        raise ValueError("only single-byte PGM samples are supported")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError("truncated PGM raster")
    return width, height, raster


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        width, height, raster = _parse_pgm(fh.read())
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def write_pgm(img: GrayImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        fh.write(img.pixels.tobytes())


def read_mask_pgm(path) -> BinaryMask:
    """Read a mask PGM; any nonzero sample becomes a set bit."""
    with open(path, "rb") as fh:
        width, height, raster = _parse_pgm(fh.read())
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return BinaryMask((arr > 0).astype(np.uint8))


def write_mask_pgm(mask: BinaryMask, path) -> None:
    """Write a mask as PGM with set bits stored as 255."""
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (mask.width, mask.height))
        fh.write((mask.bits * np.uint8(255)).tobytes())
