"""Binary dilation and erosion with square and disk structuring elements.

Pixels outside the frame count as background for both operations: they never
contribute to a dilation and always break an erosion.

The fast path decomposes every footprint into horizontal runs. A square is a
single run applied per row followed by a vertical run; a disk is the union of
row runs whose half-width shrinks with the vertical offset. Sliding-window
OR/AND over a run of length ``n`` is computed with log2(n) doubling steps.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import isqrt

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

from .raster import BinaryMask


class Shape(str, Enum):
    SQUARE = "square"
    DISK = "disk"


@dataclass(frozen=True)
class StructuringElement:
    shape: Shape = Shape.SQUARE
    radius: int = 1

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"radius must be a non-negative integer, got {self.radius!r}")
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def square(cls, radius: int) -> "StructuringElement":
        return cls(Shape.SQUARE, radius)

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        return cls(Shape.DISK, radius)

    def row_half_widths(self) -> list[tuple[int, int]]:
        """(dy, half_width) for every row of the footprint."""
        r = self.radius
        if self.shape is Shape.SQUARE:
            return [(dy, r) for dy in range(-r, r + 1)]
        return [(dy, isqrt(r * r - dy * dy)) for dy in range(-r, r + 1)]

    def offsets(self) -> list[tuple[int, int]]:
        """Every (dx, dy) covered by the footprint."""
        r = self.radius
        out = []
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if self.shape is Shape.SQUARE or dx * dx + dy * dy <= r * r:
                    out.append((dx, dy))
        return out

    def footprint(self) -> np.ndarray:
        r = self.radius
        grid = np.zeros((2 * r + 1, 2 * r + 1), dtype=bool)
        for dx, dy in self.offsets():
            grid[dy + r, dx + r] = True
        return grid

    def __str__(self):
        return f"{self.shape.value}:{self.radius}"


def _window(arr: np.ndarray, half: int, axis: int, dilate: bool) -> np.ndarray:
    """Centred sliding OR (dilate) or AND (erode) of width 2*half+1 along ``axis``.

    Out-of-range samples read as False.
    """
    if half == 0:
        return arr
    n = arr.shape[axis]
    width = 2 * half + 1

    def shifted_combine(a: np.ndarray, step: int) -> np.ndarray:
        # out[i] = op(a[i], a[i + step]); a[i + step] beyond the end is False
        out = np.zeros_like(a) if not dilate else a.copy()
        if step >= n:
            return out
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[axis] = slice(0, n - step)
        hi[axis] = slice(step, n)
        lo, hi = tuple(lo), tuple(hi)
        if dilate:
            out[lo] |= a[hi]
        else:
            out[lo] = a[lo] & a[hi]
        return out

    # forward window: g[i] covers a[i .. i + cover - 1]
    g = arr
    cover = 1
    while cover * 2 <= width:
        g = shifted_combine(g, cover)
        cover *= 2
    if cover < width:
        g = shifted_combine(g, width - cover)
    # re-centre: result[i] = g[i - half], reading False before the start
    out = np.zeros_like(g)
    dst = [slice(None)] * g.ndim
    src = [slice(None)] * g.ndim
    if half < n:
        dst[axis] = slice(half, n)
        src[axis] = slice(0, n - half)
        out[tuple(dst)] = g[tuple(src)]
    if dilate:
        # the leading ``half`` outputs see windows that start before the
        # array; those windows are the prefix windows of g[0]'s left part
        lead = min(half, n)
        head = _prefix_window(arr, lead, half, axis)
        dst[axis] = slice(0, lead)
        out[tuple(dst)] = head
    return out


def _prefix_window(arr: np.ndarray, lead: int, half: int, axis: int) -> np.ndarray:
    """OR of arr[0 .. i + half] for i in range(lead)."""
    n = arr.shape[axis]
    take = [slice(None)] * arr.ndim
    take[axis] = slice(0, min(n, lead + half))
    cum = np.logical_or.accumulate(arr[tuple(take)], axis=axis)
    idx = np.minimum(np.arange(lead) + half, n - 1)
    return np.take(cum, idx, axis=axis)


def _shift_rows(arr: np.ndarray, dy: int) -> np.ndarray:
    """out[y] = arr[y + dy], False where y + dy is off the frame."""
    h = arr.shape[0]
    out = np.zeros_like(arr)
    if abs(dy) >= h:
        return out
    if dy >= 0:
        out[: h - dy] = arr[dy:]
    else:
        out[-dy:] = arr[: h + dy]
    return out


def _morph(bits: np.ndarray, se: StructuringElement, dilate: bool) -> np.ndarray:
    if se.radius == 0:
        return bits.copy()
    if se.shape is Shape.SQUARE:
        rows = _window(bits, se.radius, axis=1, dilate=dilate)
        return _window(rows, se.radius, axis=0, dilate=dilate)
    runs: dict[int, np.ndarray] = {}
    out = None
    for dy, half in se.row_half_widths():
        if half not in runs:
            runs[half] = _window(bits, half, axis=1, dilate=dilate)
        part = _shift_rows(runs[half], dy)
        if out is None:
            out = part
        elif dilate:
            out |= part
        else:
            out &= part
    return out


def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Pixels whose footprint touches the foreground."""
    return BinaryMask(_morph(mask.bits, se, dilate=True))


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Pixels whose whole footprint lies inside the foreground."""
    return BinaryMask(_morph(mask.bits, se, dilate=False))


def dilate_array(bits: np.ndarray, se: StructuringElement) -> np.ndarray:
    """``dilate`` on a raw boolean array, skipping the wrapper types."""
    return _morph(np.asarray(bits, dtype=bool), se, dilate=True)


def erode_array(bits: np.ndarray, se: StructuringElement) -> np.ndarray:
    return _morph(np.asarray(bits, dtype=bool), se, dilate=False)


@njit(cache=True)
def _brute_force(bits, offsets):
    h, w = bits.shape
    out = np.zeros((h, w), dtype=np.bool_)
    for y in range(h):
        for x in range(w):
            for k in range(offsets.shape[0]):
                sx = x + offsets[k, 0]
                sy = y + offsets[k, 1]
                if 0 <= sx < w and 0 <= sy < h and bits[sy, sx]:
                    out[y, x] = True
                    break
    return out


@lru_cache(maxsize=64)
def _offset_table(se: StructuringElement) -> np.ndarray:
    return np.array(se.offsets(), dtype=np.int64).reshape(-1, 2)


def brute_force_dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Reference dilation: visit every pixel and every footprint offset.

    Slow by design; used to check ``dilate``.
    """
    return BinaryMask(_brute_force(np.ascontiguousarray(mask.bits), _offset_table(se)))
