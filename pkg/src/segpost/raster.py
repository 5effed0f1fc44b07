"""Label maps, binary masks and the conversions between them.

Both raster types wrap a read-only numpy array in row-major (height, width)
order with the origin at the top-left corner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

MAX_LABEL = 255


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel object ids, 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"label map must be at least 1x1, got {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > MAX_LABEL):
                raise ValueError("label values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "labels", _frozen(arr))

    @classmethod
    def zeros(cls, width: int, height: int) -> "LabelMap":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "LabelMap":
        return cls(np.array(rows, dtype=np.int64))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def object_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    def __hash__(self):
        return hash((self.shape, self.labels.tobytes()))

    def __repr__(self):
        return f"LabelMap({self.width}x{self.height}, ids={self.object_ids()})"


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Single-object foreground raster."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            arr = arr != 0
        object.__setattr__(self, "bits", _frozen(arr))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "BinaryMask":
        return cls(np.array(rows, dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def any(self) -> bool:
        return bool(self.bits.any())

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.bits & other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.bits | other.bits)

    def issubset(self, other: "BinaryMask") -> bool:
        _check_same_shape(self, other)
        return not bool((self.bits & ~other.bits).any())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, np.packbits(self.bits).tobytes()))

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, count={self.count()})"


def _check_same_shape(*rasters) -> None:
    shapes = {r.shape for r in rasters}
    if len(shapes) > 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


class ObjectSet:
    """Per-object masks keyed by positive object id, kept sorted by id.

    ``shape`` must be given when the set is empty so that merging still
    knows the frame size.
    """

    def __init__(self, entries: Iterable[tuple[int, BinaryMask]] = (), shape: tuple[int, int] | None = None):
        items = sorted(((int(k), m) for k, m in entries), key=lambda e: e[0])
        ids = [k for k, _ in items]
        if any(k <= 0 for k in ids):
            raise ValueError("object ids must be strictly positive")
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        shapes = {m.shape for _, m in items}
        if shape is not None:
            shapes.add(tuple(shape))
        if len(shapes) > 1:
            raise ValueError(f"dimension mismatch among masks: {sorted(shapes)}")
        if not shapes:
            raise ValueError("an empty ObjectSet needs an explicit shape")
        self.shape: tuple[int, int] = shapes.pop()
        self.entries: tuple[tuple[int, BinaryMask], ...] = tuple(items)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[int, BinaryMask]]:
        return iter(self.entries)

    def ids(self) -> list[int]:
        return [k for k, _ in self.entries]

    def mask(self, object_id: int) -> BinaryMask:
        for k, m in self.entries:
            if k == object_id:
                return m
        raise KeyError(object_id)

    def __eq__(self, other):
        if not isinstance(other, ObjectSet):
            return NotImplemented
        return self.shape == other.shape and self.entries == other.entries

    def __repr__(self):
        return f"ObjectSet(shape={self.shape}, ids={self.ids()})"


def split_labels(label_map: LabelMap) -> ObjectSet:
    """One disjoint mask per nonzero label present in ``label_map``."""
    arr = label_map.labels
    return ObjectSet(((k, BinaryMask(arr == k)) for k in label_map.object_ids()), shape=label_map.shape)


def merge_labels(objs: ObjectSet) -> LabelMap:
    """Flatten masks into a label map; where masks overlap the highest id wins."""
    out = np.zeros(objs.shape, dtype=np.uint8)
    # ascending order, so later (higher) ids overwrite earlier ones
    for k, m in objs:
        if k > MAX_LABEL:
            raise ValueError(f"object id {k} exceeds {MAX_LABEL}")
        out[m.bits] = k
    return LabelMap(out)


def nearest_indices(src_size: int, dst_size: int) -> np.ndarray:
    """Source index for each destination index: floor((dst + 0.5) * src / dst), clamped."""
    dst = np.arange(dst_size, dtype=np.int64)
    idx = ((2 * dst + 1) * src_size) // (2 * dst_size)
    return np.minimum(idx, src_size - 1)


def resize_labelmap(label_map: LabelMap, new_width: int, new_height: int) -> LabelMap:
    """Nearest-neighbour resize; never invents labels."""
    if new_width < 1 or new_height < 1:
        raise ValueError(f"target size must be positive, got {new_width}x{new_height}")
    if (new_width, new_height) == (label_map.width, label_map.height):
        return label_map
    rows = nearest_indices(label_map.height, new_height)
    cols = nearest_indices(label_map.width, new_width)
    return LabelMap(label_map.labels[np.ix_(rows, cols)])
