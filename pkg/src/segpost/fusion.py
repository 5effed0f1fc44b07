"""Test-time augmentation transforms and per-pixel plurality voting."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .raster import LabelMap, resize_labelmap

DEFAULT_SCALES = tuple(Fraction(1) + Fraction(1, 8) * i for i in range(7))


class Kind(str, Enum):
    IDENTITY = "id"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    HFLIP = "hflip"
    RESCALE = "scale"


@dataclass(frozen=True)
class TtaTransform:
    """One augmentation. Rotations are clockwise."""

    kind: Kind = Kind.IDENTITY
    scale_factor: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        factor = Fraction(self.scale_factor)
        if factor <= 0:
            raise ValueError(f"scale factor must be positive, got {self.scale_factor}")
        if self.kind is not Kind.RESCALE and factor != 1:
            raise ValueError(f"{self.kind.value} takes no scale factor")
        object.__setattr__(self, "scale_factor", factor)

    @classmethod
    def parse(cls, text: str) -> "TtaTransform":
        """Parse a descriptor: id, rot90, rot180, rot270, hflip or scale:<factor>."""
        text = text.strip()
        if text.startswith("scale:"):
            raw = text[len("scale:"):]
            try:
                factor = Fraction(raw)
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"bad scale factor {raw!r}") from None
            return cls(Kind.RESCALE, factor)
        try:
            kind = Kind(text)
        except ValueError:
            raise ValueError(f"unknown transform descriptor {text!r}") from None
        if kind is Kind.RESCALE:
            raise ValueError("scale descriptor needs a factor, e.g. scale:1.25")
        return cls(kind)

    def describe(self) -> str:
        if self.kind is Kind.RESCALE:
            f = self.scale_factor
            if Fraction(repr(float(f))) == f:
                return f"scale:{float(f):g}"
            return f"scale:{f.numerator}/{f.denominator}"
        return self.kind.value

    def output_size(self, width: int, height: int) -> tuple[int, int]:
        """(width, height) of a map of the given size after this transform."""
        if self.kind in (Kind.ROT90, Kind.ROT270):
            return height, width
        if self.kind is Kind.RESCALE:
            return scaled_size(width, self.scale_factor), scaled_size(height, self.scale_factor)
        return width, height


def scaled_size(n: int, factor: Fraction) -> int:
    """round-half-up(n * factor), at least 1."""
    return max(1, int(Fraction(n) * factor + Fraction(1, 2)))


def apply_transform(label_map: LabelMap, t: TtaTransform) -> LabelMap:
    a = label_map.labels
    if t.kind is Kind.IDENTITY:
        return label_map
    if t.kind is Kind.ROT90:
        return LabelMap(np.rot90(a, k=-1))
    if t.kind is Kind.ROT180:
        return LabelMap(np.rot90(a, k=2))
    if t.kind is Kind.ROT270:
        return LabelMap(np.rot90(a, k=1))
    if t.kind is Kind.HFLIP:
        return LabelMap(a[:, ::-1])
    w, h = t.output_size(label_map.width, label_map.height)
    return resize_labelmap(label_map, w, h)


_INVERSE = {Kind.ROT90: Kind.ROT270, Kind.ROT270: Kind.ROT90}


def invert_transform(label_map: LabelMap, t: TtaTransform, original_size: tuple[int, int]) -> LabelMap:
    """Map a transformed prediction back onto the original (width, height) grid."""
    width, height = original_size
    expected = t.output_size(width, height)
    if (label_map.width, label_map.height) != expected:
        raise ValueError(
            f"{t.describe()}: map is {label_map.width}x{label_map.height}, "
            f"expected {expected[0]}x{expected[1]} for original {width}x{height}"
        )
    if t.kind is Kind.RESCALE:
        return resize_labelmap(label_map, width, height)
    return apply_transform(label_map, TtaTransform(_INVERSE.get(t.kind, t.kind)))


@dataclass(frozen=True)
class ScaleSchedule:
    scales: tuple[Fraction, ...] = DEFAULT_SCALES

    def __post_init__(self):
        scales = tuple(Fraction(s) for s in self.scales)
        if not scales or scales[0] != 1:
            raise ValueError("scale schedule must start at 1.0")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("scale schedule must be strictly increasing")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def parse(cls, text: str) -> "ScaleSchedule":
        return cls(tuple(Fraction(s.strip()) for s in text.split(",") if s.strip()))

    def transforms(self) -> list[TtaTransform]:
        return [TtaTransform() if s == 1 else TtaTransform(Kind.RESCALE, s) for s in self.scales]


@dataclass(frozen=True)
class PredictionStack:
    """Back-transformed predictions of one frame; member 0 is the canonical one."""

    frame_id: str
    members: tuple[tuple[str, LabelMap], ...] = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple((str(p), m) for p, m in self.members)
        if not members:
            raise ValueError(f"{self.frame_id}: prediction stack is empty")
        shapes = {m.shape for _, m in members}
        if len(shapes) > 1:
            raise ValueError(f"{self.frame_id}: member sizes differ: {sorted(shapes)}")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, frame_id: str, maps: Sequence[LabelMap]) -> "PredictionStack":
        return cls(frame_id, tuple((f"member{i}", m) for i, m in enumerate(maps)))

    def maps(self) -> list[LabelMap]:
        return [m for _, m in self.members]


def vote_arrays(stack: np.ndarray) -> np.ndarray:
    """Plurality vote over axis 0 of an (N, H, W) uint8 array.

    Ties go to member 0's label when it is among the leaders, otherwise to
    the smallest leading label.
    """
    if stack.shape[0] == 1:
        return stack[0].copy()
    best_label = np.zeros(stack.shape[1:], dtype=np.uint8)
    best_count = np.zeros(stack.shape[1:], dtype=np.int32)
    canon_count = np.zeros(stack.shape[1:], dtype=np.int32)
    canon = stack[0]
    for label in np.unique(stack):  # ascending, strict '>' keeps the smallest on ties
        count = np.count_nonzero(stack == label, axis=0).astype(np.int32)
        better = count > best_count
        best_label[better] = label
        best_count[better] = count[better]
        is_canon = canon == label
        canon_count[is_canon] = count[is_canon]
    return np.where(canon_count == best_count, canon, best_label)


def vote_fuse(stack: PredictionStack) -> LabelMap:
    maps = stack.maps()
    if len(maps) == 1:
        return maps[0]
    return LabelMap(vote_arrays(np.stack([m.labels for m in maps])))


def fuse_sequence(stacks: Sequence[PredictionStack]) -> list[LabelMap]:
    return [vote_fuse(s) for s in stacks]
