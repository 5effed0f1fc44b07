"""Indexed PNG mask files and the <root>/<sequence>/<frame>.png tree layout."""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import LabelMap

DEFAULT_MAX_SIDE = 16384

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# colour types that carry a single 8-bit sample per pixel
_GRAY, _PALETTE = 0, 3


class MaskFormatError(ValueError):
    """A mask file exists but cannot be interpreted as an 8-bit label map."""


def davis_palette() -> list[int]:
    """The usual VOS colour map (bit-interleaved, as in PASCAL VOC / DAVIS)."""
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal.extend((r, g, b))
    return pal


_PALETTE_BYTES = davis_palette()


def _read_ihdr(path: Path) -> tuple[int, int, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != _PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise MaskFormatError(f"{path}: not a PNG file")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    return width, height, bit_depth, color_type


def read_mask_file(path, max_side: int = DEFAULT_MAX_SIDE) -> LabelMap:
    path = Path(path)
    try:
        width, height, bit_depth, color_type = _read_ihdr(path)
    except OSError as exc:
        raise MaskFormatError(f"{path}: unreadable ({exc.strerror or exc})") from exc
    if bit_depth != 8:
        raise MaskFormatError(f"{path}: unsupported bit depth {bit_depth}")
    if color_type not in (_GRAY, _PALETTE):
        raise MaskFormatError(f"{path}: unsupported colour type {color_type}, need grayscale or palette")
    if width > max_side or height > max_side:
        raise MaskFormatError(f"{path}: {width}x{height} exceeds maximum side {max_side}")
    try:
        with Image.open(path) as im:
            # keep raw indices; never convert palette images to RGB
            arr = np.array(im)
    except OSError as exc:
        raise MaskFormatError(f"{path}: unreadable ({exc})") from exc
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise MaskFormatError(f"{path}: decoded to {arr.dtype} {arr.shape}, expected 8-bit single channel")
    return LabelMap(arr)


def write_mask_file(label_map: LabelMap, path) -> None:
    """Write as a palette PNG; pixel index == object id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    im = Image.frombytes("P", (label_map.width, label_map.height), label_map.labels.tobytes())
    im.putpalette(_PALETTE_BYTES)
    tmp = path.with_name(path.name + ".tmp")
    im.save(tmp, format="PNG")
    os.replace(tmp, path)


def list_sequences(root) -> list[str]:
    root = Path(root)
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def list_frames(seq_dir) -> list[str]:
    """Frame file names in lexicographic order."""
    return sorted(p.name for p in Path(seq_dir).iterdir() if p.is_file() and p.suffix.lower() == ".png")


def read_sequence(seq_dir, max_side: int = DEFAULT_MAX_SIDE) -> tuple[list[str], list[LabelMap]]:
    names = list_frames(seq_dir)
    return names, [read_mask_file(Path(seq_dir) / n, max_side) for n in names]


def frame_name(index: int, width: int = 5) -> str:
    return f"{index:0{width}d}.png"
