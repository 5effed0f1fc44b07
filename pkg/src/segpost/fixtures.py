"""Seeded synthetic sequences for exercising the pipeline without a model.

``make_fixtures`` writes a ground-truth tree, a set of simulated multi-scale
predictions (stored at their scaled resolution) and a fusion manifest:

    <out>/gt/<sequence>/<frame>.png
    <out>/pred/scale_<factor>/<sequence>/<frame>.png
    <out>/manifest.txt

Predictions carve a thin background seam wherever two objects touch, which
is the defect gap filling is meant to repair, and add small random blotches
that differ between scales so voting has something to do.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .fusion import ScaleSchedule, apply_transform
from .maskio import frame_name, write_mask_file
from .morphology import StructuringElement, dilate_array
from .raster import LabelMap

DEFAULT_WIDTH, DEFAULT_HEIGHT = 96, 64
DEFAULT_FRAMES = 6


def _disk(h: int, w: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[:h, :w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def two_blob_frame(width: int, height: int, channel: int, top: int = 0, bottom: int | None = None) -> LabelMap:
    """Two rectangles separated by a vertical background channel ``channel`` pixels wide.

    Object 1 spans the left part, object 2 the right part, both from row
    ``top`` to ``bottom`` (exclusive).
    """
    bottom = height if bottom is None else bottom
    a = np.zeros((height, width), dtype=np.uint8)
    left_end = (width - channel) // 2
    a[top:bottom, 2:left_end] = 1
    a[top:bottom, left_end + channel : width - 2] = 2
    return LabelMap(a)


def gap_channel_pixels(label_map: LabelMap, channel: int, top: int = 0, bottom: int | None = None) -> int:
    """Background pixels left inside the channel of a ``two_blob_frame``."""
    bottom = label_map.height if bottom is None else bottom
    left_end = (label_map.width - channel) // 2
    strip = label_map.labels[top:bottom, left_end : left_end + channel]
    return int(np.count_nonzero(strip == 0))


def _gt_sequences(rng: np.random.Generator, width: int, height: int, n_frames: int) -> dict[str, list[LabelMap]]:
    seqs: dict[str, list[LabelMap]] = {}

    # two touching slabs sliding right together
    frames = []
    for t in range(n_frames):
        a = np.zeros((height, width), dtype=np.uint8)
        x0 = 10 + 2 * t
        a[12 : height - 12, x0 : x0 + 24] = 1
        a[12 : height - 12, x0 + 24 : x0 + 46] = 2
        frames.append(LabelMap(a))
    seqs["adjacent"] = frames

    # three moving disks, overlaps resolved by higher id
    starts = rng.uniform([15, 15], [height - 15, width - 15], size=(3, 2))
    vel = rng.uniform(-3, 3, size=(3, 2))
    radii = rng.uniform(8, 14, size=3)
    frames = []
    for t in range(n_frames):
        a = np.zeros((height, width), dtype=np.uint8)
        for k in range(3):
            cy, cx = starts[k] + vel[k] * t
            a[_disk(height, width, cy, cx, radii[k])] = k + 1
        frames.append(LabelMap(a))
    seqs["crowd"] = frames

    # object 2 vanishes on the middle frames then comes back
    frames = []
    gone = set(range(n_frames // 3, 2 * n_frames // 3 + 1)) - {0}
    for t in range(n_frames):
        a = np.zeros((height, width), dtype=np.uint8)
        a[_disk(height, width, height / 2, 20 + t, 10)] = 1
        if t not in gone:
            a[_disk(height, width, height / 2, width - 22, 9)] = 2
        frames.append(LabelMap(a))
    seqs["vanish"] = frames
    return seqs


def carve_seams(label_map: LabelMap, width: int = 1) -> LabelMap:
    """Clear object pixels within ``width`` of a different object."""
    labels = label_map.labels
    a = labels.copy()
    se = StructuringElement.square(width)
    for k in label_map.object_ids():
        others = (labels != 0) & (labels != k)
        near = dilate_array(others, se)
        a[(labels == k) & near] = 0
    return LabelMap(a)


def _blotch(rng: np.random.Generator, label_map: LabelMap, count: int) -> LabelMap:
    a = label_map.labels.copy()
    h, w = a.shape
    ids = [0] + label_map.object_ids()
    for _ in range(count):
        y, x = rng.integers(0, h - 3), rng.integers(0, w - 3)
        a[y : y + 3, x : x + 3] = ids[rng.integers(len(ids))]
    return LabelMap(a)


def make_fixtures(
    out_root,
    seed: int = 0,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    n_frames: int = DEFAULT_FRAMES,
    schedule: ScaleSchedule | None = None,
) -> dict[str, int]:
    """Write the fixture tree; returns counts of what was written."""
    out_root = Path(out_root)
    schedule = schedule or ScaleSchedule()
    rng = np.random.default_rng(seed)
    seqs = _gt_sequences(rng, width, height, n_frames)
    written = 0
    manifest = ["# transform-descriptor  member-directory (relative to this file)"]
    transforms = schedule.transforms()
    member_dirs = []
    for t in transforms:
        tag = "1" if t.kind.value == "id" else f"{float(t.scale_factor):.3f}"
        member_dirs.append(f"pred/scale_{tag}")
        manifest.append(f"{t.describe()} pred/scale_{tag}")

    for name, frames in seqs.items():
        for i, gt in enumerate(frames):
            fname = frame_name(i)
            write_mask_file(gt, out_root / "gt" / name / fname)
            seamed = carve_seams(gt)
            for m, (t, mdir) in enumerate(zip(transforms, member_dirs)):
                # member 0 keeps only the seams; the rest also get blotches
                pred = seamed if m == 0 else _blotch(rng, seamed, 3)
                write_mask_file(apply_transform(pred, t), out_root / mdir / name / fname)
                written += 1
            written += 1
    (out_root / "manifest.txt").write_text("\n".join(manifest) + "\n")
    return {"sequences": len(seqs), "frames": n_frames * len(seqs), "files": written}
