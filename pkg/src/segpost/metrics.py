"""Region similarity (J), boundary accuracy (F) and J&F aggregation."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Mapping, Sequence

import numpy as np

from .morphology import StructuringElement, dilate_array
from .raster import BinaryMask, LabelMap, _check_same_shape

REPORT_DECIMALS = 4


@dataclass(frozen=True)
class BoundaryParams:
    tolerance_fraction: float = 0.008
    min_tolerance_px: int = 1

    def __post_init__(self):
        if not self.tolerance_fraction > 0:
            raise ValueError("tolerance_fraction must be positive")
        if self.min_tolerance_px < 1:
            raise ValueError("min_tolerance_px must be at least 1")

    def radius(self, width: int, height: int) -> int:
        band = round(self.tolerance_fraction * math.hypot(width, height))
        return max(self.min_tolerance_px, int(band))


def jaccard(pred: BinaryMask, gt: BinaryMask) -> float:
    """Intersection over union; two empty masks score 1."""
    _check_same_shape(pred, gt)
    union = np.count_nonzero(pred.bits | gt.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred.bits & gt.bits) / union


def _boundary_bits(bits: np.ndarray) -> np.ndarray:
    # a foreground pixel with any 4-neighbour in the background or off-frame
    padded = np.pad(bits, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return bits & ~interior


def extract_boundary(mask: BinaryMask) -> BinaryMask:
    return BinaryMask(_boundary_bits(mask.bits))


def boundary_precision_recall(pred: BinaryMask, gt: BinaryMask, params: BoundaryParams | None = None):
    """(precision, recall) of boundary pixels within the tolerance band, or None for an empty side."""
    _check_same_shape(pred, gt)
    params = params or BoundaryParams()
    bp, bg = _boundary_bits(pred.bits), _boundary_bits(gt.bits)
    n_pred, n_gt = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_pred == 0 or n_gt == 0:
        return None
    se = StructuringElement.disk(params.radius(pred.width, pred.height))
    precision = np.count_nonzero(bp & dilate_array(bg, se)) / n_pred
    recall = np.count_nonzero(bg & dilate_array(bp, se)) / n_gt
    return precision, recall


def boundary_f(pred: BinaryMask, gt: BinaryMask, params: BoundaryParams | None = None) -> float:
    """Harmonic mean of boundary precision and recall.

    Both boundaries empty scores 1, exactly one empty scores 0.
    """
    _check_same_shape(pred, gt)
    pred_any, gt_any = pred.any(), gt.any()
    if not pred_any and not gt_any:
        return 1.0
    if not pred_any or not gt_any:
        return 0.0
    precision, recall = boundary_precision_recall(pred, gt, params)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class FrameScore:
    object_id: int
    frame_index: int
    j: float
    f: float


def evaluate_sequence(
    pred_frames: Sequence[LabelMap],
    gt_frames: Sequence[LabelMap],
    object_ids: Sequence[int] | None = None,
    params: BoundaryParams | None = None,
    exclude_first: bool = True,
    exclude_last: bool = False,
) -> list[FrameScore]:
    """Score every object on every non-excluded frame.

    ``object_ids`` defaults to every object present in the ground truth.
    """
    if len(pred_frames) != len(gt_frames):
        raise ValueError(f"frame count mismatch: {len(pred_frames)} predicted vs {len(gt_frames)} ground truth")
    for i, (p, g) in enumerate(zip(pred_frames, gt_frames)):
        if p.shape != g.shape:
            raise ValueError(f"frame {i}: predicted {p.shape} vs ground truth {g.shape}")
    gt_ids = sorted(set().union(*(g.object_ids() for g in gt_frames))) if gt_frames else []
    if object_ids is None:
        object_ids = gt_ids
    missing = sorted(set(object_ids) - set(gt_ids))
    if missing:
        raise ValueError(f"object ids {missing} never appear in the ground truth")
    params = params or BoundaryParams()

    scores = []
    n = len(gt_frames)
    for idx in scored_frame_indices(n, exclude_first, exclude_last):
        p, g = pred_frames[idx].labels, gt_frames[idx].labels
        for k in object_ids:
            pm, gm = BinaryMask(p == k), BinaryMask(g == k)
            scores.append(FrameScore(k, idx, jaccard(pm, gm), boundary_f(pm, gm, params)))
    return scores


def scored_frame_indices(n: int, exclude_first: bool = True, exclude_last: bool = False) -> list[int]:
    lo = 1 if exclude_first else 0
    hi = n - 1 if exclude_last else n
    return list(range(lo, max(lo, hi)))


def report_round(value: float, decimals: int = REPORT_DECIMALS) -> float:
    """Round half-to-even on the shortest decimal form of ``value``."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN))


def jf_mean(mean_j: float, mean_f: float) -> float:
    """J&F computed exactly from decimal inputs, rounded for reporting."""
    total = Decimal(repr(float(mean_j))) + Decimal(repr(float(mean_f)))
    q = Decimal(1).scaleb(-REPORT_DECIMALS)
    return float((total / 2).quantize(q, rounding=ROUND_HALF_EVEN))


@dataclass
class ScoreReport:
    per_object: list[dict] = field(default_factory=list)
    per_sequence: list[dict] = field(default_factory=list)
    global_: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    excluded_frames: list[dict] = field(default_factory=list)
    flagged: list[dict] = field(default_factory=list)
    aggregation: str = "hierarchical"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["global"] = d.pop("global_")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [(s["sequence"], s["J"], s["F"], s["J&F"]) for s in self.per_sequence]
        rows.append(("Global", self.global_["J"], self.global_["F"], self.global_["J&F"]))
        name_w = max(len("Sequence"), *(len(r[0]) for r in rows))
        lines = [f"{'Sequence':<{name_w}}  {'J':>6}  {'F':>6}  {'J&F':>6}"]
        lines.append("-" * len(lines[0]))
        for name, j, f, jf in rows:
            if name == "Global":
                lines.append("-" * len(lines[0]))
            lines.append(f"{name:<{name_w}}  {j:6.4f}  {f:6.4f}  {jf:6.4f}")
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _level(name_key: str, name, mean_j: float, mean_f: float) -> dict:
    return {
        name_key: name,
        "J": report_round(mean_j),
        "F": report_round(mean_f),
        "J&F": report_round((mean_j + mean_f) / 2),
    }


def aggregate(
    scores: Mapping[str, Sequence[FrameScore]] | Sequence[FrameScore],
    grouping: str = "hierarchical",
    excluded_frames: Mapping[str, Sequence[int]] | None = None,
) -> ScoreReport:
    """Fold frame scores into a report.

    ``grouping="hierarchical"`` averages frames per object, objects per
    sequence, then sequences. ``grouping="pooled"`` averages every
    (sequence, object) track directly, ignoring sequence boundaries. A bare
    list of scores is treated as a single sequence.
    """
    if not isinstance(scores, Mapping):
        scores = {"sequence": list(scores)}
    if grouping not in ("hierarchical", "pooled"):
        raise ValueError(f"unknown grouping {grouping!r}")
    if not any(scores.values()):
        raise ValueError("no scores to aggregate")

    report = ScoreReport(aggregation=grouping)
    seq_means = []
    track_means = []
    n_frames = 0
    for seq in sorted(scores):
        per_obj = defaultdict(list)
        for s in scores[seq]:
            per_obj[s.object_id].append(s)
        if not per_obj:
            continue
        obj_means = []
        for k in sorted(per_obj):
            js = _mean([s.j for s in per_obj[k]])
            fs = _mean([s.f for s in per_obj[k]])
            obj_means.append((js, fs))
            report.per_object.append({"sequence": seq, "object_id": k, **_level("frames", len(per_obj[k]), js, fs)})
        sj = _mean([m[0] for m in obj_means])
        sf = _mean([m[1] for m in obj_means])
        seq_means.append((sj, sf))
        track_means.extend(obj_means)
        n_frames += len({s.frame_index for s in scores[seq]})
        report.per_sequence.append(_level("sequence", seq, sj, sf))

    pool = seq_means if grouping == "hierarchical" else track_means
    gj = _mean([m[0] for m in pool])
    gf = _mean([m[1] for m in pool])
    report.global_ = _level("level", "global", gj, gf)
    report.counts = {"sequences": len(seq_means), "objects": len(track_means), "frames": n_frames}
    for seq, frames in sorted((excluded_frames or {}).items()):
        report.excluded_frames.append({"sequence": seq, "frames": list(frames)})
    return report
