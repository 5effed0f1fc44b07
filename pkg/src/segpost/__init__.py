"""Post-processing, fusion and scoring of multi-object video segmentation masks."""
from .fusion import PredictionStack, ScaleSchedule, TtaTransform, apply_transform, invert_transform, vote_fuse
from .maskio import read_mask_file, write_mask_file
from .metrics import BoundaryParams, aggregate, boundary_f, evaluate_sequence, extract_boundary, jaccard
from .morphology import StructuringElement, brute_force_dilate, dilate, erode
from .postprocess import GapFillConfig, adjacency_pairs, gap_fill, gap_fill_sequence
from .raster import BinaryMask, LabelMap, ObjectSet, merge_labels, resize_labelmap, split_labels

__version__ = "0.1.0"
