"""Accelerated part-based sliding-window detection.

Filters of a star-structured part model are replaced by low-rank CP
decompositions so correlations reduce to sums of cheap 1-D passes, and
per-rank calibrated thresholds prune unpromising positions early.
"""

from .bench import bench
from .correlation import (
    ScoreMap,
    correlate3_cp,
    correlate3_full,
    cp_partial_stack,
    measured_gain,
    save_score_map,
    theoretical_gain,
)
from .decomposition import (
    AlsOptions,
    RankSelection,
    CPDecomposition,
    CPModel,
    cp_als,
    kruskal_uniqueness_holds,
    rank_scan,
    reconstruct,
    select_rank,
)
from .detection import (
    CascadePartDetector,
    cp_score_hypothesis,
    Detection,
    DetectStats,
    Hypothesis,
    best_part_placement,
    calibrate_thresholds,
    dense_detect,
    detect,
    score_hypothesis,
)
from .evaluation import RocPoint, nms, roc_eval
from .features import extract_features
from .model import (
    DecomposedModel,
    DecomposedPart,
    PartModel,
    PartSpec,
    decompose_model,
    filter_payload_bytes,
    load_model,
    memory_gain,
    save_model,
    validate,
)
from .synthetic import SyntheticScene, gen_model, gen_scene, load_scene, save_scene
from .tensor import frobenius_norm, khatri_rao, load_t3f, outer3, save_t3f, unfold
from .validation import CpdetectError, FormatError, NumericError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "AlsOptions",
    "CPDecomposition",
    "CPModel",
    "CascadePartDetector",
    "CpdetectError",
    "DecomposedModel",
    "DecomposedPart",
    "Detection",
    "DetectStats",
    "FormatError",
    "Hypothesis",
    "NumericError",
    "PartModel",
    "PartSpec",
    "RocPoint",
    "ScoreMap",
    "SyntheticScene",
    "ValidationError",
    "RankSelection",
    "bench",
    "best_part_placement",
    "calibrate_thresholds",
    "correlate3_cp",
    "cp_score_hypothesis",
    "correlate3_full",
    "cp_als",
    "cp_partial_stack",
    "decompose_model",
    "dense_detect",
    "detect",
    "extract_features",
    "filter_payload_bytes",
    "frobenius_norm",
    "gen_model",
    "gen_scene",
    "khatri_rao",
    "kruskal_uniqueness_holds",
    "load_model",
    "load_scene",
    "load_t3f",
    "measured_gain",
    "memory_gain",
    "nms",
    "outer3",
    "rank_scan",
    "reconstruct",
    "roc_eval",
    "save_model",
    "save_score_map",
    "save_scene",
    "save_t3f",
    "score_hypothesis",
    "select_rank",
    "theoretical_gain",
    "unfold",
    "validate",
]
