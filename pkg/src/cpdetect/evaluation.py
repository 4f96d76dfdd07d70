"""Detection-quality evaluation: greedy NMS, truth matching, ROC sweeps.

Detection happens once per scene at the lowest threshold of interest;
non-maximum suppression runs once on that full list and the threshold grid
is swept over the suppressed output.  Sweeping after NMS makes the curves
monotone by construction: raising the threshold can only drop detections.
"""

from dataclasses import dataclass

from .detection import dense_detect, detect
from .model import DecomposedModel, PartModel
from .validation import ValidationError

__all__ = ["RocPoint", "nms", "match_detections", "roc_eval"]


@dataclass(frozen=True)
class RocPoint:
    """Operating point of a detector at threshold ``tau``.

    False positives are reported both per scene and per examined window;
    misdetection rate is the fraction of planted objects left unmatched.
    """

    tau: float
    misdetection_rate: float
    false_positives_per_scene: float
    false_positives_per_window: float


def _root_box(detection, root_dims):
    y, x = detection.hypothesis.root
    return y, x, y + root_dims[0], x + root_dims[1]


def _iou(box_a, box_b):
    ay0, ax0, ay1, ax1 = box_a
    by0, bx0, by1, bx1 = box_b
    iy = max(0, min(ay1, by1) - max(ay0, by0))
    ix = max(0, min(ax1, bx1) - max(ax0, bx0))
    inter = iy * ix
    union = (ay1 - ay0) * (ax1 - ax0) + (by1 - by0) * (bx1 - bx0) - inter
    return inter / union if union else 0.0


def nms(detections, root_dims, iou_threshold=0.5):
    """Greedy overlap suppression on root boxes, strongest score first.

    Only detections on the same pyramid level compete.  Ties in score break
    deterministically by (level, y, x).
    """
    ordered = sorted(
        detections,
        key=lambda d: (-d.score, d.hypothesis.level, d.hypothesis.root),
    )
    kept = []
    for cand in ordered:
        box = _root_box(cand, root_dims)
        suppressed = any(
            k.hypothesis.level == cand.hypothesis.level
            and _iou(box, _root_box(k, root_dims)) >= iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(cand)
    kept.sort(key=lambda d: (d.hypothesis.level, d.hypothesis.root))
    return kept


def match_detections(detections, truths, radius=1):
    """Greedily match detections to ground-truth hypotheses.

    A detection matches an unclaimed truth on the same level whose root
    position is within ``radius`` in Chebyshev distance; stronger
    detections claim first.  Returns ``(matched_truth_count,
    false_positive_count)``.
    """
    claimed = [False] * len(truths)
    false_positives = 0
    ordered = sorted(
        detections,
        key=lambda d: (-d.score, d.hypothesis.level, d.hypothesis.root),
    )
    for det in ordered:
        dy, dx = det.hypothesis.root
        level = det.hypothesis.level
        hit = None
        for idx, (t_level, t_hyp) in enumerate(truths):
            if claimed[idx] or t_level != level:
                continue
            if max(abs(t_hyp.root[0] - dy), abs(t_hyp.root[1] - dx)) <= radius:
                hit = idx
                break
        if hit is None:
            false_positives += 1
        else:
            claimed[hit] = True
    return sum(claimed), false_positives


def roc_eval(
    model,
    scenes,
    taus,
    match_radius=1,
    pruning=False,
    nms_iou=0.5,
    part_prune_mode="kill",
):
    """Sweep detection thresholds over synthetic scenes.

    ``model`` may be a dense :class:`PartModel` (reference path) or a
    :class:`DecomposedModel`.  Returns one :class:`RocPoint` per threshold,
    sorted ascending.
    """
    taus = sorted(float(t) for t in taus)
    if not taus:
        raise ValidationError("tau grid must not be empty")
    if isinstance(model, PartModel):
        root_dims = model.root.shape
        runner = lambda pyramid, tau: dense_detect(model, pyramid, tau)
    elif isinstance(model, DecomposedModel):
        root_dims = model.root_cp.dims
        runner = lambda pyramid, tau: detect(
            model, pyramid, tau, pruning=pruning, part_prune_mode=part_prune_mode
        )
    else:
        raise ValidationError(f"unsupported model type {type(model).__name__}")

    base_tau = taus[0]
    per_scene = []
    total_truths = 0
    total_windows = 0
    for scene in scenes:
        detections, stats = runner(scene.pyramid, base_tau)
        per_scene.append((nms(detections, root_dims, nms_iou), scene.planted))
        total_truths += len(scene.planted)
        total_windows += stats.positions_examined

    points = []
    n_scenes = max(1, len(per_scene))
    for tau in taus:
        matched = 0
        false_positives = 0
        for kept, truths in per_scene:
            surviving = [d for d in kept if d.score >= tau]
            got, fp = match_detections(surviving, truths, match_radius)
            matched += got
            false_positives += fp
        miss_rate = 1.0 - matched / total_truths if total_truths else 0.0
        points.append(
            RocPoint(
                tau=tau,
                misdetection_rate=miss_rate,
                false_positives_per_scene=false_positives / n_scenes,
                false_positives_per_window=(
                    false_positives / total_windows if total_windows else 0.0
                ),
            )
        )
    return points
