"""Hypothesis scoring, threshold calibration and pruned detection.

The dense reference path scores a hypothesis as

    root_filter . window(p0)
      + sum_i (part_filter_i . window(p_i) - penalty_i(p_i - p0 - anchor_i))
      + bias

with each part placed at the penalty-adjusted argmax inside a bounded
window around its anchor.  The accelerated path replaces every filter
correlation by its CP-separable form and, when pruning is enabled,
accumulates the rank terms largest weight first, abandoning a root
position (or a part window) the moment its running partial score drops
below the calibrated floor for that rank.

Calibration and detection share one partial-score code path
(:func:`cpdetect.correlation.cp_partial_stack`), so a threshold computed
from a positive example compares bit-identically against the same value
during detection; calibration positives can never be falsely pruned.
"""

import time
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator

from .correlation import correlate3_full, cp_multiplications, cp_partial_stack
from .model import decompose_model, require_valid
from .validation import ValidationError, check_feature_map

__all__ = [
    "Hypothesis",
    "Detection",
    "DetectStats",
    "deformation_penalty",
    "score_hypothesis",
    "cp_score_hypothesis",
    "best_part_placement",
    "calibrate_thresholds",
    "detect",
    "dense_detect",
    "CascadePartDetector",
]


@dataclass(frozen=True)
class Hypothesis:
    """A root position plus one position per part on some pyramid level."""

    level: int
    root: tuple
    parts: tuple = ()
    score: float = None

    def __post_init__(self):
        object.__setattr__(self, "root", (int(self.root[0]), int(self.root[1])))
        object.__setattr__(
            self, "parts", tuple((int(y), int(x)) for y, x in self.parts)
        )
        if self.score is not None:
            object.__setattr__(self, "score", float(self.score))


@dataclass(frozen=True)
class Detection:
    """A hypothesis whose score cleared the detection threshold."""

    hypothesis: Hypothesis
    model_id: str
    score: float
    tau: float

    def __post_init__(self):
        if self.score < self.tau:
            raise ValidationError("detection score below its own threshold")


class DetectStats:
    """Work accounting for one detection run.

    ``positions_examined`` counts root hypotheses considered;
    ``positions_pruned_at_rank[r]`` counts those abandoned by the root
    filter's rank-``r`` check.  ``part_pruned_at_rank`` tracks (position,
    part) pairs the part stage pruned.  ``multiplications`` follows the
    counting convention pinned in :mod:`cpdetect.correlation`.
    """

    def __init__(self):
        self.positions_examined = 0
        self.positions_pruned_at_rank = {}
        self.part_pruned_at_rank = {}
        self.positions_killed_by_parts = 0
        self.multiplications = 0
        self.wall_time = 0.0
        self.prune_maps = None

    @property
    def positions_pruned(self):
        return sum(self.positions_pruned_at_rank.values())

    @property
    def positions_surviving(self):
        return self.positions_examined - self.positions_pruned

    def _bump(self, table, rank, count):
        if count:
            table[rank] = table.get(rank, 0) + int(count)

    def as_dict(self):
        return {
            "positions_examined": self.positions_examined,
            "positions_pruned": self.positions_pruned,
            "positions_surviving": self.positions_surviving,
            "positions_pruned_at_rank": {
                str(k): v for k, v in sorted(self.positions_pruned_at_rank.items())
            },
            "part_pruned_at_rank": {
                str(k): v for k, v in sorted(self.part_pruned_at_rank.items())
            },
            "positions_killed_by_parts": self.positions_killed_by_parts,
            "multiplications": self.multiplications,
            "wall_time": self.wall_time,
        }


def deformation_penalty(deformation, dy, dx):
    """Quadratic displacement cost: c_dx*dx + c_dy*dy + c_dxx*dx^2 + c_dyy*dy^2."""
    cdx, cdy, cdxx, cdyy = deformation
    return cdx * dx + cdy * dy + cdxx * dx * dx + cdyy * dy * dy


def _filter_response(level, filt, pos):
    n, m, _ = filt.shape
    y, x = pos
    H, W, _ = level.shape
    if not (0 <= y <= H - n and 0 <= x <= W - m):
        raise ValidationError(f"position {pos} out of support for filter {filt.shape}")
    window = level[y : y + n, x : x + m, :]
    return float(np.einsum("ijk,ijk->", window, filt))


def score_hypothesis(model, level, hypothesis):
    """Exact dense score of a hypothesis; the reference every accelerated
    path is compared against."""
    require_valid(model)
    level = check_feature_map(level, channels=model.channels)
    if len(hypothesis.parts) != len(model.parts):
        raise ValidationError(
            f"hypothesis has {len(hypothesis.parts)} part positions, model has "
            f"{len(model.parts)} parts"
        )
    score = _filter_response(level, model.root, hypothesis.root)
    ry, rx = hypothesis.root
    for part, pos in zip(model.parts, hypothesis.parts):
        dy = pos[0] - ry - part.anchor[0]
        dx = pos[1] - rx - part.anchor[1]
        score += _filter_response(level, part.filter, pos)
        score -= deformation_penalty(part.deformation, dy, dx)
    return score + model.bias


def cp_score_hypothesis(dec, level, hypothesis):
    """Full-rank CP score of a fixed hypothesis (same positions, decomposed
    filters); used for decomposition-error bounds."""
    level = check_feature_map(level, channels=dec.channels)
    stack = cp_partial_stack(level, dec.root_cp)
    ry, rx = hypothesis.root
    score = float(stack[-1, ry, rx])
    for part, pos in zip(dec.parts, hypothesis.parts):
        pstack = cp_partial_stack(level, part.cp)
        dy = pos[0] - ry - part.anchor[0]
        dx = pos[1] - rx - part.anchor[1]
        score += float(pstack[-1, pos[0], pos[1]])
        score -= deformation_penalty(part.deformation, dy, dx)
    return score + dec.bias


def best_part_placement(part, score_map, root_pos):
    """Penalty-adjusted argmax of a part score map inside the search window.

    The window is ``anchor +- search_radius`` around ``root_pos``, clipped
    to the score map support; an empty window is an error.  Ties resolve to
    the smallest ``(dy, dx)`` displacement in lexicographic order.

    Returns ``((y, x), placed_score)``.
    """
    scores = score_map.scores if hasattr(score_map, "scores") else np.asarray(score_map)
    hp, wp = scores.shape
    radius = part.search_radius
    cy = root_pos[0] + part.anchor[0]
    cx = root_pos[1] + part.anchor[1]
    best = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            y, x = cy + dy, cx + dx
            if not (0 <= y < hp and 0 <= x < wp):
                continue
            value = scores[y, x] - deformation_penalty(part.deformation, dy, dx)
            if best is None or value > best[0]:
                best = (value, (y, x))
    if best is None:
        raise ValidationError(
            f"search window around {root_pos} is empty after clipping"
        )
    return best[1], float(best[0])


def _hypothesis_rect(level_shape, root_dims, parts):
    """Root-position rectangle where every part window stays expressible.

    Returns ``(ry0, ry1, rx0, rx1)`` inclusive, or None when no position
    qualifies on this level.
    """
    H, W, _ = level_shape
    n0, m0, _ = root_dims
    h0, w0 = H - n0 + 1, W - m0 + 1
    if h0 < 1 or w0 < 1:
        return None
    ry0, ry1, rx0, rx1 = 0, h0 - 1, 0, w0 - 1
    for part in parts:
        dims = part.cp.dims if hasattr(part, "cp") else part.filter.shape
        sy, sx = H - dims[0] + 1, W - dims[1] + 1
        if sy < 1 or sx < 1:
            return None
        ay, ax = part.anchor
        rad = part.search_radius
        ry0 = max(ry0, -ay - rad)
        ry1 = min(ry1, sy - 1 - ay + rad)
        rx0 = max(rx0, -ax - rad)
        rx1 = min(rx1, sx - 1 - ax + rad)
    if ry0 > ry1 or rx0 > rx1:
        return None
    return ry0, ry1, rx0, rx1


def _check_positive(dec, level, hyp):
    H, W, _ = level.shape
    n0, m0, _ = dec.root_cp.dims
    ry, rx = hyp.root
    if not (0 <= ry <= H - n0 and 0 <= rx <= W - m0):
        raise ValidationError(f"positive root position {hyp.root} out of support")
    if len(hyp.parts) != len(dec.parts):
        raise ValidationError(
            f"positive has {len(hyp.parts)} part positions, model has "
            f"{len(dec.parts)} parts"
        )
    for i, (part, pos) in enumerate(zip(dec.parts, hyp.parts)):
        n, m, _ = part.cp.dims
        if not (0 <= pos[0] <= H - n and 0 <= pos[1] <= W - m):
            raise ValidationError(f"positive part {i} position {pos} out of support")
        dy = pos[0] - ry - part.anchor[0]
        dx = pos[1] - rx - part.anchor[1]
        if max(abs(dy), abs(dx)) > part.search_radius:
            raise ValidationError(
                f"positive part {i} displaced by ({dy}, {dx}), outside its "
                f"search radius {part.search_radius}"
            )


def calibrate_thresholds(dec, positives):
    """Tightest per-rank pruning floors that keep every positive example.

    For each filter and each rank prefix ``i``, the threshold is the
    minimum over positives of the partial correlation through the ``i``
    largest-weight terms at the positive's position.  Returns a new
    :class:`DecomposedModel` with thresholds attached.
    """
    if not positives:
        raise ValidationError("cannot calibrate thresholds from zero positives")
    root_mins = None
    part_mins = [None] * len(dec.parts)
    stack_cache = {}

    def stacks_for(level):
        key = id(level)
        if key not in stack_cache:
            checked = check_feature_map(level, channels=dec.channels)
            stack_cache[key] = (
                cp_partial_stack(checked, dec.root_cp),
                [cp_partial_stack(checked, p.cp) for p in dec.parts],
            )
        return stack_cache[key]

    for level, hyp in positives:
        _check_positive(dec, np.asarray(level), hyp)
        root_stack, part_stacks = stacks_for(level)
        ry, rx = hyp.root
        root_vec = root_stack[:, ry, rx]
        root_mins = root_vec.copy() if root_mins is None else np.minimum(root_mins, root_vec)
        for i, (pstack, pos) in enumerate(zip(part_stacks, hyp.parts)):
            vec = pstack[:, pos[0], pos[1]]
            part_mins[i] = vec.copy() if part_mins[i] is None else np.minimum(part_mins[i], vec)

    parts = tuple(
        replace(part, thresholds=mins) for part, mins in zip(dec.parts, part_mins)
    )
    return replace(dec, parts=parts, root_thresholds=root_mins)


def _dilate_any(mask, radius):
    """Box dilation of a boolean grid via integral-image window sums.

    The result lives on a grid extended by ``radius`` on every side, so
    query points slightly outside the original grid resolve too.
    """
    width = 2 * radius + 1
    ext = np.pad(mask.astype(np.int64), 2 * radius)
    integral = np.pad(ext.cumsum(axis=0).cumsum(axis=1), ((1, 0), (1, 0)))
    sums = (
        integral[width:, width:]
        - integral[:-width, width:]
        - integral[width:, :-width]
        + integral[:-width, :-width]
    )
    return sums > 0


def _placement_grid(final_map, part, rect):
    """Vectorized :func:`best_part_placement` over a root-position rectangle.

    Exploits the separability of the quadratic penalty (no dy*dx cross
    term): a max over dx per row band, then a max over dy.  Strict-greater
    updates in ascending offset order reproduce the scalar routine's
    smallest-(dy, dx) lexicographic tie-break.  Returns ``(placed_score,
    pos_y, pos_x)`` arrays shaped like the rectangle; scores can differ
    from the scalar path by one rounding step since the penalty is
    subtracted in two stages.
    """
    ry0, ry1, rx0, rx1 = rect
    hr, wr = ry1 - ry0 + 1, rx1 - rx0 + 1
    radius = part.search_radius
    ay, ax = part.anchor
    cdx, cdy, cdxx, cdyy = part.deformation
    padded = np.pad(final_map, 2 * radius, constant_values=-np.inf)
    # row band covering every window row reachable from the rectangle
    band_h = hr + 2 * radius
    oy = ry0 + ay + radius  # padded row of dy = -radius for the first rect row
    ox = rx0 + ax + 2 * radius  # padded column of dx = 0

    best_x = None
    best_dx = None
    for dx in range(-radius, radius + 1):
        cand = padded[oy : oy + band_h, ox + dx : ox + dx + wr] - (
            cdx * dx + cdxx * dx * dx
        )
        if best_x is None:
            best_x = cand
            best_dx = np.full((band_h, wr), dx, dtype=np.int64)
        else:
            better = cand > best_x
            best_x = np.where(better, cand, best_x)
            best_dx = np.where(better, dx, best_dx)

    placed = None
    win_dy = None
    win_dx = None
    for dy in range(-radius, radius + 1):
        row = dy + radius
        cand = best_x[row : row + hr] - (cdy * dy + cdyy * dy * dy)
        if placed is None:
            placed = cand
            win_dy = np.full((hr, wr), dy, dtype=np.int64)
            win_dx = best_dx[row : row + hr].copy()
        else:
            better = cand > placed
            placed = np.where(better, cand, placed)
            win_dy = np.where(better, dy, win_dy)
            win_dx = np.where(better, best_dx[row : row + hr], win_dx)
    pos_y = np.arange(ry0, ry1 + 1)[:, np.newaxis] + ay + win_dy
    pos_x = np.arange(rx0, rx1 + 1)[np.newaxis, :] + ax + win_dx
    return placed, pos_y, pos_x


def _require_pyramid(pyramid, channels):
    levels = []
    for idx, level in enumerate(pyramid):
        try:
            levels.append(check_feature_map(level, channels=channels))
        except ValidationError as exc:
            raise ValidationError(f"pyramid level {idx}: {exc}") from exc
    return levels


def detect(
    dec,
    pyramid,
    tau,
    pruning=False,
    part_prune_mode="kill",
    model_id="model",
    collect_maps=False,
):
    """Run the decomposed detector over a feature pyramid.

    With ``pruning=False`` every filter is applied at full rank over the
    whole level (results match the dense reference on the reconstructed
    filters); with ``pruning=True`` the calibrated per-rank floors shorten
    the accumulation.  A root position dies the moment its running root
    partial drops below the floor; a part whose window-max running partial
    drops below its floor kills the hypothesis (``part_prune_mode="kill"``)
    or simply contributes nothing (``"lenient"``).

    Returns ``(detections, stats)``; detections are sorted by (level, y, x).
    """
    if part_prune_mode not in ("kill", "lenient"):
        raise ValidationError(f"unknown part_prune_mode {part_prune_mode!r}")
    if pruning and not dec.calibrated:
        raise ValidationError("pruning requires calibrated thresholds")
    levels = _require_pyramid(pyramid, dec.channels)
    start = time.perf_counter()
    stats = DetectStats()
    if collect_maps:
        stats.prune_maps = []
    detections = []

    for level_idx, level in enumerate(levels):
        rect = _hypothesis_rect(level.shape, dec.root_cp.dims, dec.parts)
        level_maps = {"rect": rect} if collect_maps else None
        if collect_maps:
            stats.prune_maps.append(level_maps)
        if rect is None:
            continue
        ry0, ry1, rx0, rx1 = rect
        hr, wr = ry1 - ry0 + 1, rx1 - rx0 + 1
        stats.positions_examined += hr * wr

        n0, m0, l0 = dec.root_cp.dims
        root_stack = cp_partial_stack(level, dec.root_cp)
        root_rect = root_stack[:, ry0 : ry1 + 1, rx0 : rx1 + 1]
        alive = np.ones((hr, wr), dtype=bool)
        if pruning:
            prune_rank = np.zeros((hr, wr), dtype=np.int64)
            per_rank_cost = n0 + m0 + l0
            for r in range(dec.root_cp.rank):
                stats.multiplications += int(alive.sum()) * per_rank_cost
                newly = alive & (root_rect[r] < dec.root_thresholds[r])
                if newly.any():
                    stats._bump(stats.positions_pruned_at_rank, r + 1, newly.sum())
                    prune_rank[newly] = r + 1
                    alive &= ~newly
            if collect_maps:
                level_maps["root_prune_rank"] = prune_rank
        else:
            stats.multiplications += cp_multiplications(
                level.shape, dec.root_cp.dims, dec.root_cp.rank
            )
        scores = root_rect[-1].copy()

        part_prune_rank = (
            np.zeros((len(dec.parts), hr, wr), dtype=np.int64) if collect_maps else None
        )
        part_placements = []
        for part_idx, part in enumerate(dec.parts):
            if pruning and part_prune_mode == "kill" and not alive.any():
                break  # every hypothesis on this level is already dead
            dims = part.cp.dims
            pstack = cp_partial_stack(level, part.cp)
            if pruning:
                radius = part.search_radius
                width = 2 * radius + 1
                ay, ax = part.anchor
                per_rank_cost = dims[0] + dims[1] + dims[2]
                sy = level.shape[0] - dims[0] + 1
                sx = level.shape[1] - dims[1] + 1
                padded_stack = np.pad(
                    pstack,
                    ((0, 0), (2 * radius,) * 2, (2 * radius,) * 2),
                    constant_values=-np.inf,
                )
                part_alive = alive.copy()
                alive_iy = alive_ix = None
                covered_count = None
                for r in range(part.cp.rank):
                    if alive_iy is None:
                        alive_iy, alive_ix = np.nonzero(part_alive)
                        # work attributed per rank: the union of the alive
                        # positions' search windows, clipped to part support
                        covered = _dilate_any(part_alive, radius)
                        covered_count = _covered_count(
                            covered, rect, (ay, ax), radius, (sy, sx)
                        )
                    if alive_iy.size == 0:
                        break
                    stats.multiplications += covered_count * per_rank_cost
                    windows = sliding_window_view(padded_stack[r], (width, width))
                    gathered = windows[
                        ry0 + alive_iy + ay + radius, rx0 + alive_ix + ax + radius
                    ]
                    below = gathered.max(axis=(1, 2)) < part.thresholds[r]
                    if below.any():
                        newly = np.zeros_like(part_alive)
                        newly[alive_iy[below], alive_ix[below]] = True
                        stats._bump(stats.part_pruned_at_rank, r + 1, below.sum())
                        if collect_maps:
                            part_prune_rank[part_idx][newly] = r + 1
                        part_alive &= ~newly
                        alive_iy = alive_ix = None  # alive set changed
                        if part_prune_mode == "kill":
                            killed = alive & newly
                            stats.positions_killed_by_parts += int(killed.sum())
                            alive &= ~newly
            else:
                part_alive = alive
                stats.multiplications += cp_multiplications(
                    level.shape, dims, part.cp.rank
                )
            placed, pos_y, pos_x = _placement_grid(pstack[-1], part, rect)
            part_placements.append((part_alive, placed, pos_y, pos_x, part.anchor))
            if part_prune_mode == "lenient":
                contribution = np.where(part_alive, placed, 0.0)
            else:
                contribution = placed
            scores = scores + contribution
        if collect_maps:
            level_maps["part_prune_rank"] = part_prune_rank

        scores = scores + dec.bias
        hit = alive & (scores >= tau)
        for iy, ix in zip(*np.nonzero(hit)):
            gy, gx = ry0 + iy, rx0 + ix
            parts_pos = []
            for part_alive, placed, pos_y, pos_x, anchor in part_placements:
                if part_prune_mode == "lenient" and not part_alive[iy, ix]:
                    # pruned part contributes nothing; report its window center
                    parts_pos.append((gy + anchor[0], gx + anchor[1]))
                else:
                    parts_pos.append((pos_y[iy, ix], pos_x[iy, ix]))
            hyp = Hypothesis(
                level=level_idx,
                root=(gy, gx),
                parts=tuple(parts_pos),
                score=float(scores[iy, ix]),
            )
            detections.append(
                Detection(hyp, model_id=model_id, score=float(scores[iy, ix]), tau=tau)
            )

    detections.sort(key=lambda d: (d.hypothesis.level, d.hypothesis.root))
    stats.wall_time = time.perf_counter() - start
    return detections, stats


def _covered_count(covered, rect, anchor, radius, part_support):
    """Number of part-map positions inside the union of search windows.

    ``covered`` is the dilated alive grid on the extended rectangle
    ``[ry0 - r, ry1 + r] x [rx0 - r, rx1 + r]``; a part position ``p`` is
    covered when ``covered[p - anchor]`` is set and ``p`` lies in the
    part's valid support.
    """
    ry0, ry1, rx0, rx1 = rect
    ay, ax = anchor
    sy, sx = part_support
    # part positions reachable from the rectangle
    py0 = max(0, ry0 + ay - radius)
    py1 = min(sy - 1, ry1 + ay + radius)
    px0 = max(0, rx0 + ax - radius)
    px1 = min(sx - 1, rx1 + ax + radius)
    if py0 > py1 or px0 > px1:
        return 0
    # covered grid starts at gamma = (ry0 - radius, rx0 - radius)
    oy = py0 - ay - (ry0 - radius)
    ox = px0 - ax - (rx0 - radius)
    region = covered[oy : oy + (py1 - py0 + 1), ox : ox + (px1 - px0 + 1)]
    return int(region.sum())


def dense_detect(model, pyramid, tau, model_id="model"):
    """Reference detector using the original dense filters.

    Same hypothesis rectangle and placement rules as :func:`detect`;
    counters follow the dense closed form.
    """
    require_valid(model)
    levels = _require_pyramid(pyramid, model.channels)
    start = time.perf_counter()
    stats = DetectStats()
    detections = []
    for level_idx, level in enumerate(levels):
        rect = _hypothesis_rect(level.shape, model.root.shape, model.parts)
        if rect is None:
            continue
        ry0, ry1, rx0, rx1 = rect
        hr, wr = ry1 - ry0 + 1, rx1 - rx0 + 1
        stats.positions_examined += hr * wr
        root_map = correlate3_full(level, model.root)
        stats.multiplications += root_map.multiplications
        scores = root_map.scores[ry0 : ry1 + 1, rx0 : rx1 + 1].copy()
        placements = []
        for part in model.parts:
            part_map = correlate3_full(level, part.filter)
            stats.multiplications += part_map.multiplications
            placed, pos_y, pos_x = _placement_grid(part_map.scores, part, rect)
            placements.append((placed, pos_y, pos_x))
            scores = scores + placed
        scores = scores + model.bias
        hit = scores >= tau
        for iy, ix in zip(*np.nonzero(hit)):
            gy, gx = ry0 + iy, rx0 + ix
            parts_pos = tuple(
                (pos_y[iy, ix], pos_x[iy, ix]) for _, pos_y, pos_x in placements
            )
            hyp = Hypothesis(
                level=level_idx,
                root=(gy, gx),
                parts=parts_pos,
                score=float(scores[iy, ix]),
            )
            detections.append(
                Detection(hyp, model_id=model_id, score=float(scores[iy, ix]), tau=tau)
            )
    detections.sort(key=lambda d: (d.hypothesis.level, d.hypothesis.root))
    stats.wall_time = time.perf_counter() - start
    return detections, stats


class CascadePartDetector(BaseEstimator):
    """Estimator facade over decompose -> calibrate -> detect.

    ``fit(positives)`` decomposes the dense model at the configured ranks
    and calibrates pruning thresholds from the positive examples (pairs of
    feature map and :class:`Hypothesis`); with ``pruning=False`` positives
    may be omitted.  ``predict(pyramid)`` returns the detections and stores
    run statistics on ``stats_``.
    """

    def __init__(
        self,
        model=None,
        ranks=6,
        select_e=None,
        criterion="scaled",
        tau=0.0,
        pruning=True,
        part_prune_mode="kill",
        max_iterations=200,
        tolerance=1e-6,
        restarts=5,
        seed=0,
        model_id="model",
    ):
        self.model = model
        self.ranks = ranks
        self.select_e = select_e
        self.criterion = criterion
        self.tau = tau
        self.pruning = pruning
        self.part_prune_mode = part_prune_mode
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.restarts = restarts
        self.seed = seed
        self.model_id = model_id

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValidationError("CascadePartDetector needs model= to fit")
        from .decomposition import AlsOptions

        opts = AlsOptions(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            restarts=self.restarts,
            seed=self.seed,
        )
        ranks = None if self.select_e is not None else self.ranks
        dec = decompose_model(
            self.model,
            ranks=ranks,
            select_e=self.select_e,
            opts=opts,
            criterion=self.criterion,
        )
        if X:
            dec = calibrate_thresholds(dec, X)
        elif self.pruning:
            raise ValidationError("pruning=True requires positive examples to fit")
        self.decomposed_model_ = dec
        return self

    def predict(self, pyramid):
        if not hasattr(self, "decomposed_model_"):
            raise ValidationError("CascadePartDetector is not fitted yet")
        detections, stats = detect(
            self.decomposed_model_,
            pyramid,
            self.tau,
            pruning=self.pruning,
            part_prune_mode=self.part_prune_mode,
            model_id=self.model_id,
        )
        self.stats_ = stats
        return detections
