import numpy as np
import pytest
from sklearn.base import clone

from cpdetect.correlation import correlate3_full, cp_partial_stack
from cpdetect.decomposition import AlsOptions
from cpdetect.detection import (
    CascadePartDetector,
    Hypothesis,
    best_part_placement,
    calibrate_thresholds,
    cp_score_hypothesis,
    deformation_penalty,
    dense_detect,
    detect,
    score_hypothesis,
)
from cpdetect.model import PartModel, PartSpec, decompose_model
from cpdetect.validation import ValidationError

from conftest import compact_model, compact_scene, sliding_window_norms

FAST = AlsOptions(max_iterations=100, restarts=1, seed=0)


def score_oracle(model, level, hyp):
    """From-scratch reimplementation of the scoring formula with raw loops."""
    n0, m0, L = model.root.shape
    ry, rx = hyp.root
    total = 0.0
    for i in range(n0):
        for j in range(m0):
            for k in range(L):
                total += model.root[i, j, k] * level[ry + i, rx + j, k]
    for part, (py, px) in zip(model.parts, hyp.parts):
        n, m, _ = part.filter.shape
        for i in range(n):
            for j in range(m):
                for k in range(L):
                    total += part.filter[i, j, k] * level[py + i, px + j, k]
        dy = py - ry - part.anchor[0]
        dx = px - rx - part.anchor[1]
        cdx, cdy, cdxx, cdyy = part.deformation
        total -= cdx * dx + cdy * dy + cdxx * dx * dx + cdyy * dy * dy
    return total + model.bias


def calibrated_small_setup(seed=0, low_rank=2, ranks=2, **scene_kw):
    model = compact_model(seed=seed, low_rank=low_rank)
    scene = compact_scene(model, seed=seed + 1, **scene_kw)
    dec = decompose_model(model, ranks=ranks, opts=FAST)
    positives = [(scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted]
    return model, scene, calibrate_thresholds(dec, positives), positives


def test_score_hypothesis_root_only():
    rng = np.random.default_rng(0)
    root = rng.normal(size=(2, 3, 4))
    model = PartModel(root=root, bias=0.5)
    level = rng.normal(size=(6, 7, 4))
    hyp = Hypothesis(level=0, root=(2, 1))
    expected = correlate3_full(level, root).scores[2, 1] + 0.5
    assert score_hypothesis(model, level, hyp) == pytest.approx(expected, rel=1e-12)


def test_score_hypothesis_zero_displacement_no_penalty():
    model = compact_model(seed=1, low_rank=1)
    scene = compact_scene(model, seed=2, n_objects=1, noise=0.0,
                          level_shapes=((30, 34),))
    level = scene.pyramid[0]
    _, hyp = scene.planted[0]
    anchored = Hypothesis(
        level=0,
        root=hyp.root,
        parts=tuple(
            (hyp.root[0] + p.anchor[0], hyp.root[1] + p.anchor[1])
            for p in model.parts
        ),
    )
    with_penalties = score_hypothesis(model, level, anchored)
    no_penalty_model = PartModel(
        root=model.root,
        parts=tuple(
            PartSpec(p.filter, p.anchor, (0.0, 0.0, 0.0, 0.0), p.search_radius)
            for p in model.parts
        ),
        bias=model.bias,
    )
    assert with_penalties == pytest.approx(
        score_hypothesis(no_penalty_model, level, anchored), rel=1e-12
    )


def test_score_hypothesis_matches_loop_oracle():
    rng = np.random.default_rng(3)
    model = compact_model(seed=4, low_rank=None)
    level = rng.normal(size=(22, 32, 6))
    hyp = Hypothesis(level=0, root=(8, 6), parts=((4, 3), (2, 11)))
    assert score_hypothesis(model, level, hyp) == pytest.approx(
        score_oracle(model, level, hyp), rel=1e-10
    )


def test_score_hypothesis_rejects_out_of_support():
    model = compact_model(seed=5)
    level = np.zeros((20, 20, 6))
    with pytest.raises(ValidationError, match="support"):
        score_hypothesis(model, level, Hypothesis(0, (19, 0), ((0, 0), (0, 0))))


def make_part(deformation, radius=2, anchor=(0, 0)):
    return PartSpec(
        filter=np.zeros((2, 2, 3)),
        anchor=anchor,
        deformation=deformation,
        search_radius=radius,
    )


def test_best_part_placement_zero_coeffs_is_window_argmax():
    rng = np.random.default_rng(6)
    scores = rng.normal(size=(9, 9))
    part = make_part((0.0, 0.0, 0.0, 0.0), radius=2)
    pos, val = best_part_placement(part, scores, (4, 4))
    window = scores[2:7, 2:7]
    assert val == window.max()
    assert scores[pos] == window.max()


def test_best_part_placement_huge_quadratic_sticks_to_anchor():
    rng = np.random.default_rng(7)
    scores = rng.normal(size=(9, 9))
    part = make_part((0.0, 0.0, 1e9, 1e9), radius=3)
    pos, _ = best_part_placement(part, scores, (4, 4))
    assert pos == (4, 4)


def test_best_part_placement_matches_window_scan_oracle():
    rng = np.random.default_rng(8)
    scores = rng.normal(size=(15, 15))
    part = make_part((0.1, 0.1, 0.05, 0.05), radius=4, anchor=(1, -1))
    for root in [(5, 6), (0, 0), (10, 12)]:
        pos, val = best_part_placement(part, scores, root)
        best = None
        cy, cx = root[0] + 1, root[1] - 1
        for dy in range(-4, 5):
            for dx in range(-4, 5):
                y, x = cy + dy, cx + dx
                if not (0 <= y < 15 and 0 <= x < 15):
                    continue
                v = scores[y, x] - deformation_penalty(part.deformation, dy, dx)
                if best is None or v > best[0]:
                    best = (v, (y, x))
        assert val == best[0] and pos == best[1]


def test_best_part_placement_tie_breaks_lexicographically():
    part = make_part((0.0, 0.0, 0.0, 0.0), radius=1)
    pos, val = best_part_placement(part, np.zeros((5, 5)), (2, 2))
    assert val == 0.0 and pos == (1, 1)  # smallest (dy, dx) = (-1, -1)


def test_best_part_placement_empty_window_errors():
    part = make_part((0.0, 0.0, 0.0, 0.0), radius=1, anchor=(10, 10))
    with pytest.raises(ValidationError, match="empty"):
        best_part_placement(part, np.zeros((5, 5)), (0, 0))


def test_calibrate_single_positive_thresholds_are_its_partials():
    model, scene, cal, positives = (None,) * 4
    model = compact_model(seed=9, low_rank=2)
    scene = compact_scene(model, seed=10, n_objects=1, level_shapes=((30, 34),))
    dec = decompose_model(model, ranks=2, opts=FAST)
    level, hyp = scene.pyramid[0], scene.planted[0][1]
    cal = calibrate_thresholds(dec, [(level, hyp)])
    root_stack = cp_partial_stack(level, dec.root_cp)
    np.testing.assert_array_equal(
        cal.root_thresholds, root_stack[:, hyp.root[0], hyp.root[1]]
    )
    for part, cal_part, pos in zip(dec.parts, cal.parts, hyp.parts):
        stack = cp_partial_stack(level, part.cp)
        np.testing.assert_array_equal(cal_part.thresholds, stack[:, pos[0], pos[1]])


def test_calibrate_duplicated_positives_identical_thresholds():
    model = compact_model(seed=11, low_rank=2)
    scene = compact_scene(model, seed=12, n_objects=2, level_shapes=((30, 34),))
    dec = decompose_model(model, ranks=2, opts=FAST)
    positives = [(scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted]
    once = calibrate_thresholds(dec, positives)
    twice = calibrate_thresholds(dec, positives + positives)
    np.testing.assert_array_equal(once.root_thresholds, twice.root_thresholds)
    for a, b in zip(once.parts, twice.parts):
        np.testing.assert_array_equal(a.thresholds, b.thresholds)


def test_calibrate_many_positives_match_bruteforce_minimum():
    model = compact_model(seed=13, low_rank=2)
    scenes = [
        compact_scene(model, seed=s, n_objects=2, level_shapes=((30, 34),))
        for s in range(14, 24)
    ]
    positives = [
        (scene.pyramid[lvl], hyp) for scene in scenes for lvl, hyp in scene.planted
    ]
    assert len(positives) >= 20
    dec = decompose_model(model, ranks=2, opts=FAST)
    cal = calibrate_thresholds(dec, positives)
    # brute force: recompute every partial sum independently and take mins
    expected_root = np.full(2, np.inf)
    expected_parts = [np.full(2, np.inf) for _ in dec.parts]
    for level, hyp in positives:
        stack = cp_partial_stack(level, dec.root_cp)
        expected_root = np.minimum(expected_root, stack[:, hyp.root[0], hyp.root[1]])
        for i, part in enumerate(dec.parts):
            pstack = cp_partial_stack(level, part.cp)
            expected_parts[i] = np.minimum(
                expected_parts[i], pstack[:, hyp.parts[i][0], hyp.parts[i][1]]
            )
    np.testing.assert_array_equal(cal.root_thresholds, expected_root)
    for part, expected in zip(cal.parts, expected_parts):
        np.testing.assert_array_equal(part.thresholds, expected)


def test_calibrate_empty_positives_errors():
    dec = decompose_model(compact_model(seed=25), ranks=1, opts=FAST)
    with pytest.raises(ValidationError, match="zero positives"):
        calibrate_thresholds(dec, [])


def test_calibrate_rejects_out_of_window_positive():
    model = compact_model(seed=26, low_rank=2)
    scene = compact_scene(model, seed=27, n_objects=1, level_shapes=((30, 34),))
    dec = decompose_model(model, ranks=2, opts=FAST)
    level, hyp = scene.pyramid[0], scene.planted[0][1]
    bad_parts = tuple((y + 10, x) for y, x in hyp.parts)
    bad = Hypothesis(level=0, root=hyp.root, parts=bad_parts)
    with pytest.raises(ValidationError, match="search radius|support"):
        calibrate_thresholds(dec, [(level, bad)])


def test_detect_pruning_off_equals_dense_reference():
    model = compact_model(seed=28, low_rank=2)
    scene = compact_scene(model, seed=29, n_objects=2)
    # filters are exactly rank 2; a tight tolerance makes the
    # decomposition lossless to near machine precision
    exact = AlsOptions(max_iterations=300, tolerance=1e-12, restarts=1, seed=0)
    dec = decompose_model(model, ranks=2, opts=exact)
    tau = min(h.score for _, h in scene.planted) - 1.0
    dense_dets, _ = dense_detect(model, scene.pyramid, tau)
    cp_dets, _ = detect(dec, scene.pyramid, tau, pruning=False)
    assert [(d.hypothesis.level, d.hypothesis.root) for d in dense_dets] == [
        (d.hypothesis.level, d.hypothesis.root) for d in cp_dets
    ]
    for a, b in zip(dense_dets, cp_dets):
        assert a.score == pytest.approx(b.score, abs=1e-6)
        assert a.hypothesis.parts == b.hypothesis.parts


def test_detect_pruning_off_equals_dense_on_reconstructed_filters():
    # holds for lossy decompositions too: both paths score the same
    # (reconstructed) filters, only the evaluation route differs
    from cpdetect.decomposition import reconstruct

    model = compact_model(seed=52, low_rank=None)
    scene = compact_scene(model, seed=53, n_objects=1, level_shapes=((24, 28),))
    dec = decompose_model(model, ranks=2, opts=FAST)  # far from exact
    recon_model = PartModel(
        root=reconstruct(dec.root_cp),
        parts=tuple(
            PartSpec(reconstruct(p.cp), p.anchor, p.deformation, p.search_radius)
            for p in dec.parts
        ),
        bias=model.bias,
    )
    tau = -1e6
    dense_dets, _ = dense_detect(recon_model, scene.pyramid, tau)
    cp_dets, _ = detect(dec, scene.pyramid, tau, pruning=False)
    assert len(dense_dets) == len(cp_dets)
    for a, b in zip(dense_dets, cp_dets):
        assert a.hypothesis.root == b.hypothesis.root
        assert a.score == pytest.approx(b.score, abs=1e-6)


def test_dense_detect_matches_scalar_reference_scorers():
    model = compact_model(seed=30, low_rank=None)
    scene = compact_scene(model, seed=31, n_objects=1, level_shapes=((24, 28),))
    tau = -np.inf
    detections, _ = dense_detect(model, scene.pyramid, tau)
    level = scene.pyramid[0]
    part_maps = [correlate3_full(level, p.filter).scores for p in model.parts]
    by_pos = {d.hypothesis.root: d for d in detections}
    roots = sorted(by_pos)
    for root in (roots[0], roots[len(roots) // 2], roots[-1]):
        placements = [
            best_part_placement(part, pmap, root)
            for part, pmap in zip(model.parts, part_maps)
        ]
        hyp = Hypothesis(0, root, tuple(pos for pos, _ in placements))
        expected = score_hypothesis(model, level, hyp)
        det = by_pos[root]
        assert det.score == pytest.approx(expected, rel=1e-9)
        assert det.hypothesis.parts == hyp.parts


def test_detect_zero_false_pruning_on_calibration_set():
    model, scene, cal, positives = calibrated_small_setup(seed=32)
    tau = np.inf  # detections irrelevant; only pruning bookkeeping matters
    _, stats = detect(cal, scene.pyramid, tau, pruning=True, collect_maps=True)
    for lvl, hyp in scene.planted:
        maps = stats.prune_maps[lvl]
        ry0, _, rx0, _ = maps["rect"]
        iy, ix = hyp.root[0] - ry0, hyp.root[1] - rx0
        assert maps["root_prune_rank"][iy, ix] == 0
        assert (maps["part_prune_rank"][:, iy, ix] == 0).all()


def test_detect_pruned_subset_and_unpruned_scores_identical():
    model, scene, cal, _ = calibrated_small_setup(seed=33, n_objects=2)
    tau = min(h.score for _, h in scene.planted) - 20.0
    off_dets, off_stats = detect(cal, scene.pyramid, tau, pruning=False)
    on_dets, on_stats = detect(cal, scene.pyramid, tau, pruning=True,
                               collect_maps=True)
    off_index = {
        (d.hypothesis.level, d.hypothesis.root): d.score for d in off_dets
    }
    on_index = {
        (d.hypothesis.level, d.hypothesis.root): d.score for d in on_dets
    }
    assert set(on_index) <= set(off_index)
    for key, score in on_index.items():
        # survivors accumulate the identical full-rank sums
        assert score == off_index[key]
    assert on_stats.multiplications <= off_stats.multiplications


def test_detect_pruning_soundness_exhaustive():
    model, scene, cal, _ = calibrated_small_setup(
        seed=34, n_objects=1, level_shapes=((28, 30),)
    )
    _, stats = detect(cal, scene.pyramid, np.inf, pruning=True, collect_maps=True)
    level = scene.pyramid[0]
    maps = stats.prune_maps[0]
    ry0, ry1, rx0, rx1 = maps["rect"]
    stack = cp_partial_stack(level, cal.root_cp)
    prune_rank = maps["root_prune_rank"]
    for iy in range(ry1 - ry0 + 1):
        for ix in range(rx1 - rx0 + 1):
            expected = 0
            for r in range(cal.root_cp.rank):
                if stack[r, ry0 + iy, rx0 + ix] < cal.root_thresholds[r]:
                    expected = r + 1
                    break
            assert prune_rank[iy, ix] == expected


def test_detect_part_kill_versus_lenient():
    from dataclasses import replace

    model, scene, cal, _ = calibrated_small_setup(seed=35, n_objects=2)
    tau = -1e9
    killed, kstats = detect(cal, scene.pyramid, tau, pruning=True,
                            part_prune_mode="kill")
    lenient, lstats = detect(cal, scene.pyramid, tau, pruning=True,
                             part_prune_mode="lenient")
    killed_keys = {(d.hypothesis.level, d.hypothesis.root) for d in killed}
    lenient_keys = {(d.hypothesis.level, d.hypothesis.root) for d in lenient}
    # lenient never kills a hypothesis, so it reports at least as many
    assert killed_keys <= lenient_keys
    assert kstats.positions_killed_by_parts >= 0
    with pytest.raises(ValidationError, match="part_prune_mode"):
        detect(cal, scene.pyramid, 0.0, pruning=True, part_prune_mode="typo")

    # an unreachable floor on one part separates the two modes completely:
    # kill drops every hypothesis, lenient keeps them minus that part's term
    impossible = replace(
        cal,
        parts=(
            replace(cal.parts[0], thresholds=np.full(cal.parts[0].cp.rank, 1e18)),
        ) + cal.parts[1:],
    )
    killed, kstats = detect(impossible, scene.pyramid, tau, pruning=True,
                            part_prune_mode="kill")
    assert killed == []
    assert kstats.positions_killed_by_parts == kstats.positions_surviving
    lenient, _ = detect(impossible, scene.pyramid, tau, pruning=True,
                        part_prune_mode="lenient")
    assert lenient
    full, _ = detect(cal, scene.pyramid, tau, pruning=False)
    full_scores = {
        (d.hypothesis.level, d.hypothesis.root): d.score for d in full
    }
    part0_maps = [
        cp_partial_stack(level, cal.parts[0].cp)[-1] for level in scene.pyramid
    ]
    for d in lenient[:20]:
        lvl, root = d.hypothesis.level, d.hypothesis.root
        # lenient score is exactly the full score minus the pruned part's
        # placed term
        _, placed = best_part_placement(cal.parts[0], part0_maps[lvl], root)
        assert d.score == pytest.approx(full_scores[(lvl, root)] - placed, abs=1e-9)


def test_detect_requires_calibration_for_pruning():
    model = compact_model(seed=36)
    dec = decompose_model(model, ranks=1, opts=FAST)
    scene = compact_scene(model, seed=37, n_objects=1)
    with pytest.raises(ValidationError, match="calibrated"):
        detect(dec, scene.pyramid, 0.0, pruning=True)


def pruned_multiplications_oracle(cal, scene, stats, part_prune_mode="kill"):
    """Recount the shortened algorithm's cost from the prune maps using
    python sets: alive positions per rank for the root, union of alive
    search windows per rank for every part."""
    total = 0
    for level_idx, level in enumerate(scene.pyramid):
        maps = stats.prune_maps[level_idx]
        rect = maps["rect"]
        if rect is None:
            continue
        ry0, ry1, rx0, rx1 = rect
        positions = [
            (iy, ix)
            for iy in range(ry1 - ry0 + 1)
            for ix in range(rx1 - rx0 + 1)
        ]
        root_rank_map = maps["root_prune_rank"]
        n0, m0, l0 = cal.root_cp.dims
        for r in range(1, cal.root_cp.rank + 1):
            alive = [
                p for p in positions
                if root_rank_map[p] == 0 or root_rank_map[p] >= r
            ]
            total += len(alive) * (n0 + m0 + l0)
        root_alive = [p for p in positions if root_rank_map[p] == 0]
        killed_before = set()
        for i, part in enumerate(cal.parts):
            n, m, l = part.cp.dims
            sy = level.shape[0] - n + 1
            sx = level.shape[1] - m + 1
            ay, ax = part.anchor
            rad = part.search_radius
            prank = maps["part_prune_rank"][i]
            start = [p for p in root_alive if p not in killed_before]
            for r in range(1, part.cp.rank + 1):
                alive = [p for p in start if prank[p] == 0 or prank[p] >= r]
                if not alive:
                    break
                covered = set()
                for iy, ix in alive:
                    cy, cx = ry0 + iy + ay, rx0 + ix + ax
                    for wy in range(max(0, cy - rad), min(sy, cy + rad + 1)):
                        for wx in range(max(0, cx - rad), min(sx, cx + rad + 1)):
                            covered.add((wy, wx))
                total += len(covered) * (n + m + l)
            if part_prune_mode == "kill":
                killed_before |= {p for p in start if prank[p] != 0}
    return total


@pytest.mark.parametrize("mode", ["kill", "lenient"])
def test_pruned_multiplications_match_bruteforce_recount(mode):
    from dataclasses import replace

    model, scene, cal, _ = calibrated_small_setup(
        seed=54, n_objects=2, level_shapes=((26, 30),)
    )
    _, stats = detect(cal, scene.pyramid, np.inf, pruning=True,
                      part_prune_mode=mode, collect_maps=True)
    assert stats.multiplications == pruned_multiplications_oracle(
        cal, scene, stats, part_prune_mode=mode
    )
    # raised floor on the first part forces part-stage prunes (and, in
    # kill mode, cross-part kill propagation) through the same recount
    strict = replace(
        cal,
        parts=(
            replace(
                cal.parts[0],
                thresholds=cal.parts[0].thresholds + np.array([20.0, 1e18]),
            ),
        ) + cal.parts[1:],
    )
    _, stats = detect(strict, scene.pyramid, np.inf, pruning=True,
                      part_prune_mode=mode, collect_maps=True)
    assert stats.part_pruned_at_rank, "no part-stage pruning exercised"
    assert stats.multiplications == pruned_multiplications_oracle(
        strict, scene, stats, part_prune_mode=mode
    )


def test_detect_stats_accounting_invariant():
    model, scene, cal, _ = calibrated_small_setup(seed=38, n_objects=2)
    _, stats = detect(cal, scene.pyramid, 0.0, pruning=True)
    assert stats.positions_pruned + stats.positions_surviving == (
        stats.positions_examined
    )
    d = stats.as_dict()
    assert d["positions_examined"] == stats.positions_examined
    assert d["multiplications"] == stats.multiplications


def test_detect_deterministic():
    model, scene, cal, _ = calibrated_small_setup(seed=39, n_objects=2)
    tau = min(h.score for _, h in scene.planted) - 5.0
    d1, s1 = detect(cal, scene.pyramid, tau, pruning=True)
    d2, s2 = detect(cal, scene.pyramid, tau, pruning=True)
    assert [(d.hypothesis.level, d.hypothesis.root, d.score) for d in d1] == [
        (d.hypothesis.level, d.hypothesis.root, d.score) for d in d2
    ]
    assert s1.multiplications == s2.multiplications
    assert s1.positions_pruned_at_rank == s2.positions_pruned_at_rank


def test_detect_channel_mismatch_errors():
    model, _, cal, _ = calibrated_small_setup(seed=40)
    with pytest.raises(ValidationError, match="channels"):
        detect(cal, [np.zeros((20, 20, 3))], 0.0)


def test_detect_degenerate_pyramids():
    model, _, cal, _ = calibrated_small_setup(seed=51)
    none_found, stats = detect(cal, [], -np.inf)
    assert none_found == [] and stats.positions_examined == 0
    # level large enough for the root but too small for any part window
    tiny = np.zeros((5, 6, 6))
    found, stats = detect(cal, [tiny], -np.inf)
    assert found == [] and stats.positions_examined == 0


def test_cp_score_hypothesis_within_cauchy_schwarz_bound():
    model = compact_model(seed=41, low_rank=None)
    scene = compact_scene(model, seed=42, n_objects=1, level_shapes=((24, 26),))
    dec = decompose_model(model, ranks=2, opts=FAST)  # lossy on full-rank filters
    level = scene.pyramid[0]
    _, hyp = scene.planted[0]
    gap = abs(
        score_hypothesis(model, level, hyp) - cp_score_hypothesis(dec, level, hyp)
    )
    bound = 1e-9
    for residual, filt in zip(dec.residuals, model.filters):
        bound += residual * sliding_window_norms(level, filt.shape).max()
    assert gap <= bound


def test_cascade_detector_estimator():
    model = compact_model(seed=43, low_rank=2)
    scene = compact_scene(model, seed=44, n_objects=2)
    positives = [(scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted]
    tau = min(h.score for _, h in scene.planted) - 1.0
    est = CascadePartDetector(
        model=model, ranks=2, tau=tau, pruning=True,
        max_iterations=100, restarts=1, seed=0,
    )
    assert clone(est).get_params()["ranks"] == 2
    est.fit(positives)
    detections = est.predict(scene.pyramid)
    found = {(d.hypothesis.level, d.hypothesis.root) for d in detections}
    for lvl, hyp in scene.planted:
        assert (lvl, hyp.root) in found
    assert est.stats_.positions_pruned > 0


def test_cascade_detector_pruning_needs_positives():
    est = CascadePartDetector(model=compact_model(seed=45), ranks=1, pruning=True)
    with pytest.raises(ValidationError, match="positive"):
        est.fit(None)


def test_detect_root_only_model():
    from cpdetect.synthetic import gen_model, gen_scene

    model = gen_model(root_size=(3, 4), n_parts=0, channels=6, low_rank=2,
                      bias=0.1, seed=50)
    scene = gen_scene(model, n_objects=2, noise=0.05, level_shapes=((20, 24),),
                      seed=51)
    dec = decompose_model(model, ranks=2, opts=FAST)
    positives = [(scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted]
    cal = calibrate_thresholds(dec, positives)
    assert cal.calibrated
    tau = min(h.score for _, h in scene.planted) - 1.0
    detections, stats = detect(cal, scene.pyramid, tau, pruning=True)
    found = {d.hypothesis.root for d in detections}
    for _, hyp in scene.planted:
        assert hyp.root in found
        assert detections[0].hypothesis.parts == ()
    assert stats.positions_pruned > 0


def test_monotone_work_reduction_across_rank_configs():
    # growing the ranks (with thresholds recalibrated per configuration)
    # never prunes fewer positions, and the pruned runs always cost at most
    # their unpruned counterparts
    model = compact_model(seed=48, low_rank=4)
    scenes = [compact_scene(model, seed=480 + i, n_objects=2) for i in range(3)]
    positives = [
        (scene.pyramid[lvl], hyp) for scene in scenes for lvl, hyp in scene.planted
    ]
    opts = AlsOptions(max_iterations=80, restarts=1, seed=0)
    pruned_by_rank = {}
    work_fraction = {}
    for rank in (2, 3, 4):
        cal = calibrate_thresholds(
            decompose_model(model, ranks=rank, opts=opts), positives
        )
        pruned = on = off = 0
        for scene in scenes:
            _, stats_on = detect(cal, scene.pyramid, np.inf, pruning=True)
            _, stats_off = detect(cal, scene.pyramid, np.inf, pruning=False)
            assert stats_on.multiplications <= stats_off.multiplications
            pruned += stats_on.positions_pruned
            on += stats_on.multiplications
            off += stats_off.multiplications
        pruned_by_rank[rank] = pruned
        work_fraction[rank] = on / off
    assert pruned_by_rank[3] >= pruned_by_rank[2] - 0  # non-increasing going down
    assert pruned_by_rank[4] >= pruned_by_rank[3] - 0
    # relative work shrinks as ranks grow: early pruning saves more passes
    assert work_fraction[3] < work_fraction[2]
    assert work_fraction[4] < work_fraction[3]


def test_prune_histogram_concentrates_early():
    # largest-weight-first accumulation makes the first rank do almost all
    # of the pruning on noise-dominated scenes
    model, scene, cal, _ = calibrated_small_setup(seed=49, low_rank=4, ranks=4)
    _, stats = detect(cal, scene.pyramid, np.inf, pruning=True)
    hist = stats.positions_pruned_at_rank
    assert hist, "nothing pruned at all"
    first = hist.get(1, 0)
    assert first >= sum(hist.values()) * 0.9


def test_cascade_detector_no_pruning_without_positives():
    model = compact_model(seed=46, low_rank=2)
    scene = compact_scene(model, seed=47, n_objects=1)
    tau = min(h.score for _, h in scene.planted) - 1.0
    est = CascadePartDetector(
        model=model, ranks=2, tau=tau, pruning=False,
        max_iterations=100, restarts=1,
    )
    est.fit()
    assert len(est.predict(scene.pyramid)) >= 1
