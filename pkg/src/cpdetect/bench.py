"""Operation-count and wall-clock benchmarking of detector configurations.

Wall-clock methodology: every timed path runs once as a discarded warm-up,
then ``repetitions`` more times; the median is reported.  Multiplication
counters are exact and deterministic, so they are taken from the first
counted run.
"""

import statistics
import time

from .correlation import theoretical_gain
from .decomposition import AlsOptions
from .detection import calibrate_thresholds, dense_detect, detect
from .model import decompose_model
from .validation import ValidationError

__all__ = ["bench"]


def _timed(fn, repetitions):
    fn()  # warm-up, discarded
    times = []
    result = None
    for _ in range(repetitions):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return result, statistics.median(times)


def _detection_keys(detections):
    return {(d.hypothesis.level, d.hypothesis.root) for d in detections}


def _filter_gains(model, ranks):
    names = ["root"] + [f"part{i}" for i in range(len(model.parts))]
    gains = {}
    for name, filt, rank in zip(names, model.filters, ranks):
        n, m, l = filt.shape
        gains[name] = theoretical_gain(n, m, l, rank)
    return gains


def bench(
    model,
    scene,
    ranks_list,
    tau,
    pruning=False,
    repetitions=5,
    opts=None,
    part_prune_mode="kill",
):
    """Compare the dense baseline against CP configurations on one scene.

    For each entry of ``ranks_list`` (any form :func:`decompose_model`
    accepts) the model is decomposed, calibrated on the scene's planted
    ground truth when ``pruning`` is on, and timed over ``repetitions``
    runs.  Returns a report dict with one row per configuration: exact
    multiplication counters, per-filter closed-form gains, median wall
    times, and the detection delta against the dense baseline.
    """
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    opts = opts or AlsOptions()

    (dense_detections, dense_stats), dense_wall = _timed(
        lambda: dense_detect(model, scene.pyramid, tau), repetitions
    )
    dense_keys = _detection_keys(dense_detections)
    report = {
        "dense": {
            "multiplications": dense_stats.multiplications,
            "wall_time_median": dense_wall,
            "detections": len(dense_detections),
            "positions_examined": dense_stats.positions_examined,
        },
        "configs": [],
    }

    positives = [(scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted]
    for ranks in ranks_list:
        dec = decompose_model(model, ranks=ranks, opts=opts)
        if pruning:
            if not positives:
                raise ValidationError(
                    "pruning benchmark needs a scene with planted ground truth"
                )
            dec = calibrate_thresholds(dec, positives)
        (detections, stats), wall = _timed(
            lambda: detect(
                dec,
                scene.pyramid,
                tau,
                pruning=pruning,
                part_prune_mode=part_prune_mode,
            ),
            repetitions,
        )
        keys = _detection_keys(detections)
        report["configs"].append(
            {
                "ranks": list(dec.ranks),
                "pruning": bool(pruning),
                "multiplications": stats.multiplications,
                "counter_ratio": dense_stats.multiplications / stats.multiplications,
                "theoretical_gain": _filter_gains(model, dec.ranks),
                "wall_time_median": wall,
                "wall_speedup": dense_wall / wall if wall > 0 else float("inf"),
                "detections": len(detections),
                "detections_missing_vs_dense": len(dense_keys - keys),
                "detections_extra_vs_dense": len(keys - dense_keys),
                "positions_pruned": stats.positions_pruned,
                "residuals": list(dec.residuals),
            }
        )
    return report


def bench_rows(report):
    """Flatten a bench report into CSV-ready rows."""
    rows = [
        {
            "config": "dense",
            "ranks": "",
            "pruning": "",
            "multiplications": report["dense"]["multiplications"],
            "counter_ratio": 1.0,
            "wall_time_median": report["dense"]["wall_time_median"],
            "wall_speedup": 1.0,
            "detections": report["dense"]["detections"],
            "missing_vs_dense": 0,
            "extra_vs_dense": 0,
        }
    ]
    for cfg in report["configs"]:
        rows.append(
            {
                "config": "cp",
                "ranks": "/".join(str(r) for r in cfg["ranks"]),
                "pruning": "on" if cfg["pruning"] else "off",
                "multiplications": cfg["multiplications"],
                "counter_ratio": cfg["counter_ratio"],
                "wall_time_median": cfg["wall_time_median"],
                "wall_speedup": cfg["wall_speedup"],
                "detections": cfg["detections"],
                "missing_vs_dense": cfg["detections_missing_vs_dense"],
                "extra_vs_dense": cfg["detections_extra_vs_dense"],
            }
        )
    return rows
