"""Command-line harness: generate, decompose, calibrate, detect, evaluate.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal numeric failure.
"""

import csv
import json
import os
import shutil
import sys

import click
import numpy as np

from .bench import bench, bench_rows
from .correlation import correlate3_cp, correlate3_full, save_score_map, theoretical_gain
from .decomposition import AlsOptions, kruskal_uniqueness_holds
from .detection import calibrate_thresholds, dense_detect, detect
from .evaluation import roc_eval
from .features import extract_features
from .model import (
    DecomposedModel,
    PartModel,
    decompose_model,
    filter_payload_bytes,
    load_model,
    save_model,
    validate,
)
from .synthetic import gen_model, gen_scene, load_scene, save_scene
from .tensor import save_t3f
from .validation import CpdetectError, FormatError, NumericError, ValidationError


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for every random choice the command makes.")
@click.option("--out", type=click.Path(), default=None,
              help="Primary output path (meaning depends on the command).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True, help="Tabular output format.")
@click.pass_context
def cli(ctx, seed, out, fmt):
    """Detection with CP-decomposed filters and convolution shortening."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["out"] = out
    ctx.obj["format"] = fmt


def _require_out(ctx, what):
    out = ctx.obj["out"]
    if out is None:
        raise click.UsageError(f"--out is required ({what})")
    return out


def _parse_ranks(text):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise click.UsageError(f"cannot parse ranks {text!r}; expected e.g. '6' or '6,4'")
    if any(v < 1 for v in values):
        raise click.UsageError("ranks must be positive")
    return values[0] if len(values) == 1 else values


def _parse_shapes(text):
    shapes = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 2:
            raise click.UsageError(
                f"cannot parse level shapes {text!r}; expected 'H,W[;H,W...]'"
            )
        shapes.append((int(parts[0]), int(parts[1])))
    return tuple(shapes)


def _load_dense(path):
    model = load_model(path)
    if not isinstance(model, PartModel):
        raise ValidationError(f"{path} holds a decomposed model; a dense one is needed")
    return model


def _load_decomposed(path):
    model = load_model(path)
    if not isinstance(model, DecomposedModel):
        raise ValidationError(f"{path} holds a dense model; a decomposed one is needed")
    return model


def _write_rows(path, rows, header, fmt):
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@cli.command("gen-model")
@click.option("--root-size", default="5,11", show_default=True, help="Root filter H,W.")
@click.option("--part-size", default="8,8", show_default=True, help="Part filter H,W.")
@click.option("--parts", type=int, default=8, show_default=True)
@click.option("--channels", type=int, default=32, show_default=True)
@click.option("--low-rank", type=int, default=None,
              help="Build filters as exact sums of this many rank-1 terms.")
@click.option("--search-radius", type=int, default=2, show_default=True)
@click.option("--bias", type=float, default=0.0, show_default=True)
@click.pass_context
def gen_model_cmd(ctx, root_size, part_size, parts, channels, low_rank, search_radius, bias):
    """Generate a synthetic part model and write its manifest."""
    out = _require_out(ctx, "model manifest path")
    rh, rw = (int(v) for v in root_size.split(","))
    ph, pw = (int(v) for v in part_size.split(","))
    model = gen_model(
        root_size=(rh, rw),
        part_size=(ph, pw),
        n_parts=parts,
        channels=channels,
        low_rank=low_rank,
        search_radius=search_radius,
        bias=bias,
        seed=ctx.obj["seed"],
    )
    save_model(out, model)
    click.echo(f"wrote model with {len(model.parts)} parts to {out}")


@cli.command("gen-scene")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--objects", type=int, default=1, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.option("--levels", default="40,56", show_default=True,
              help="Semicolon-separated level shapes, e.g. '40,56;32,44'.")
@click.option("--amplitude", type=float, default=1.0, show_default=True)
@click.pass_context
def gen_scene_cmd(ctx, model_path, objects, noise, levels, amplitude):
    """Plant objects of a model into noise and write the scene."""
    out = _require_out(ctx, "scene manifest path")
    model = _load_dense(model_path)
    scene = gen_scene(
        model,
        n_objects=objects,
        noise=noise,
        level_shapes=_parse_shapes(levels),
        amplitude=amplitude,
        seed=ctx.obj["seed"],
    )
    save_scene(out, scene)
    click.echo(f"wrote scene with {len(scene.planted)} planted objects to {out}")


@cli.command("extract")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True),
              help="Grayscale image: .npy array or binary .pgm (P5).")
@click.option("--cell-size", type=int, default=8, show_default=True)
@click.option("--bins", type=int, default=9, show_default=True)
@click.pass_context
def extract_cmd(ctx, image_path, cell_size, bins):
    """Extract gradient-orientation features from an image into a T3F map."""
    out = _require_out(ctx, "feature map path")
    image = _read_grayscale(image_path)
    fmap = extract_features(image, cell_size=cell_size, bins=bins)
    save_t3f(out, fmap)
    click.echo(f"wrote {fmap.shape[0]}x{fmap.shape[1]}x{fmap.shape[2]} features to {out}")


def _read_grayscale(path):
    if path.endswith(".npy"):
        arr = np.load(path)
        if arr.ndim != 2:
            raise ValidationError(f"{path}: expected a 2-D array, got shape {arr.shape}")
        return arr
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != b"P5":
            raise FormatError(f"{path}: unsupported image format (need .npy or P5 .pgm)")
        tokens = []
        while len(tokens) < 3:
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: truncated PGM header")
            text = line.split(b"#", 1)[0]
            tokens.extend(text.split())
        width, height, maxval = int(tokens[0]), int(tokens[1]), int(tokens[2])
        if maxval > 255:
            raise FormatError(f"{path}: 16-bit PGM not supported")
        data = fh.read(width * height)
        if len(data) != width * height:
            raise FormatError(f"{path}: truncated PGM payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).astype(np.float64)


@cli.command("decompose")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--ranks", default=None,
              help="'6' for all filters, '6,4' for (root, parts), or a full per-filter list.")
@click.option("--select-e", type=float, default=None,
              help="Pick minimal ranks passing the selection criterion instead.")
@click.option("--criterion", type=click.Choice(["scaled", "relative"]), default="scaled",
              show_default=True)
@click.option("--restarts", type=int, default=5, show_default=True)
@click.option("--max-iterations", type=int, default=200, show_default=True)
@click.option("--tolerance", type=float, default=1e-6, show_default=True)
@click.pass_context
def decompose_cmd(ctx, model_path, ranks, select_e, criterion, restarts, max_iterations,
                  tolerance):
    """Decompose every filter of a model and write the decomposed manifest."""
    out = _require_out(ctx, "decomposed manifest path")
    model = _load_dense(model_path)
    opts = AlsOptions(
        max_iterations=max_iterations,
        tolerance=tolerance,
        restarts=restarts,
        seed=ctx.obj["seed"],
    )
    dec = decompose_model(
        model,
        ranks=None if ranks is None else _parse_ranks(ranks),
        select_e=select_e,
        opts=opts,
        criterion=criterion,
    )
    save_model(out, dec)
    names = ["root"] + [f"part{i}" for i in range(len(dec.parts))]
    for name, rank, residual in zip(names, dec.ranks, dec.residuals):
        click.echo(f"{name}: rank {rank}, residual {residual:.6g}")
    click.echo(f"wrote decomposed model to {out}")


def _payload_names(manifest_path):
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    root = doc["root"]
    names = [root if isinstance(root, str) else root["payload"]]
    names.extend(entry["payload"] for entry in doc["parts"])
    return names


@cli.command("calibrate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_paths", required=True, multiple=True,
              type=click.Path(exists=True),
              help="Scene manifests whose planted truth becomes the positive set.")
@click.pass_context
def calibrate_cmd(ctx, model_path, scene_paths):
    """Calibrate per-rank pruning thresholds from planted positives."""
    out = _require_out(ctx, "calibrated manifest path")
    dec = _load_decomposed(model_path)
    positives = []
    for path in scene_paths:
        scene = load_scene(path)
        positives.extend((scene.pyramid[lvl], hyp) for lvl, hyp in scene.planted)
    calibrated = calibrate_thresholds(dec, positives)
    save_model(out, calibrated)
    # Thresholds are exact minima of partial sums computed from the loaded
    # payload bytes.  Re-truncating factors to float32 on save could perturb
    # them past a threshold, so carry the original payload bytes through
    # unchanged; calibration itself never alters the filters.
    src_dir = os.path.dirname(model_path) or "."
    dst_dir = os.path.dirname(out) or "."
    for src, dst in zip(_payload_names(model_path), _payload_names(out)):
        shutil.copyfile(os.path.join(src_dir, src), os.path.join(dst_dir, dst))
    click.echo(f"calibrated on {len(positives)} positives; wrote {out}")


def _detection_rows(detections, n_parts):
    rows = []
    for d in detections:
        row = {
            "level": d.hypothesis.level,
            "y": d.hypothesis.root[0],
            "x": d.hypothesis.root[1],
            "score": repr(d.score),
            "model_id": d.model_id,
        }
        for i in range(n_parts):
            if i < len(d.hypothesis.parts):
                row[f"part{i}_y"] = d.hypothesis.parts[i][0]
                row[f"part{i}_x"] = d.hypothesis.parts[i][1]
            else:
                row[f"part{i}_y"] = ""
                row[f"part{i}_x"] = ""
        rows.append(row)
    return rows


@cli.command("detect")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--tau", type=float, required=True, help="Detection threshold.")
@click.option("--pruning/--no-pruning", default=False, show_default=True)
@click.option("--part-prune-mode", type=click.Choice(["kill", "lenient"]),
              default="kill", show_default=True)
@click.option("--stats", "stats_path", type=click.Path(), default=None,
              help="Also write run statistics as JSON.")
@click.option("--score-maps", "score_map_prefix", type=click.Path(), default=None,
              help="Also export the root filter's score map per level as "
                   "<prefix>level<i>.csv.")
@click.pass_context
def detect_cmd(ctx, model_path, scene_path, tau, pruning, part_prune_mode, stats_path,
               score_map_prefix):
    """Run a detector over a scene and write the detection table."""
    out = _require_out(ctx, "detections table path")
    model = load_model(model_path)
    scene = load_scene(scene_path)
    if isinstance(model, PartModel):
        if pruning:
            raise ValidationError("pruning requires a decomposed, calibrated model")
        detections, stats = dense_detect(model, scene.pyramid, tau)
        n_parts = len(model.parts)
    else:
        detections, stats = detect(
            model, scene.pyramid, tau, pruning=pruning, part_prune_mode=part_prune_mode
        )
        n_parts = len(model.parts)
    if score_map_prefix:
        for i, level in enumerate(scene.pyramid):
            if isinstance(model, PartModel):
                sm = correlate3_full(level, model.root)
            else:
                sm = correlate3_cp(level, model.root_cp)
            save_score_map(f"{score_map_prefix}level{i}.csv", sm, fmt="csv")
    header = ["level", "y", "x", "score", "model_id"]
    for i in range(n_parts):
        header += [f"part{i}_y", f"part{i}_x"]
    _write_rows(out, _detection_rows(detections, n_parts), header, ctx.obj["format"])
    if stats_path:
        with open(stats_path, "w", encoding="utf-8") as fh:
            json.dump(stats.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    click.echo(f"{len(detections)} detections -> {out}")


@cli.command("roc")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_paths", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--tau-min", type=float, required=True)
@click.option("--tau-max", type=float, required=True)
@click.option("--points", type=int, default=20, show_default=True)
@click.option("--match-radius", type=int, default=1, show_default=True)
@click.option("--pruning/--no-pruning", default=False, show_default=True)
@click.pass_context
def roc_cmd(ctx, model_path, scene_paths, tau_min, tau_max, points, match_radius, pruning):
    """Sweep detection thresholds and write misdetection/false-positive rates."""
    out = _require_out(ctx, "ROC table path")
    model = load_model(model_path)
    if isinstance(model, PartModel) and pruning:
        raise ValidationError("pruning requires a decomposed, calibrated model")
    scenes = [load_scene(p) for p in scene_paths]
    taus = np.linspace(tau_min, tau_max, points)
    roc = roc_eval(model, scenes, taus, match_radius=match_radius, pruning=pruning)
    rows = [
        {
            "tau": repr(p.tau),
            "misdetection_rate": repr(p.misdetection_rate),
            "false_positives_per_scene": repr(p.false_positives_per_scene),
            "false_positives_per_window": repr(p.false_positives_per_window),
        }
        for p in roc
    ]
    header = ["tau", "misdetection_rate", "false_positives_per_scene",
              "false_positives_per_window"]
    _write_rows(out, rows, header, ctx.obj["format"])
    click.echo(f"{len(rows)} ROC points -> {out}")


@cli.command("bench")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--ranks", "ranks_list", multiple=True, default=("6",), show_default=True,
              help="One configuration per flag, e.g. --ranks 6 --ranks 6,4.")
@click.option("--tau", type=float, required=True)
@click.option("--pruning/--no-pruning", default=False, show_default=True)
@click.option("--repetitions", type=int, default=5, show_default=True)
@click.option("--single-thread", is_flag=True, default=False,
              help="Pin BLAS thread pools to one thread for stable timings.")
@click.pass_context
def bench_cmd(ctx, model_path, scene_path, ranks_list, tau, pruning, repetitions,
              single_thread):
    """Benchmark dense versus CP configurations on one scene."""
    out = _require_out(ctx, "benchmark table path")
    model = _load_dense(model_path)
    scene = load_scene(scene_path)
    if single_thread:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=1)
    else:
        limiter = None
    try:
        report = bench(
            model,
            scene,
            [_parse_ranks(r) for r in ranks_list],
            tau,
            pruning=pruning,
            repetitions=repetitions,
            opts=AlsOptions(seed=ctx.obj["seed"]),
        )
    finally:
        if limiter is not None:
            limiter.unregister()
    rows = bench_rows(report)
    header = list(rows[0].keys())
    _write_rows(out, rows, header, ctx.obj["format"])
    for row in rows:
        click.echo(
            f"{row['config']:>5} ranks={row['ranks'] or '-':<12} "
            f"pruning={row['pruning'] or '-':<3} "
            f"mults={row['multiplications']:<12} "
            f"counter_ratio={row['counter_ratio']:.3f} "
            f"wall={row['wall_time_median'] * 1e3:.2f}ms "
            f"speedup={row['wall_speedup']:.2f}x"
        )
    click.echo(f"wrote benchmark table to {out}")


@cli.command("inspect")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.pass_context
def inspect_cmd(ctx, model_path):
    """Print model structure, gains, payload accounting and uniqueness checks."""
    model = load_model(model_path)
    if isinstance(model, PartModel):
        click.echo(f"dense part model: {len(model.parts)} parts, "
                   f"{model.channels} channels, bias {model.bias}")
        violations = validate(model)
        click.echo(f"validation: {'ok' if not violations else '; '.join(violations)}")
        names = ["root"] + [f"part{i}" for i in range(len(model.parts))]
        for name, filt in zip(names, model.filters):
            n, m, l = filt.shape
            click.echo(f"  {name}: {n}x{m}x{l}")
        click.echo(f"filter payload bytes: {filter_payload_bytes(model)}")
        return
    click.echo(f"decomposed model: {len(model.parts)} parts, "
               f"{model.channels} channels, bias {model.bias}")
    click.echo(f"calibrated: {'yes' if model.calibrated else 'no'}")
    names = ["root"] + [f"part{i}" for i in range(len(model.parts))]
    cps = [model.root_cp] + [p.cp for p in model.parts]
    for name, cp in zip(names, cps):
        n, m, l = cp.dims
        gain = theoretical_gain(n, m, l, cp.rank)
        unique = kruskal_uniqueness_holds(cp)
        click.echo(
            f"  {name}: {n}x{m}x{l} rank {cp.rank}, gain {gain:.3f}, "
            f"kruskal-unique {'yes' if unique else 'no'}"
        )
    click.echo(f"filter payload bytes: {filter_payload_bytes(model)}")


def main(argv=None):
    """Entry point mapping errors onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        return 1
    except (ValidationError, FormatError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    except CpdetectError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
