"""Synthetic models and scenes for testing, calibration and benchmarks.

Real detector training data is out of scope, so scenes are built in
feature space directly: filter-matched patterns (root plus displaced
parts) planted into a noise background, with the planted hypotheses kept
as ground truth.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .detection import Hypothesis, score_hypothesis
from .model import PartModel, PartSpec
from .tensor import load_t3f, outer3, save_t3f
from .validation import FormatError, ValidationError

__all__ = [
    "SyntheticScene",
    "gen_model",
    "gen_scene",
    "save_scene",
    "load_scene",
    "DEFAULT_GEOMETRY",
]

# Default geometry: a 5x11 root, eight 8x8 parts, 32 feature channels.
DEFAULT_GEOMETRY = {
    "root_size": (5, 11),
    "part_size": (8, 8),
    "n_parts": 8,
    "channels": 32,
}

# Part anchor grid for the default geometry: two rows of four, spread
# around the root box so planted parts overlap each other only lightly.
_DEFAULT_ANCHORS = [
    (-5, -4), (-5, 4), (-5, 12), (-5, 20),
    (3, -4), (3, 4), (3, 12), (3, 20),
]


@dataclass(frozen=True)
class SyntheticScene:
    """A feature pyramid with known planted objects."""

    pyramid: tuple
    planted: tuple  # (level_index, Hypothesis) pairs
    noise_level: float
    seed: int


def _random_filter(rng, shape, low_rank=None):
    if low_rank is None:
        return rng.normal(size=shape)
    # exact sum of rank-1 terms; serializing truncates to float32 and the
    # widened filter is then only approximately low-rank
    n, m, l = shape
    f = np.zeros(shape)
    for _ in range(low_rank):
        f += outer3(rng.normal(size=n), rng.normal(size=m), rng.normal(size=l))
    return f


def gen_model(
    root_size=DEFAULT_GEOMETRY["root_size"],
    part_size=DEFAULT_GEOMETRY["part_size"],
    n_parts=DEFAULT_GEOMETRY["n_parts"],
    channels=DEFAULT_GEOMETRY["channels"],
    low_rank=None,
    search_radius=2,
    bias=0.0,
    seed=0,
):
    """Deterministic random part model.

    With ``low_rank=k`` every filter is an exact sum of ``k`` rank-1 terms,
    which makes decomposition at rank >= k essentially lossless; otherwise
    filters are full-rank Gaussian noise.
    """
    if min(root_size) < 1 or min(part_size) < 1 or channels < 1:
        raise ValidationError("filter extents and channels must be positive")
    if n_parts < 0:
        raise ValidationError("n_parts must be >= 0")
    rng = np.random.default_rng(seed)
    root = _random_filter(rng, (*root_size, channels), low_rank)
    if n_parts <= len(_DEFAULT_ANCHORS):
        anchors = _DEFAULT_ANCHORS[:n_parts]
    else:
        anchors = [
            (int(rng.integers(-part_size[0], root_size[0] + 1)),
             int(rng.integers(-part_size[1], root_size[1] + 1)))
            for _ in range(n_parts)
        ]
    parts = []
    for i in range(n_parts):
        filt = _random_filter(rng, (*part_size, channels), low_rank)
        deformation = (
            round(float(rng.uniform(-0.05, 0.05)), 4),
            round(float(rng.uniform(-0.05, 0.05)), 4),
            round(float(rng.uniform(0.05, 0.2)), 4),
            round(float(rng.uniform(0.05, 0.2)), 4),
        )
        parts.append(
            PartSpec(
                filter=filt,
                anchor=anchors[i],
                deformation=deformation,
                search_radius=search_radius,
            )
        )
    return PartModel(root=root, parts=tuple(parts), bias=bias)


def _model_footprint(model):
    """Bounding box of root plus all part windows, relative to the root
    position: (y_min, y_max_excl, x_min, x_max_excl)."""
    n0, m0, _ = model.root.shape
    y_min, y_max = 0, n0
    x_min, x_max = 0, m0
    for part in model.parts:
        n, m, _ = part.filter.shape
        ay, ax = part.anchor
        rad = part.search_radius
        y_min = min(y_min, ay - rad)
        y_max = max(y_max, ay + rad + n)
        x_min = min(x_min, ax - rad)
        x_max = max(x_max, ax + rad + m)
    return y_min, y_max, x_min, x_max


def gen_scene(
    model,
    n_objects=1,
    noise=0.1,
    level_shapes=((40, 56),),
    seed=0,
    amplitude=1.0,
):
    """Plant ``n_objects`` per pyramid level into Gaussian noise.

    Each object is the root pattern at a random valid position plus every
    part pattern displaced by a random offset within its search radius.
    Ground-truth hypotheses record the planted positions and their exact
    dense scores.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    y_min, y_max, x_min, x_max = _model_footprint(model)
    footprint_h, footprint_w = y_max - y_min, x_max - x_min
    pyramid = []
    planted = []
    for level_idx, (H, W) in enumerate(level_shapes):
        if H < footprint_h or W < footprint_w:
            raise ValidationError(
                f"level {level_idx} of {H}x{W} cells cannot hold the model "
                f"footprint {footprint_h}x{footprint_w}"
            )
        level = rng.normal(0.0, noise, size=(H, W, model.channels)) if noise > 0 else (
            np.zeros((H, W, model.channels))
        )
        occupied = []
        hypotheses = []
        for _ in range(n_objects):
            pos = _place_object(rng, (H, W), (y_min, y_max, x_min, x_max), occupied)
            if pos is None:
                break
            gy, gx = pos
            occupied.append(pos)
            n0, m0, _ = model.root.shape
            level[gy : gy + n0, gx : gx + m0, :] += amplitude * model.root
            part_positions = []
            for part in model.parts:
                rad = part.search_radius
                dy = int(rng.integers(-rad, rad + 1))
                dx = int(rng.integers(-rad, rad + 1))
                py, px = gy + part.anchor[0] + dy, gx + part.anchor[1] + dx
                n, m, _ = part.filter.shape
                level[py : py + n, px : px + m, :] += amplitude * part.filter
                part_positions.append((py, px))
            hypotheses.append(((gy, gx), tuple(part_positions)))
        # quantize so T3F serialization reproduces the scene exactly
        level = level.astype(np.float32).astype(np.float64)
        pyramid.append(level)
        for (gy, gx), part_positions in hypotheses:
            hyp = Hypothesis(level=level_idx, root=(gy, gx), parts=part_positions)
            exact = score_hypothesis(model, level, hyp)
            planted.append((level_idx, Hypothesis(
                level=level_idx, root=(gy, gx), parts=part_positions, score=exact
            )))
    return SyntheticScene(
        pyramid=tuple(pyramid),
        planted=tuple(planted),
        noise_level=float(noise),
        seed=int(seed),
    )


def save_scene(path, scene):
    """Write a scene as a JSON manifest plus one T3F file per level.

    Level payloads land next to the manifest as ``<stem>_level<i>.t3f``.
    Planted truth records positions and exact dense scores.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    stem = os.path.splitext(os.path.basename(path))[0]
    levels = []
    for i, level in enumerate(scene.pyramid):
        name = f"{stem}_level{i}.t3f"
        save_t3f(os.path.join(directory, name), level)
        levels.append(name)
    doc = {
        "version": 1,
        "noise_level": scene.noise_level,
        "seed": scene.seed,
        "levels": levels,
        "truth": [
            {
                "level": lvl,
                "root": list(hyp.root),
                "parts": [list(p) for p in hyp.parts],
                "score": hyp.score,
            }
            for lvl, hyp in scene.planted
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path):
    """Read a scene manifest written by :func:`save_scene`."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON scene manifest: {exc}") from exc
    for key in ("version", "levels", "truth", "noise_level", "seed"):
        if key not in doc:
            raise FormatError(f"{path}: scene manifest field '{key}' is missing")
    if doc["version"] != 1:
        raise FormatError(f"{path}: unsupported scene version {doc['version']}")
    pyramid = tuple(
        load_t3f(os.path.join(directory, name)) for name in doc["levels"]
    )
    planted = []
    for entry in doc["truth"]:
        hyp = Hypothesis(
            level=entry["level"],
            root=tuple(entry["root"]),
            parts=tuple(tuple(p) for p in entry["parts"]),
            score=entry.get("score"),
        )
        planted.append((entry["level"], hyp))
    return SyntheticScene(
        pyramid=pyramid,
        planted=tuple(planted),
        noise_level=float(doc["noise_level"]),
        seed=int(doc["seed"]),
    )


def _place_object(rng, level_shape, footprint, occupied, max_tries=50):
    H, W = level_shape
    y_min, y_max, x_min, x_max = footprint
    lo_y, hi_y = -y_min, H - y_max
    lo_x, hi_x = -x_min, W - x_max
    if hi_y < lo_y or hi_x < lo_x:
        return None
    for _ in range(max_tries):
        gy = int(rng.integers(lo_y, hi_y + 1))
        gx = int(rng.integers(lo_x, hi_x + 1))
        # keep planted roots well separated so truths stay unambiguous
        if all(abs(gy - oy) + abs(gx - ox) >= 12 for oy, ox in occupied):
            return gy, gx
    return None
