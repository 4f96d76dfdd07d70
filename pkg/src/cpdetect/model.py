"""Star-structured part model types, validation, decomposition and file I/O.

A :class:`PartModel` is a root filter, ``n`` part filters with anchor
offsets, per-part deformation coefficients and search radii, and a scalar
bias.  A :class:`DecomposedModel` is the same structure with every filter
replaced by its CP decomposition, optionally annotated with per-rank
pruning thresholds.

On disk a model is a JSON manifest holding scalars plus relative paths to
binary filter payloads (T3F for dense tensors, CPF for decompositions).
The manifest schema ships in ``docs/model_manifest.schema.json``.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .decomposition import (
    AlsOptions,
    CPModel,
    cp_als,
    load_cpf,
    save_cpf,
    select_rank,
)
from .tensor import load_t3f, save_t3f
from .validation import FormatError, ValidationError

__all__ = [
    "PartSpec",
    "PartModel",
    "DecomposedPart",
    "DecomposedModel",
    "validate",
    "decompose_model",
    "save_model",
    "load_model",
    "filter_payload_bytes",
    "memory_gain",
    "MANIFEST_VERSION",
]

MANIFEST_VERSION = 1


def _coerce_filter(f, name):
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"{name} must be an order-3 array, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class PartSpec:
    """One part: filter, anchor offset from the root position, deformation
    coefficients ``(c_dx, c_dy, c_dxx, c_dyy)`` and a search radius."""

    filter: np.ndarray
    anchor: tuple
    deformation: tuple
    search_radius: int

    def __post_init__(self):
        object.__setattr__(self, "filter", _coerce_filter(self.filter, "part filter"))
        dy, dx = self.anchor
        object.__setattr__(self, "anchor", (int(dy), int(dx)))
        if len(self.deformation) != 4:
            raise ValidationError("deformation must have 4 coefficients")
        object.__setattr__(
            self, "deformation", tuple(float(v) for v in self.deformation)
        )
        object.__setattr__(self, "search_radius", int(self.search_radius))


@dataclass(frozen=True)
class PartModel:
    """Root filter plus ``n >= 0`` parts and a score bias."""

    root: np.ndarray
    parts: tuple = ()
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "root", _coerce_filter(self.root, "root filter"))
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def channels(self):
        return self.root.shape[2]

    @property
    def filters(self):
        return (self.root,) + tuple(p.filter for p in self.parts)


@dataclass(frozen=True)
class DecomposedPart:
    """A part whose filter lives as a CP model; thresholds, when present,
    hold the calibrated per-rank pruning floor ``t_1..t_R``."""

    cp: CPModel
    anchor: tuple
    deformation: tuple
    search_radius: int
    thresholds: np.ndarray = None

    def __post_init__(self):
        dy, dx = self.anchor
        object.__setattr__(self, "anchor", (int(dy), int(dx)))
        object.__setattr__(
            self, "deformation", tuple(float(v) for v in self.deformation)
        )
        object.__setattr__(self, "search_radius", int(self.search_radius))
        if self.thresholds is not None:
            t = np.asarray(self.thresholds, dtype=np.float64)
            if t.shape != (self.cp.rank,):
                raise ValidationError(
                    f"thresholds must have length {self.cp.rank}, got {t.shape}"
                )
            object.__setattr__(self, "thresholds", t)


@dataclass(frozen=True)
class DecomposedModel:
    """A :class:`PartModel` with CP-decomposed filters.

    ``residuals`` holds the per-filter decomposition residuals (root first)
    when the model came out of :func:`decompose_model`; models loaded from
    disk carry ``None`` since the dense originals are gone.
    """

    root_cp: CPModel
    parts: tuple = ()
    bias: float = 0.0
    root_thresholds: np.ndarray = None
    residuals: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "bias", float(self.bias))
        if self.root_thresholds is not None:
            t = np.asarray(self.root_thresholds, dtype=np.float64)
            if t.shape != (self.root_cp.rank,):
                raise ValidationError(
                    f"root thresholds must have length {self.root_cp.rank}"
                )
            object.__setattr__(self, "root_thresholds", t)
        if self.residuals is not None:
            object.__setattr__(
                self, "residuals", tuple(float(r) for r in self.residuals)
            )

    @property
    def channels(self):
        return self.root_cp.dims[2]

    @property
    def ranks(self):
        return (self.root_cp.rank,) + tuple(p.cp.rank for p in self.parts)

    @property
    def calibrated(self):
        if self.root_thresholds is None:
            return False
        return all(p.thresholds is not None for p in self.parts)


def validate(model):
    """Check a :class:`PartModel` against its invariants.

    Returns a list of human-readable violations, one per broken rule; an
    empty list means the model is well formed.  Violations are data, not
    exceptions, so callers can report all of them at once.
    """
    violations = []
    root = model.root
    if not np.isfinite(root).all():
        violations.append("root: filter contains non-finite values")
    channels = root.shape[2]
    for i, part in enumerate(model.parts):
        name = f"parts[{i}]"
        if not np.isfinite(part.filter).all():
            violations.append(f"{name}: filter contains non-finite values")
        if part.filter.shape[2] != channels:
            violations.append(
                f"{name}: filter channel extent {part.filter.shape[2]} differs "
                f"from root filter channel extent {channels}"
            )
        cdx, cdy, cdxx, cdyy = part.deformation
        if cdxx < 0:
            violations.append(f"{name}.deformation.c_dxx: must be >= 0, got {cdxx}")
        if cdyy < 0:
            violations.append(f"{name}.deformation.c_dyy: must be >= 0, got {cdyy}")
        if part.search_radius < 1:
            violations.append(
                f"{name}.search_radius: must be >= 1, got {part.search_radius}"
            )
    return violations


def require_valid(model):
    violations = validate(model)
    if violations:
        raise ValidationError("invalid model: " + "; ".join(violations))


def _resolve_ranks(model, ranks):
    n_filters = 1 + len(model.parts)
    if isinstance(ranks, (int, np.integer)):
        return [int(ranks)] * n_filters
    ranks = list(ranks)
    if len(ranks) == 2 and n_filters != 2:
        # (S, T) shorthand: root rank S, every part rank T
        return [int(ranks[0])] + [int(ranks[1])] * len(model.parts)
    if len(ranks) != n_filters:
        raise ValidationError(
            f"ranks must be a scalar, an (S, T) pair, or one rank per filter "
            f"({n_filters}), got {len(ranks)} entries"
        )
    return [int(r) for r in ranks]


def decompose_model(model, ranks=None, select_e=None, opts=None, criterion="scaled"):
    """Replace every filter of ``model`` by its CP decomposition.

    Exactly one of ``ranks`` (a scalar, an ``(S, T)`` root/part pair, or a
    full per-filter vector) and ``select_e`` (minimal-rank search threshold)
    must be given.  Thresholds are left unset; calibration is a separate
    step.  Per-filter residuals are recorded on the result.
    """
    require_valid(model)
    opts = opts or AlsOptions()
    if (ranks is None) == (select_e is None):
        raise ValidationError("provide exactly one of ranks= and select_e=")

    names = ["root"] + [f"parts[{i}]" for i in range(len(model.parts))]
    if ranks is not None:
        rank_list = _resolve_ranks(model, ranks)
    else:
        rank_list = []
        for name, filt in zip(names, model.filters):
            try:
                rank_list.append(
                    select_rank(filt, select_e, opts, criterion=criterion).rank
                )
            except ValidationError as exc:
                raise ValidationError(f"{name}: {exc}") from exc

    cps, residuals = [], []
    for name, filt, rank in zip(names, model.filters, rank_list):
        try:
            cp, residual = cp_als(filt, rank, opts)
        except ValidationError as exc:
            raise ValidationError(f"{name}: {exc}") from exc
        cps.append(cp)
        residuals.append(residual)

    parts = tuple(
        DecomposedPart(
            cp=cp,
            anchor=p.anchor,
            deformation=p.deformation,
            search_radius=p.search_radius,
        )
        for cp, p in zip(cps[1:], model.parts)
    )
    return DecomposedModel(
        root_cp=cps[0],
        parts=parts,
        bias=model.bias,
        residuals=tuple(residuals),
    )


def _payload_dims(entry):
    if isinstance(entry, CPModel):
        n, m, l = entry.dims
        return entry.rank * (n + m + l)
    n, m, l = entry.shape
    return n * m * l


def filter_payload_bytes(model):
    """Bytes of serialized filter *data* across all filters of a model.

    Counts the float32 payload blocks exactly as written to disk: the
    tensor entries of a dense model, the factor-matrix entries of a
    decomposed one.  Container metadata (magic, extents, term weights) is
    excluded; it is fixed-size bookkeeping, not filter data, and the CLI
    ``inspect`` command reports whole-file sizes separately.
    """
    if isinstance(model, PartModel):
        entries = model.filters
    elif isinstance(model, DecomposedModel):
        entries = (model.root_cp,) + tuple(p.cp for p in model.parts)
    else:
        raise ValidationError(f"unsupported model type {type(model).__name__}")
    return 4 * sum(_payload_dims(e) for e in entries)


def memory_gain(model, dec):
    """Dense-over-decomposed filter storage ratio: sum(nml) / sum(R(n+m+l))."""
    return filter_payload_bytes(model) / filter_payload_bytes(dec)


def _thresholds_to_json(t):
    return None if t is None else [float(v) for v in t]


def save_model(path, model):
    """Write a model manifest plus its binary filter payloads.

    Payload files are placed next to the manifest and referenced by
    relative path: ``<stem>_root.t3f``/``.cpf`` and ``<stem>_part<i>.*``.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    stem = os.path.splitext(os.path.basename(path))[0]
    doc = {"version": MANIFEST_VERSION}

    if isinstance(model, PartModel):
        require_valid(model)
        doc["channels"] = int(model.channels)
        doc["bias"] = model.bias
        root_name = f"{stem}_root.t3f"
        save_t3f(os.path.join(directory, root_name), model.root)
        doc["root"] = root_name
        doc["parts"] = []
        for i, part in enumerate(model.parts):
            payload = f"{stem}_part{i}.t3f"
            save_t3f(os.path.join(directory, payload), part.filter)
            doc["parts"].append(
                {
                    "payload": payload,
                    "anchor": list(part.anchor),
                    "deformation": list(part.deformation),
                    "search_radius": part.search_radius,
                }
            )
    elif isinstance(model, DecomposedModel):
        doc["channels"] = int(model.channels)
        doc["bias"] = model.bias
        root_name = f"{stem}_root.cpf"
        save_cpf(os.path.join(directory, root_name), model.root_cp)
        doc["root"] = {"payload": root_name, "rank": model.root_cp.rank}
        if model.root_thresholds is not None:
            doc["root"]["thresholds"] = _thresholds_to_json(model.root_thresholds)
        doc["parts"] = []
        for i, part in enumerate(model.parts):
            payload = f"{stem}_part{i}.cpf"
            save_cpf(os.path.join(directory, payload), part.cp)
            entry = {
                "payload": payload,
                "anchor": list(part.anchor),
                "deformation": list(part.deformation),
                "search_radius": part.search_radius,
                "rank": part.cp.rank,
            }
            if part.thresholds is not None:
                entry["thresholds"] = _thresholds_to_json(part.thresholds)
            doc["parts"].append(entry)
    else:
        raise ValidationError(f"unsupported model type {type(model).__name__}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_field(doc, key, expected_types, path):
    if key not in doc:
        raise FormatError(f"{path}: manifest field '{key}' is missing")
    value = doc[key]
    if not isinstance(value, expected_types):
        raise FormatError(f"{path}: manifest field '{key}' has the wrong type")
    return value


def load_model(path):
    """Load a manifest written by :func:`save_model`.

    Returns a :class:`PartModel` or :class:`DecomposedModel` depending on
    the payload format found (T3F versus CPF).
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON manifest: {exc}") from exc

    version = _manifest_field(doc, "version", int, path)
    if version != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {version}")
    channels = _manifest_field(doc, "channels", int, path)
    bias = float(_manifest_field(doc, "bias", (int, float), path))
    root_entry = _manifest_field(doc, "root", (str, dict), path)
    parts_entry = _manifest_field(doc, "parts", list, path)

    def payload_path(name):
        return os.path.join(directory, name)

    def load_payload(name):
        full = payload_path(name)
        with open(full, "rb") as fh:
            magic = fh.read(4)
        if magic == b"T3F1":
            return load_t3f(full)
        if magic == b"CPF1":
            return load_cpf(full)
        raise FormatError(f"{full}: unknown payload magic at byte 0")

    root_thresholds = None
    if isinstance(root_entry, str):
        root_payload = load_payload(root_entry)
    else:
        root_payload = load_payload(_manifest_field(root_entry, "payload", str, path))
        if "thresholds" in root_entry:
            root_thresholds = np.asarray(root_entry["thresholds"], dtype=np.float64)

    decomposed = isinstance(root_payload, CPModel)
    parts = []
    for i, entry in enumerate(parts_entry):
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: parts[{i}] must be an object")
        payload = load_payload(_manifest_field(entry, "payload", str, path))
        if isinstance(payload, CPModel) != decomposed:
            raise FormatError(
                f"{path}: parts[{i}] payload format does not match the root's"
            )
        anchor = _manifest_field(entry, "anchor", list, path)
        deformation = _manifest_field(entry, "deformation", list, path)
        radius = _manifest_field(entry, "search_radius", int, path)
        if decomposed:
            declared = entry.get("rank")
            if declared is not None and declared != payload.rank:
                raise FormatError(
                    f"{path}: parts[{i}] declares rank {declared} but the "
                    f"payload has rank {payload.rank}"
                )
            thresholds = entry.get("thresholds")
            parts.append(
                DecomposedPart(
                    cp=payload,
                    anchor=anchor,
                    deformation=deformation,
                    search_radius=radius,
                    thresholds=None
                    if thresholds is None
                    else np.asarray(thresholds, dtype=np.float64),
                )
            )
        else:
            parts.append(
                PartSpec(
                    filter=payload,
                    anchor=anchor,
                    deformation=deformation,
                    search_radius=radius,
                )
            )

    if decomposed:
        if isinstance(root_entry, dict):
            declared = root_entry.get("rank")
            if declared is not None and declared != root_payload.rank:
                raise FormatError(
                    f"{path}: root declares rank {declared} but the payload "
                    f"has rank {root_payload.rank}"
                )
        model = DecomposedModel(
            root_cp=root_payload,
            parts=tuple(parts),
            bias=bias,
            root_thresholds=root_thresholds,
        )
    else:
        model = PartModel(root=root_payload, parts=tuple(parts), bias=bias)
    if model.channels != channels:
        raise FormatError(
            f"{path}: manifest declares {channels} channels but the root "
            f"payload has {model.channels}"
        )
    return model
