"""Correlation engines for 3-D filters over feature maps.

Two routes compute the same "valid"-support score map:

* :func:`correlate3_full` slides the dense filter (the baseline), and
* :func:`correlate3_cp` applies a CP-decomposed filter as chained 1-D
  passes, channel axis first, then rows, then columns; the term weight is
  fused into the final column pass.

Counting convention
-------------------
Every score map carries a multiplication counter.  Counters follow the
classical sliding-window cost model: each pass is attributed ``kernel
length`` multiplications per *final-support* position, so a dense
correlation costs ``H'*W'*n*m*l`` and a rank-``R`` separable one costs
``R*H'*W'*(n+m+l)``.  Margin positions that the channel/row passes compute
so later passes have support are not counted; the engines' counter ratio
therefore equals the closed-form gain ``n*m*l / (R*(n+m+l))`` exactly.
Debug helpers recount by literal loop increments for cross-checking.
"""

from dataclasses import dataclass

import numpy as np

from .validation import ValidationError, check_feature_map, check_tensor3

__all__ = [
    "ScoreMap",
    "valid_support",
    "correlate3_full",
    "correlate3_cp",
    "cp_partial_stack",
    "full_multiplications",
    "cp_multiplications",
    "debug_count_full",
    "debug_count_cp",
    "theoretical_gain",
    "measured_gain",
    "save_score_map",
]


@dataclass(frozen=True)
class ScoreMap:
    """A 2-D array of per-position scores plus the exact number of scalar
    multiplications attributed to producing it."""

    scores: np.ndarray
    multiplications: int

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ValidationError(f"score map must be 2-D and non-empty, got {s.shape}")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "multiplications", int(self.multiplications))

    @property
    def shape(self):
        return self.scores.shape


def valid_support(img_shape, filt_dims):
    """Output extents of a valid correlation; raises if the filter does not fit."""
    H, W, L = img_shape
    n, m, l = filt_dims
    if l != L:
        raise ValidationError(f"channel mismatch: filter has {l}, image has {L}")
    h_out, w_out = H - n + 1, W - m + 1
    if h_out < 1 or w_out < 1:
        raise ValidationError(
            f"filter extent ({n}, {m}) exceeds image extent ({H}, {W})"
        )
    return h_out, w_out


def full_multiplications(img_shape, filt_dims):
    """Closed-form dense-correlation count: H' * W' * n * m * l."""
    h_out, w_out = valid_support(img_shape, filt_dims)
    n, m, l = filt_dims
    return h_out * w_out * n * m * l


def cp_multiplications(img_shape, filt_dims, rank):
    """Closed-form separable-correlation count: rank * H' * W' * (n + m + l)."""
    h_out, w_out = valid_support(img_shape, filt_dims)
    n, m, l = filt_dims
    return rank * h_out * w_out * (n + m + l)


def correlate3_full(img, filt):
    """Dense valid correlation of a 3-D filter with a feature map.

    ``score[y, x] = sum_{i,j,k} filt[i,j,k] * img[y+i, x+j, k]``
    """
    img = check_feature_map(img)
    filt = check_tensor3(filt, "filter")
    n, m, _ = filt.shape
    h_out, w_out = valid_support(img.shape, filt.shape)
    scores = np.zeros((h_out, w_out))
    scratch = np.empty((h_out, w_out))
    for i in range(n):
        for j in range(m):
            np.einsum(
                "hwl,l->hw",
                img[i : i + h_out, j : j + w_out, :],
                filt[i, j, :],
                out=scratch,
            )
            scores += scratch
    return ScoreMap(scores, full_multiplications(img.shape, filt.shape))


def _term_stack(img, model, upto):
    """Weighted rank-1 term score maps, shape ``(upto, H', W')``.

    All terms go through the same three batched passes: one channel
    contraction over all terms at once, then row and column passes
    accumulated tap by tap, with the term weights fused into the column
    kernels.
    """
    H, W, L = img.shape
    n, m, _ = model.dims
    h_out, w_out = valid_support(img.shape, model.dims)
    a = model.factors_a
    fused = model.factors_b * model.weights[np.newaxis, :]
    chan_all = (img.reshape(H * W, L) @ model.factors_c[:, :upto]).reshape(H, W, upto)
    terms = np.empty((upto, h_out, w_out))
    rows = np.empty((h_out, W))
    row_scratch = np.empty((h_out, W))
    col_scratch = np.empty((h_out, w_out))
    for r in range(upto):
        chan = np.ascontiguousarray(chan_all[:, :, r])
        np.multiply(chan[0:h_out], a[0, r], out=rows)
        for i in range(1, n):
            np.multiply(chan[i : i + h_out], a[i, r], out=row_scratch)
            np.add(rows, row_scratch, out=rows)
        np.multiply(rows[:, 0:w_out], fused[0, r], out=terms[r])
        for j in range(1, m):
            np.multiply(rows[:, j : j + w_out], fused[j, r], out=col_scratch)
            np.add(terms[r], col_scratch, out=terms[r])
    return terms


def _checked_upto(model, upto_rank):
    upto = model.rank if upto_rank is None else upto_rank
    if not 1 <= upto <= model.rank:
        raise ValidationError(
            f"upto_rank must be in [1, {model.rank}], got {upto_rank}"
        )
    return upto


def correlate3_cp(img, model, upto_rank=None):
    """Separable correlation using the first ``upto_rank`` terms of a CP model.

    Terms accumulate in the model's descending-weight order, so the result
    for ``upto_rank=r`` is bit-identical to the ``r``-th entry of
    :func:`cp_partial_stack`.
    """
    img = check_feature_map(img)
    upto = _checked_upto(model, upto_rank)
    # always evaluate the full term stack so truncated results are
    # bit-identical to prefixes of the untruncated ones
    scores = np.cumsum(_term_stack(img, model, model.rank)[:upto], axis=0)[-1]
    return ScoreMap(scores, cp_multiplications(img.shape, model.dims, upto))


def cp_partial_stack(img, model, upto_rank=None):
    """Cumulative partial score maps through each of the first ranks.

    Returns an array of shape ``(upto_rank, H', W')`` whose ``r``-th entry
    is the correlation truncated to the ``r+1`` largest-weight terms.  This
    is the single code path behind threshold calibration and pruned
    detection, which keeps their partial sums bit-identical.
    """
    img = check_feature_map(img)
    upto = _checked_upto(model, upto_rank)
    return np.cumsum(_term_stack(img, model, model.rank)[:upto], axis=0)


def debug_count_full(img_shape, filt_dims):
    """Dense count re-derived by literal loop increments (slow; tests only)."""
    h_out, w_out = valid_support(img_shape, filt_dims)
    n, m, l = filt_dims
    count = 0
    for _y in range(h_out):
        for _x in range(w_out):
            for _i in range(n):
                for _j in range(m):
                    for _k in range(l):
                        count += 1
    return count


def debug_count_cp(img_shape, filt_dims, rank):
    """Separable count re-derived by literal loop increments (tests only).

    Walks rank by rank and pass by pass (channel, rows, columns), adding one
    multiplication per kernel element per final-support position; the term
    weight rides along in the column pass and adds nothing.
    """
    h_out, w_out = valid_support(img_shape, filt_dims)
    n, m, l = filt_dims
    count = 0
    for _r in range(rank):
        for kernel in (l, n, m):
            for _y in range(h_out):
                for _x in range(w_out):
                    for _tap in range(kernel):
                        count += 1
    return count


def theoretical_gain(n, m, l, rank):
    """Multiplication-count ratio of dense over separable: nml / (R(n+m+l))."""
    if min(n, m, l, rank) < 1:
        raise ValidationError("extents and rank must be positive")
    return (n * m * l) / (rank * (n + m + l))


def _basis_model(filt_dims, rank):
    from .decomposition import CPModel

    n, m, l = filt_dims
    a = np.zeros((n, rank))
    b = np.zeros((m, rank))
    c = np.zeros((l, rank))
    for r in range(rank):
        a[r % n, r] = 1.0
        b[r % m, r] = 1.0
        c[r % l, r] = 1.0
    return CPModel(np.ones(rank), a, b, c)


def measured_gain(img_shape, filt_dims, rank):
    """Counter ratio from actually running both engines on the given geometry.

    Equals :func:`theoretical_gain` exactly under the pinned counting
    convention (the shared ``H'*W'`` position factor cancels).
    """
    img = np.zeros(img_shape)
    filt = np.zeros(filt_dims)
    dense = correlate3_full(img, filt)
    cp = correlate3_cp(img, _basis_model(filt_dims, rank))
    return dense.multiplications / cp.multiplications


def save_score_map(path, score_map, fmt="csv"):
    """Export a score map: CSV (row-major, 9 significant digits) or T3F
    with a single channel."""
    scores = score_map.scores if isinstance(score_map, ScoreMap) else score_map
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in scores:
                fh.write(",".join(f"{v:.9g}" for v in row))
                fh.write("\n")
    elif fmt == "t3f":
        from .tensor import save_t3f

        save_t3f(path, scores[:, :, np.newaxis])
    else:
        raise ValidationError(f"unknown score map format {fmt!r}")
