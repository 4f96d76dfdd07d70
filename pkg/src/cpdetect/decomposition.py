"""Canonical polyadic decomposition of order-3 tensors by alternating least
squares, plus rank selection and the Kruskal uniqueness check.

A decomposition is held as a :class:`CPModel`: unit-norm factor columns
``a_r, b_r, c_r`` and nonnegative weights, sorted by descending weight.  The
sort order is load-bearing: "the first ``i`` terms" of a model, used by the
pruning thresholds in :mod:`cpdetect.detection`, always means the ``i``
largest-weight terms.
"""

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .tensor import frobenius_norm, khatri_rao, unfold
from .validation import FormatError, NumericError, ValidationError, check_tensor3

__all__ = [
    "CPModel",
    "AlsOptions",
    "RankSelection",
    "cp_als",
    "reconstruct",
    "rank_scan",
    "select_rank",
    "max_feasible_rank",
    "break_even_rank",
    "k_rank",
    "kruskal_uniqueness_holds",
    "save_cpf",
    "load_cpf",
    "CPF_MAGIC",
    "CPDecomposition",
]

CPF_MAGIC = b"CPF1"

_RIDGE_SCALE = 1e-10
_WARM_SEED_TAG = 0x5741524D  # disambiguates the warm-start rng stream


@dataclass(frozen=True)
class CPModel:
    """Rank-R sum of vector outer products with explicit term weights.

    ``factors_a/b/c`` have shape ``(n, R)``, ``(m, R)``, ``(l, R)``; every
    column has unit Euclidean norm and ``weights`` (all nonnegative, the
    column norms absorbed at construction) are sorted descending, ties
    keeping their original column order.
    """

    weights: np.ndarray
    factors_a: np.ndarray
    factors_b: np.ndarray
    factors_c: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("weights must be a non-empty 1-D array")
        r = w.size
        for name, f in (
            ("factors_a", self.factors_a),
            ("factors_b", self.factors_b),
            ("factors_c", self.factors_c),
        ):
            f = np.asarray(f, dtype=np.float64)
            if f.ndim != 2 or f.shape[1] != r:
                raise ValidationError(f"{name} must have {r} columns")
            if not np.isfinite(f).all():
                raise ValidationError(f"{name} contains non-finite values")
            norms = np.linalg.norm(f, axis=0)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValidationError(f"{name} columns must have unit norm")
            object.__setattr__(self, name, f)
        absw = np.abs(w)
        if np.any(absw[1:] > absw[:-1] + 1e-15):
            raise ValidationError("weights must be sorted by descending magnitude")
        object.__setattr__(self, "weights", w)

    @property
    def rank(self):
        return int(self.weights.size)

    @property
    def dims(self):
        return (
            self.factors_a.shape[0],
            self.factors_b.shape[0],
            self.factors_c.shape[0],
        )

    @classmethod
    def from_factors(cls, a, b, c, weights=None):
        """Canonicalize raw factor matrices into a :class:`CPModel`.

        Column norms are absorbed into the weights, zero columns become unit
        basis vectors with weight zero, and terms are sorted by descending
        weight (stable, so ties keep their input order).
        """
        a = np.array(a, dtype=np.float64, copy=True)
        b = np.array(b, dtype=np.float64, copy=True)
        c = np.array(c, dtype=np.float64, copy=True)
        if a.ndim != 2 or b.ndim != 2 or c.ndim != 2:
            raise ValidationError("factors must be matrices")
        r = a.shape[1]
        if b.shape[1] != r or c.shape[1] != r:
            raise ValidationError("factor column counts differ")
        w = np.ones(r) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (r,):
            raise ValidationError(f"weights must have shape ({r},)")
        for f in (a, b, c):
            norms = np.linalg.norm(f, axis=0)
            w = w * norms
            safe = np.where(norms == 0.0, 1.0, norms)
            f /= safe
            for j in np.flatnonzero(norms == 0.0):
                f[:, j] = 0.0
                f[0, j] = 1.0
        # negative input weights fold their sign into the c factor
        neg = w < 0
        c[:, neg] *= -1.0
        w = np.abs(w)
        order = np.argsort(-w, kind="stable")
        return cls(w[order], a[:, order], b[:, order], c[:, order])


def reconstruct(model):
    """Sum of the model's weighted rank-1 terms as a dense tensor."""
    return np.einsum(
        "r,ir,jr,kr->ijk",
        model.weights,
        model.factors_a,
        model.factors_b,
        model.factors_c,
    )


@dataclass(frozen=True)
class AlsOptions:
    """Knobs for a single decomposition run.

    ``tolerance`` is relative to the Frobenius norm of the input tensor;
    iteration stops once the residual drops below ``tolerance * ||t||_F`` or
    after ``max_iterations`` full sweeps.  ``restarts`` counts random
    re-initializations beyond the first, so ``restarts + 1`` independent
    runs happen in total; run ``k`` draws from a generator seeded with
    ``(seed, k)``, which makes results reproducible bit for bit.
    """

    max_iterations: int = 200
    tolerance: float = 1e-6
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be > 0")
        if self.restarts < 0:
            raise ValidationError("restarts must be >= 0")


def max_feasible_rank(dims):
    """Largest rank whose ALS subproblems are all overdetermined."""
    n, m, l = dims
    return min(n * m, n * l, m * l)


def break_even_rank(dims):
    """Rank at which separable evaluation stops being cheaper: ceil(nml / (n+m+l))."""
    n, m, l = dims
    return -((n * m * l) // -(n + m + l))


def _random_factors(rng, dims, rank):
    factors = []
    for d in dims:
        f = rng.uniform(-1.0, 1.0, size=(d, rank))
        norms = np.linalg.norm(f, axis=0)
        norms[norms == 0.0] = 1.0
        factors.append(f / norms)
    return factors


def _solve_factor(unfolded, x, y, rank):
    """Least-squares update A = T_(k) Z (Z'Z)^-1 with Z = khatri_rao(x, y)."""
    z = khatri_rao(x, y)
    gram = (x.T @ x) * (y.T @ y)
    rhs = unfolded @ z
    try:
        out = np.linalg.solve(gram, rhs.T).T
        if not np.isfinite(out).all():
            raise np.linalg.LinAlgError
        return out
    except np.linalg.LinAlgError:
        ridge = _RIDGE_SCALE * np.trace(gram)
        if not ridge > 0:
            ridge = _RIDGE_SCALE
        gram = gram + ridge * np.eye(rank)
        try:
            out = np.linalg.solve(gram, rhs.T).T
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericError("factor update failed even with ridge") from exc
        if not np.isfinite(out).all():  # pragma: no cover
            raise NumericError("factor update produced non-finite values")
        return out


def _objective(t, a, b, c):
    recon = np.einsum("ir,jr,kr->ijk", a, b, c)
    return float(np.sqrt(np.einsum("ijk,ijk->", t - recon, t - recon)))


def _rebalance(a, b, c):
    """Normalize a and b columns, pushing all scale into c."""
    for f in (a, b):
        norms = np.linalg.norm(f, axis=0)
        safe = np.where(norms == 0.0, 1.0, norms)
        f /= safe
        c *= norms


def _als_single_run(t, unfoldings, rank, init, max_iterations, tol_abs, trace):
    a = np.array(init[0], dtype=np.float64, copy=True)
    b = np.array(init[1], dtype=np.float64, copy=True)
    c = np.array(init[2], dtype=np.float64, copy=True)
    objective = _objective(t, a, b, c)
    if trace is not None:
        trace.append(objective)
    sweeps = 0
    while objective >= tol_abs and sweeps < max_iterations:
        a = _solve_factor(unfoldings[0], b, c, rank)
        if trace is not None:
            trace.append(_objective(t, a, b, c))
        b = _solve_factor(unfoldings[1], a, c, rank)
        if trace is not None:
            trace.append(_objective(t, a, b, c))
        c = _solve_factor(unfoldings[2], a, b, rank)
        objective = _objective(t, a, b, c)
        if trace is not None:
            trace.append(objective)
        _rebalance(a, b, c)
        sweeps += 1
    return a, b, c, sweeps


def cp_als(t, rank, opts=None, *, initial_factors=None, traces=None):
    """Best-of-restarts rank-``rank`` CP decomposition of ``t``.

    Parameters
    ----------
    t : ndarray, shape (n, m, l)
    rank : int
        Number of rank-1 terms; must not exceed :func:`max_feasible_rank`.
    opts : AlsOptions, optional
    initial_factors : (a, b, c) triple of matrices, optional
        Extra warm-start candidate tried before the random restarts.
    traces : list, optional
        If given, one list per run is appended containing the Frobenius
        objective after every factor micro-update.

    Returns
    -------
    (CPModel, float)
        The lowest-residual model over all runs (ties go to the earliest
        run) and its residual, recomputed exactly from the returned model.
    """
    t = check_tensor3(t)
    opts = opts or AlsOptions()
    if rank < 1:
        raise ValidationError(f"rank must be >= 1, got {rank}")
    feasible = max_feasible_rank(t.shape)
    if rank > feasible:
        raise ValidationError(
            f"rank {rank} exceeds the feasible maximum {feasible} for extents {t.shape}"
        )
    unfoldings = (unfold(t, 0), unfold(t, 1), unfold(t, 2))
    norm_t = frobenius_norm(t)
    tol_abs = opts.tolerance * norm_t if norm_t > 0 else np.finfo(np.float64).tiny

    inits = []
    if initial_factors is not None:
        a0, b0, c0 = initial_factors
        if (
            a0.shape != (t.shape[0], rank)
            or b0.shape != (t.shape[1], rank)
            or c0.shape != (t.shape[2], rank)
        ):
            raise ValidationError("initial_factors have wrong shapes for this rank")
        inits.append((a0, b0, c0))
    for k in range(opts.restarts + 1):
        rng = np.random.default_rng([opts.seed, k])
        inits.append(_random_factors(rng, t.shape, rank))

    best = None
    for run_index, init in enumerate(inits):
        trace = [] if traces is not None else None
        a, b, c, _ = _als_single_run(
            t, unfoldings, rank, init, opts.max_iterations, tol_abs, trace
        )
        if traces is not None:
            traces.append(trace)
        model = CPModel.from_factors(a, b, c)
        residual = frobenius_norm(t - reconstruct(model))
        if best is None or residual < best[0]:
            best = (residual, run_index, model)
    return best[2], best[0]


def _warm_init(model, rank, rng):
    """Previous solution padded to ``rank`` columns: weights fold back into
    the a factor, the extra a column is zero so the starting reconstruction
    is unchanged, and b/c get fresh random unit columns."""
    extra = rank - model.rank
    a = model.factors_a * model.weights[np.newaxis, :]
    b = model.factors_b
    c = model.factors_c
    n, m, l = model.dims
    a = np.hstack([a, np.zeros((n, extra))])
    rb, rc = _random_factors(rng, (m, l), extra)
    return a, np.hstack([b, rb]), np.hstack([c, rc])


def rank_scan(t, max_rank, opts=None, min_rank=1):
    """Yield ``(rank, model, residual)`` for ranks ``min_rank..max_rank``.

    Each rank warm-starts from the previous best solution padded with one
    extra term, in addition to the usual random restarts, which makes the
    per-rank residuals non-increasing up to floating-point noise.
    """
    t = check_tensor3(t)
    opts = opts or AlsOptions()
    previous = None
    for rank in range(min_rank, max_rank + 1):
        initial = None
        if previous is not None and previous.rank == rank - 1:
            rng = np.random.default_rng([opts.seed, rank, _WARM_SEED_TAG])
            initial = _warm_init(previous, rank, rng)
        model, residual = cp_als(t, rank, opts, initial_factors=initial)
        previous = model
        yield rank, model, residual


@dataclass(frozen=True)
class RankSelection:
    """Outcome of a minimal-rank search."""

    rank: int
    criterion_met: bool
    residuals: tuple = field(default=())


def select_rank(t, e, opts=None, *, criterion="scaled", max_rank=None):
    """Smallest rank whose residual passes the selection criterion.

    With ``criterion="scaled"`` the test is::

        ||t - CP(t, r)||_F  <  e * (r * (n+m+l) / (n*m*l)) ** 2

    i.e. ``e`` is scaled by the squared inverse of the rank-``r`` gain.
    ``criterion="relative"`` uses the plain test
    ``residual < e * ||t||_F`` instead.  Ranks are scanned upward with warm
    starts; if no rank up to ``max_rank`` (default: the break-even rank)
    qualifies, the scan's last rank is returned with ``criterion_met=False``.
    """
    t = check_tensor3(t)
    if not e > 0:
        raise ValidationError("e must be > 0")
    if criterion not in ("scaled", "relative"):
        raise ValidationError(f"unknown criterion {criterion!r}")
    n, m, l = t.shape
    if max_rank is None:
        max_rank = break_even_rank(t.shape)
    max_rank = max(1, min(max_rank, max_feasible_rank(t.shape)))
    norm_t = frobenius_norm(t)
    residuals = []
    for rank, _, residual in rank_scan(t, max_rank, opts):
        residuals.append(residual)
        if criterion == "scaled":
            bound = e * (rank * (n + m + l) / (n * m * l)) ** 2
        else:
            bound = e * norm_t
        if residual < bound:
            return RankSelection(rank, True, tuple(residuals))
    return RankSelection(max_rank, False, tuple(residuals))


def k_rank(matrix, tol=None):
    """Kruskal rank: the largest ``r`` such that every subset of ``r``
    columns is linearly independent, found by exhaustive subset tests."""
    m = np.asarray(matrix, dtype=np.float64)
    cols = m.shape[1]
    best = 0
    for r in range(1, cols + 1):
        if r > m.shape[0]:
            break
        all_independent = all(
            np.linalg.matrix_rank(m[:, list(subset)], tol=tol) == r
            for subset in itertools.combinations(range(cols), r)
        )
        if not all_independent:
            break
        best = r
    return best


def kruskal_uniqueness_holds(model):
    """Whether the decomposition is essentially unique.

    Applies the sufficient condition ``R <= (k_A + k_B + k_C) / 2 - 1`` on
    the factor k-ranks.  A single-term expansion is unique regardless (the
    inequality itself evaluates false at R=1), so rank 1 returns True.
    """
    if model.rank == 1:
        return True
    ka = k_rank(model.factors_a)
    kb = k_rank(model.factors_b)
    kc = k_rank(model.factors_c)
    return model.rank <= 0.5 * (ka + kb + kc) - 1.0


def save_cpf(path, model):
    """Write a CPModel in the CPF interchange format.

    Layout: magic ``CPF1``; uint32 R; uint32 extents n, m, l; R float64
    weights; then the a, b, c factor matrices as row-major float32 blocks.
    All integers and floats are little-endian.  Factors are truncated from
    float64 to float32 on write.
    """
    n, m, l = model.dims
    with open(path, "wb") as fh:
        fh.write(CPF_MAGIC)
        fh.write(struct.pack("<IIII", model.rank, n, m, l))
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        for f in (model.factors_a, model.factors_b, model.factors_c):
            fh.write(np.ascontiguousarray(f, dtype="<f4").tobytes())


def load_cpf(path):
    """Read a CPF file back into a :class:`CPModel`.

    Factor blocks widen from float32 to float64; columns are re-normalized
    (the tiny truncation drift folds into the weights) so the model
    invariants hold exactly after loading.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CPF_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected {CPF_MAGIC!r}")
    if len(data) < 20:
        raise FormatError(f"{path}: truncated header at byte {len(data)}")
    rank, n, m, l = struct.unpack_from("<IIII", data, 4)
    if rank < 1 or min(n, m, l) < 1:
        raise FormatError(f"{path}: non-positive rank or extent at byte 4")
    offset = 20
    need = 8 * rank
    if len(data) < offset + need:
        raise FormatError(f"{path}: weights end at byte {len(data)}, "
                          f"expected {offset + need}")
    weights = np.frombuffer(data, dtype="<f8", count=rank, offset=offset).astype(
        np.float64
    )
    offset += need
    factors = []
    for rows in (n, m, l):
        need = 4 * rows * rank
        if len(data) < offset + need:
            raise FormatError(
                f"{path}: factor block ends at byte {len(data)}, expected {offset + need}"
            )
        block = np.frombuffer(data, dtype="<f4", count=rows * rank, offset=offset)
        factors.append(block.astype(np.float64).reshape(rows, rank))
        offset += need
    if len(data) != offset:
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    return CPModel.from_factors(*factors, weights=weights)


class CPDecomposition(BaseEstimator):
    """Estimator wrapper around :func:`cp_als` / :func:`select_rank`.

    Parameters
    ----------
    rank : int or None
        Fixed decomposition rank.  ``None`` selects the smallest rank
        passing the ``select_e`` criterion.
    select_e : float
        Threshold scale used when ``rank`` is None.
    criterion : {"scaled", "relative"}
        Rank-selection criterion, see :func:`select_rank`.
    max_iterations, tolerance, restarts, seed :
        Passed through to :class:`AlsOptions`.

    Attributes
    ----------
    model_ : CPModel
    residual_ : float
    rank_ : int
    criterion_met_ : bool (only when rank selection ran)
    """

    def __init__(
        self,
        rank=None,
        select_e=1e-3,
        criterion="scaled",
        max_iterations=200,
        tolerance=1e-6,
        restarts=5,
        seed=0,
    ):
        self.rank = rank
        self.select_e = select_e
        self.criterion = criterion
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.restarts = restarts
        self.seed = seed

    def _options(self):
        return AlsOptions(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            restarts=self.restarts,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        t = check_tensor3(X)
        opts = self._options()
        if self.rank is None:
            selection = select_rank(t, self.select_e, opts, criterion=self.criterion)
            rank = selection.rank
            self.criterion_met_ = selection.criterion_met
        else:
            rank = self.rank
        self.model_, self.residual_ = cp_als(t, rank, opts)
        self.rank_ = self.model_.rank
        return self

    def reconstruct(self):
        if not hasattr(self, "model_"):
            raise ValidationError("CPDecomposition is not fitted yet")
        return reconstruct(self.model_)
