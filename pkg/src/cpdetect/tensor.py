"""Dense order-3 tensor algebra: outer products, norms, matricization.

Conventions
-----------
Tensors are float64 numpy arrays of shape ``(n, m, l)`` in axis-major layout
(axis 0 slowest, axis 2 fastest).  The mode-``k`` unfolding has one row per
index along axis ``k``; its columns run over the remaining axes in ascending
order with the last of them varying fastest.  ``khatri_rao`` flattens
columnwise outer products with the same ordering, so for factor matrices
``A, B, C``::

    unfold(T, 0) == A @ khatri_rao(B, C).T
    unfold(T, 1) == B @ khatri_rao(A, C).T
    unfold(T, 2) == C @ khatri_rao(A, B).T

whenever ``T`` is the sum of the factor columns' outer products.
"""

import struct

import numpy as np

from .validation import FormatError, ValidationError, check_matrix, check_tensor3, check_vector

__all__ = [
    "outer3",
    "frobenius_norm",
    "tensor_sub",
    "unfold",
    "refold",
    "khatri_rao",
    "save_t3f",
    "load_t3f",
    "T3F_MAGIC",
]

T3F_MAGIC = b"T3F1"


def outer3(a, b, c):
    """Outer product of three vectors: ``out[i, j, k] = a[i] * b[j] * c[k]``."""
    a = check_vector(a, "a")
    b = check_vector(b, "b")
    c = check_vector(c, "c")
    return np.einsum("i,j,k->ijk", a, b, c)


def frobenius_norm(t):
    """Frobenius norm: square root of the sum of squared entries."""
    t = check_tensor3(t)
    return float(np.sqrt(np.einsum("ijk,ijk->", t, t)))


def tensor_sub(x, y):
    """Elementwise difference of two tensors with identical extents."""
    x = check_tensor3(x, "x")
    y = check_tensor3(y, "y")
    if x.shape != y.shape:
        raise ValidationError(f"extent mismatch: {x.shape} vs {y.shape}")
    return x - y


def unfold(t, mode):
    """Mode-``mode`` unfolding of an order-3 tensor.

    Parameters
    ----------
    t : ndarray, shape (n, m, l)
    mode : {0, 1, 2}
        Axis whose indices become rows.

    Returns
    -------
    ndarray, shape (extent[mode], product of the other extents)
        Columns run over the remaining axes in ascending order, the last
        one varying fastest.
    """
    t = check_tensor3(t)
    if mode not in (0, 1, 2):
        raise ValidationError(f"mode must be 0, 1 or 2, got {mode!r}")
    moved = np.moveaxis(t, mode, 0)
    return np.ascontiguousarray(moved.reshape(t.shape[mode], -1))


def refold(mat, mode, dims):
    """Inverse of :func:`unfold`: rebuild the tensor of extents ``dims``."""
    mat = check_matrix(mat, "unfolded matrix")
    if mode not in (0, 1, 2):
        raise ValidationError(f"mode must be 0, 1 or 2, got {mode!r}")
    n, m, l = dims
    if n * m * l != mat.size:
        raise ValidationError(
            f"cannot refold {mat.shape} into extents {tuple(dims)}"
        )
    rest = tuple(d for k, d in enumerate((n, m, l)) if k != mode)
    moved = mat.reshape((dims[mode],) + rest)
    return np.ascontiguousarray(np.moveaxis(moved, 0, mode))


def khatri_rao(x, y):
    """Columnwise Khatri-Rao product.

    Column ``j`` of the result is the flattened outer product of column ``j``
    of ``x`` with column ``j`` of ``y`` (``x`` index slower), matching the
    column ordering of :func:`unfold`.
    """
    x = check_matrix(x, "x")
    y = check_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValidationError(
            f"column count mismatch: {x.shape[1]} vs {y.shape[1]}"
        )
    p, r = x.shape
    q, _ = y.shape
    return (x[:, np.newaxis, :] * y[np.newaxis, :, :]).reshape(p * q, r)


def save_t3f(path, t):
    """Write a tensor in the T3F interchange format.

    Layout: magic ``T3F1``, three little-endian uint32 extents ``(n, m, l)``,
    then ``n*m*l`` little-endian IEEE-754 float32 values in axis-major order.
    Values are truncated from float64 to float32 on write.
    """
    t = check_tensor3(t)
    n, m, l = t.shape
    with open(path, "wb") as fh:
        fh.write(T3F_MAGIC)
        fh.write(struct.pack("<III", n, m, l))
        fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_t3f(path):
    """Read a T3F file, widening the float32 payload to float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != T3F_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected {T3F_MAGIC!r}")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header at byte {len(data)}")
    n, m, l = struct.unpack_from("<III", data, 4)
    if min(n, m, l) < 1:
        raise FormatError(f"{path}: non-positive extent in header at byte 4")
    expected = 16 + 4 * n * m * l
    if len(data) != expected:
        raise FormatError(
            f"{path}: payload ends at byte {len(data)}, expected {expected}"
        )
    flat = np.frombuffer(data, dtype="<f4", count=n * m * l, offset=16)
    t = flat.astype(np.float64).reshape(n, m, l)
    return check_tensor3(t, path)
