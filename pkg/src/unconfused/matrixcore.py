"""Dense linear algebra for small square matrices.

Matrices are plain float64 ndarrays in row-major order.  Square inputs here
are confusion-matrix sized (tens of rows at most), so a straightforward
Gauss-Jordan inversion with partial pivoting is both adequate and fully
transparent about its singularity threshold.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, SingularMatrixError

# Confusion matrices are scaled to [0, 1]; a pivot this small after column
# pivoting means rank deficiency, not bad scaling.
PIVOT_TOL = 1e-12


def as_matrix(entries) -> np.ndarray:
    """Return a validated 2-D float64 copy; rejects NaN and infinities."""
    m = np.array(entries, dtype=np.float64, order="C")
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise DimensionMismatchError("matrix entries must all be finite")
    return m


def as_vector(entries) -> np.ndarray:
    """Return a validated 1-D float64 copy; rejects NaN and infinities."""
    v = np.array(entries, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise DimensionMismatchError("vector entries must all be finite")
    return v


def invert(m) -> np.ndarray:
    """Invert a square matrix by Gauss-Jordan elimination with partial pivoting.

    Raises SingularMatrixError when the best pivot available in a column has
    magnitude below PIVOT_TOL.
    """
    a = as_matrix(m)
    n, ncols = a.shape
    if n != ncols:
        raise DimensionMismatchError(f"cannot invert a {n}x{ncols} matrix")
    inv = np.eye(n)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) < PIVOT_TOL:
            raise SingularMatrixError(
                f"pivot {abs(a[piv, col]):.3e} below {PIVOT_TOL:.0e} in column {col + 1}"
            )
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            inv[[col, piv]] = inv[[piv, col]]
        pivot = a[col, col]
        a[col] /= pivot
        inv[col] /= pivot
        factors = a[:, col].copy()
        factors[col] = 0.0
        a -= np.outer(factors, a[col])
        inv -= np.outer(factors, inv[col])
    return inv


def matmul(a, b) -> np.ndarray:
    """Exact textbook matrix product in double precision."""
    am = as_matrix(a)
    bm = as_matrix(b)
    if am.shape[1] != bm.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply {am.shape[0]}x{am.shape[1]} by {bm.shape[0]}x{bm.shape[1]}"
        )
    return am @ bm


def frobenius_norm(m) -> float:
    return float(np.sqrt(np.sum(np.asarray(m, dtype=np.float64) ** 2)))


def condition_estimate(m) -> float:
    """Cheap conditioning proxy: ||M||_F * ||M^-1||_F; +inf when inversion fails."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatchError("condition estimate needs a square matrix")
    try:
        inv = invert(a)
    except SingularMatrixError:
        return float("inf")
    return frobenius_norm(a) * frobenius_norm(inv)
