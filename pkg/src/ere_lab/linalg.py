"""Small dense matrix helpers.

Everything here operates on plain ``numpy`` arrays.  Functions that accept a
single matrix also accept a stack ``(..., r, c)`` unless stated otherwise.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NoConvergenceError, NotPositiveDefiniteError

#: Pivot threshold for the Cholesky-based positive definiteness certificate.
DELTA_NUM = 1e-12


def as_matrix(value, shape=None, name="matrix"):
    """Convert ``value`` to a finite 2-D float array.

    Scalars become ``1x1`` matrices and 1-D input becomes a single row, so
    that scalar problems can be written without nesting.
    """
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a matrix, got array of ndim {arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: empty matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def sym(m):
    """Symmetric part ``(M + M^T) / 2`` of a square matrix or stack."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def spectral_norm(m):
    """Largest singular value."""
    m = np.asarray(m, dtype=float)
    if m.ndim < 2:
        m = np.atleast_2d(m)
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def trace_norm(m):
    """Sum of singular values (nuclear norm)."""
    m = np.asarray(m, dtype=float)
    if m.ndim < 2:
        m = np.atleast_2d(m)
    return np.linalg.svd(m, compute_uv=False).sum(axis=-1)


def min_eigenvalue_sym(s):
    """Smallest eigenvalue of a symmetric matrix (or of each matrix in a stack)."""
    s = sym(s)
    try:
        w = np.linalg.eigvalsh(s)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergenceError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w[..., 0]


def max_eigenvalue_sym(s):
    s = sym(s)
    try:
        w = np.linalg.eigvalsh(s)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NoConvergenceError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w[..., -1]


def is_psd(s, tol=1e-10):
    """True if every eigenvalue of ``sym(s)`` is at least ``-tol``."""
    return bool(np.all(min_eigenvalue_sym(s) >= -tol))


def spd_solve(a, b, delta_num=DELTA_NUM):
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Parameters
    ----------
    a : array_like, shape (k, k) or (p, k, k)
        Symmetric matrix or stack; symmetrized before factorization.
    b : array_like, shape (k, r) or (p, k, r)
        Right-hand side(s).
    delta_num : float
        Minimum admissible squared Cholesky pivot.  A smaller pivot, or a
        failed factorization, is reported as loss of positive definiteness.

    Raises
    ------
    NotPositiveDefiniteError
        If the Cholesky certificate fails; for stacks ``where`` holds the
        index of the first failing matrix.
    """
    a = sym(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if a.ndim > 2:
        return _spd_solve_stack(a, b, delta_num)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite (Cholesky failed)",
            min_pivot=float(min_eigenvalue_sym(a)),
        ) from None
    pivots = np.diagonal(chol) ** 2
    if pivots.min() < delta_num:
        raise NotPositiveDefiniteError(
            f"Cholesky pivot {pivots.min():.3e} below threshold {delta_num:.1e}",
            min_pivot=float(pivots.min()),
        )
    y = solve_triangular(chol, b, lower=True)
    return solve_triangular(chol.T, y, lower=False)


def _spd_solve_stack(a, b, delta_num):
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        mins = min_eigenvalue_sym(a)
        bad = int(np.argmax(mins <= 0)) if np.any(mins <= 0) else int(np.argmin(mins))
        raise NotPositiveDefiniteError(
            f"matrix {bad} of stack is not positive definite (Cholesky failed)",
            min_pivot=float(mins[bad]),
            where=bad,
        ) from None
    pivots = np.diagonal(chol, axis1=-2, axis2=-1) ** 2
    low = pivots.min(axis=-1)
    if low.min() < delta_num:
        bad = int(np.argmax(low < delta_num))
        raise NotPositiveDefiniteError(
            f"Cholesky pivot {low[bad]:.3e} below threshold {delta_num:.1e} in matrix {bad} of stack",
            min_pivot=float(low[bad]),
            where=bad,
        )
    return np.linalg.solve(a, b)
