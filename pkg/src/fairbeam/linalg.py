"""Minimal complex linear algebra for the closed-form beamformers.

Channel vectors and beamformers are plain 1-D complex ndarrays; the
leakage-plus-noise matrices are Hermitian positive definite, so a
Cholesky factorization is all we ever need. Everything here runs in
double precision: these routines back the evaluation oracles and must
be tighter than the single-precision learner.
"""

import numpy as np


class FactorizationError(ArithmeticError):
    """Raised when a Cholesky pivot is not strictly positive."""


def hdot(a: np.ndarray, b: np.ndarray) -> complex:
    """Hermitian inner product sum(conj(a_i) * b_i)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"hdot requires equal-length vectors, got {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def rank1_accumulate(vectors, weights, ridge: float, dim: int | None = None) -> np.ndarray:
    """Build sum_l w_l * v_l v_l^H + ridge * I.

    Parameters
    ----------
    vectors : sequence of length-n complex vectors (may be empty)
    weights : nonnegative reals, one per vector
    ridge : nonnegative diagonal loading (noise variance)
    dim : matrix dimension; required when `vectors` is empty, otherwise
        inferred from the first vector

    The result is exactly Hermitian by construction: each outer product
    v v^H is Hermitian to the last bit and sums of Hermitian matrices
    stay Hermitian elementwise.
    """
    vectors = [np.asarray(v, dtype=np.complex128) for v in vectors]
    if len(weights) != len(vectors):
        raise ValueError(f"{len(vectors)} vectors but {len(weights)} weights")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    if vectors:
        n = vectors[0].shape[0]
        if dim is not None and dim != n:
            raise ValueError(f"dim={dim} disagrees with vector length {n}")
    elif dim is None:
        raise ValueError("dim is required when the vector list is empty")
    else:
        n = dim
    a = np.zeros((n, n), dtype=np.complex128)
    for w, v in zip(weights, vectors):
        if v.shape != (n,):
            raise ValueError(f"vector of shape {v.shape}, expected ({n},)")
        a += w * np.outer(v, v.conj())
    a[np.diag_indices(n)] += ridge
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^H = a, for Hermitian positive definite a.

    Raises FactorizationError naming the offending pivot index if a
    pivot is nonpositive; for sigma^2 > 0 the leakage matrices are
    always PD, so a failure here signals a caller bug.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j].real - np.sum(np.abs(low[j, :j]) ** 2)
        if not (pivot > 0.0) or not np.isfinite(pivot):
            raise FactorizationError(f"non-positive-definite pivot at index {j}: {pivot!r}")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j].conj()) / low[j, j]
    return low


def solve_cholesky(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L L^H x = b given the lower factor L (forward then back substitution)."""
    n = low.shape[0]
    y = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        y[i] = (b[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.zeros(n, dtype=np.complex128)
    lh = low.conj().T
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - lh[i, i + 1:] @ x[i + 1:]) / lh[i, i]
    return x


def pd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for Hermitian positive definite a via Cholesky."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if b.ndim != 1 or a.shape != (b.shape[0], b.shape[0]):
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    return solve_cholesky(cholesky(a), b)
