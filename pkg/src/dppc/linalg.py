"""Dense real-matrix primitives.

Determinants go through LAPACK's partially pivoted LU (``numpy.linalg.det``);
positive-definiteness is decided by an explicit Cholesky sweep so that a
failure can name the offending pivot.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, SingularityError
from .subsets import as_members

PIVOT_TOL = 1e-12


def as_matrix(M, symmetric: bool = False) -> np.ndarray:
    """Validate and copy ``M`` as a finite float64 2-d array."""
    A = np.array(M, dtype=np.float64, copy=True)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError("matrix has non-finite entries")
    if symmetric:
        check_square(A)
        scale = np.maximum(1.0, np.abs(A))
        if np.any(np.abs(A - A.T) > 1e-12 * scale):
            raise DimensionError("matrix is not symmetric")
    return A


def check_square(M: np.ndarray) -> int:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M.shape[0]


def det(M) -> float:
    M = as_matrix(M)
    n = check_square(M)
    if n == 0:
        return 1.0
    return float(np.linalg.det(M))


def submatrix(M, S) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    n = check_square(M)
    idx = list(as_members(S, n))
    return M[np.ix_(idx, idx)]


def principal_minor_det(M, S) -> float:
    """``det(M_S)``; the empty minor is 1."""
    return det(submatrix(M, S))


def cholesky(M, tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower-triangular ``C`` with ``C @ C.T == M``.

    Raises :class:`SingularityError` carrying the first pivot ``<= tol``.
    """
    A = as_matrix(M, symmetric=True)
    n = A.shape[0]
    C = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - C[j, :j] @ C[j, :j]
        if not pivot > tol:
            raise SingularityError(
                f"matrix is not positive definite: pivot {j} is {pivot:.3g}", pivot=j
            )
        C[j, j] = np.sqrt(pivot)
        C[j + 1:, j] = (A[j + 1:, j] - C[j + 1:, :j] @ C[j, :j]) / C[j, j]
    return C


def is_psd(M, tol: float = 1e-9) -> bool:
    """PSD up to ``tol``: Cholesky of ``M + tol*I`` succeeds."""
    A = as_matrix(M, symmetric=True)
    try:
        cholesky(A + tol * np.eye(A.shape[0]), tol=0.0)
    except SingularityError:
        return False
    return True


def psd_inverse(M, tol: float = PIVOT_TOL) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its Cholesky factor."""
    C = cholesky(M, tol)
    n = C.shape[0]
    Cinv = _lower_triangular_solve(C, np.eye(n))
    inv = Cinv.T @ Cinv
    return (inv + inv.T) / 2


def _lower_triangular_solve(C: np.ndarray, B: np.ndarray) -> np.ndarray:
    X = np.zeros_like(B)
    for i in range(C.shape[0]):
        X[i] = (B[i] - C[i, :i] @ X[:i]) / C[i, i]
    return X


def adjugate(A) -> np.ndarray:
    """Classical adjoint by cofactors; O(n^5) but only used on singular inputs."""
    A = np.asarray(A, dtype=np.float64)
    n = check_square(A)
    if n == 1:
        return np.ones((1, 1))
    adj = np.empty_like(A)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(A, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * det(minor)
    return adj


def matrix_determinant_lemma(A, u, v) -> float:
    """``det(A + u v^T) = det(A) + v^T adj(A) u``."""
    A = np.asarray(A, dtype=np.float64)
    n = check_square(A)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != (n,) or v.shape != (n,):
        raise DimensionError(f"vectors of length {u.size}, {v.size} for a {n}x{n} matrix")
    if n == 0:
        return 1.0
    d = det(A)
    if abs(d) > 1e-12 * max(1.0, float(np.max(np.abs(A)))) ** n:
        return d * (1.0 + v @ np.linalg.solve(A, u))
    return d + v @ adjugate(A) @ u


def diag_perturbed_det(d) -> float:
    """Determinant of the matrix with diagonal ``d`` and every other entry 1.

    It equals ``prod(d_i - 1) + sum_i prod_{j != i}(d_j - 1)``; written as
    ``(D - I) + 1 1^T`` through the matrix determinant lemma.
    """
    e = np.asarray(d, dtype=np.float64).reshape(-1) - 1.0
    n = e.size
    if n == 0:
        return 1.0
    total = float(np.prod(e))
    for i in range(n):
        total += float(np.prod(np.delete(e, i)))
    return total
