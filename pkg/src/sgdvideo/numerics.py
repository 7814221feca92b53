"""Small dense complex-matrix helpers used by every rate formula."""
from __future__ import annotations

import numpy as np


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky factorization fails."""


def _as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def cholesky_pd(M) -> np.ndarray:
    """Lower Cholesky factor, raising :class:`NotPositiveDefiniteError` on failure."""
    A = _as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc


def gram_plus_identity(H) -> np.ndarray:
    """Return ``I + H H^H``; a matrix with zero columns yields the identity."""
    H = _as_matrix(H)
    return np.eye(H.shape[0], dtype=complex) + H @ H.conj().T


def logdet2_pd(M) -> float:
    """Base-2 log-determinant of a Hermitian positive-definite matrix."""
    if np.asarray(M).size == 0:
        return 0.0
    L = cholesky_pd(M)
    return float(2.0 * np.sum(np.log2(np.diag(L).real)))


def inverse_pd(M) -> np.ndarray:
    """Inverse of a Hermitian positive-definite matrix via Cholesky."""
    L = cholesky_pd(M)
    Linv = np.linalg.solve(L, np.eye(L.shape[0], dtype=complex))
    return Linv.conj().T @ Linv
