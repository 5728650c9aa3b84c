"""
Dense Complex Linear Algebra

Semantic wrappers around the factorizations used by the eigenmatrix
construction and the Prony/ESPRIT estimators. Every other module calls
these functions instead of touching scipy.linalg directly.
"""

import logging
from typing import NamedTuple, Sequence, Union

import numpy as np
import scipy.linalg as sl

from config import LSTSQ_THRESHOLD

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence]


class NumericalError(RuntimeError):
    """A factorization or numerical stage failed in a way callers must handle."""


class SvdResult(NamedTuple):
    """Thin SVD factors with A = u @ diag(s) @ vh and s nonincreasing."""
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray


def as_complex_matrix(A: ArrayLike, name: str = "matrix") -> np.ndarray:
    """Return A as a finite 2-D complex128 array."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def svd(A: ArrayLike) -> SvdResult:
    """
    Thin singular value decomposition.

    Uses the divide-and-conquer driver and falls back to the QR-iteration
    driver when it does not converge.

    Raises:
        NumericalError: if neither LAPACK driver converges.
    """
    A = as_complex_matrix(A)
    for driver in ("gesdd", "gesvd"):
        try:
            u, s, vh = sl.svd(A, full_matrices=False, lapack_driver=driver, check_finite=False)
            return SvdResult(u, s, vh)
        except (sl.LinAlgError, ValueError) as e:
            logger.warning(f"SVD driver {driver} failed on {A.shape} matrix: {e}")
    raise NumericalError(f"SVD did not converge for matrix of shape {A.shape}")


def pinv_from_svd(factors: SvdResult, threshold: float) -> np.ndarray:
    """
    Pseudoinverse from precomputed SVD factors.

    Singular values at or below threshold * s_1 are dropped; an all-zero
    spectrum gives the zero matrix.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    u, s, vh = factors
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((vh.shape[1], u.shape[0]), dtype=np.complex128)
    keep = s > threshold * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vh.conj().T * inv_s) @ u.conj().T


def pinv_thresholded(A: ArrayLike, threshold: float) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values cut relative to the largest one."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    return pinv_from_svd(svd(A), threshold)


def numerical_rank(s: np.ndarray, threshold: float) -> int:
    """Number of singular values above threshold * s_1."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > threshold * s[0]))


def eig(A: ArrayLike) -> np.ndarray:
    """
    Eigenvalues of a square matrix, with multiplicity, in no particular order.

    Raises:
        ValueError: if A is not square.
        NumericalError: if the QR algorithm does not converge.
    """
    A = as_complex_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"eig needs a square matrix, got shape {A.shape}")
    try:
        return sl.eigvals(A, check_finite=False)
    except sl.LinAlgError as e:
        raise NumericalError(f"eigenvalue computation did not converge: {e}") from e


def lstsq(A: ArrayLike, b: ArrayLike, threshold: float = LSTSQ_THRESHOLD) -> np.ndarray:
    """
    Minimum-norm least-squares solution of A x = b.

    The internal pseudoinverse drops singular values below threshold * s_1,
    which only guards against exact rank deficiency at the default.
    """
    A = as_complex_matrix(A)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: A has {A.shape[0]} rows, b has {b.shape[0]} entries")
    return pinv_thresholded(A, threshold) @ b


def companion_matrix(coeffs: ArrayLike) -> np.ndarray:
    """Companion matrix of c_0 + c_1 x + ... + c_n x^n (ascending, c_n != 0)."""
    c = np.asarray(coeffs, dtype=np.complex128)
    n = c.size - 1
    C = np.zeros((n, n), dtype=np.complex128)
    if n > 1:
        C[1:, :-1] = np.eye(n - 1)
    C[:, -1] = -c[:-1] / c[-1]
    return C


def poly_roots(coeffs: ArrayLike) -> np.ndarray:
    """
    Roots of a polynomial given by ascending coefficients.

    Trailing (highest-degree) zeros are trimmed first; the roots are the
    eigenvalues of the companion matrix.

    Raises:
        ValueError: for the zero polynomial or a constant.
    """
    c = np.atleast_1d(np.asarray(coeffs, dtype=np.complex128))
    nonzero = np.flatnonzero(c)
    if nonzero.size == 0:
        raise ValueError("cannot take roots of the zero polynomial")
    c = c[: nonzero[-1] + 1]
    if c.size < 2:
        raise ValueError("polynomial has degree 0, no roots")
    return eig(companion_matrix(c))


def spectral_norm(A: ArrayLike) -> float:
    """Largest singular value."""
    return float(sl.norm(np.asarray(A, dtype=np.complex128), 2))
