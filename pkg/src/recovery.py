"""
Spike Location and Weight Recovery

Prony (null vector + rootfinding) and ESPRIT (rotational invariance of the
row space) applied to the Krylov sequence [u, M u, ..., M^ell u] of the
eigenmatrix, least-squares weight recovery, and the classical Hankel-based
versions of both estimators for equispaced data.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from numpy.polynomial import polynomial as P

from config import ESPRIT_PINV_THRESHOLD, LSTSQ_THRESHOLD, RANK_WARNING_RATIO
from domains import ReferenceDomain, project_to_domain
from eigenmatrix import Eigenmatrix
from kernels import KernelFunction, SampleSet, assemble_matrix
from numerics import NumericalError, eig, lstsq, pinv_thresholded, poly_roots, svd

logger = logging.getLogger(__name__)

# Leading Prony coefficients below this fraction of the largest one are trimmed
PRONY_DEGREE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Observations:
    """Sample values u_j (or noisy u~_j) at the locations of a sample set."""

    values: np.ndarray
    samples: SampleSet

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=np.complex128))
        if vals.shape != (self.samples.n_s,):
            raise ValueError(f"expected {self.samples.n_s} observations, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observations must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class SpikeModel:
    """
    n_x pairs (x_k, w_k).

    Raw estimates may contain coalesced locations; ``is_distinct`` reports it.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        locs = np.atleast_1d(np.asarray(self.locations, dtype=np.complex128)).ravel()
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.complex128)).ravel()
        if locs.shape != w.shape:
            raise ValueError(f"{locs.size} locations but {w.size} weights")
        locs.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", w)

    @property
    def n_x(self) -> int:
        return int(self.locations.size)

    def is_distinct(self, tol: float = 0.0) -> bool:
        if self.n_x < 2:
            return True
        diff = np.abs(self.locations[:, None] - self.locations[None, :])
        np.fill_diagonal(diff, np.inf)
        return bool(np.min(diff) > tol)

    def to_dict(self) -> Dict:
        return {
            "locations": [[float(z.real), float(z.imag)] for z in self.locations],
            "weights": [[float(z.real), float(z.imag)] for z in self.weights],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SpikeModel":
        locs = [complex(p[0], p[1]) for p in data["locations"]]
        w = [complex(p[0], p[1]) for p in data["weights"]]
        return cls(np.array(locs, dtype=np.complex128), np.array(w, dtype=np.complex128))


@dataclass(frozen=True)
class LocationEstimate:
    """Reference-domain locations from Prony or ESPRIT plus any numerical flags."""

    locations: np.ndarray
    raw_eigenvalues: np.ndarray
    discarded: np.ndarray
    warnings: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class RecoveryResult:
    """Estimates before and after refinement, with the refinement objective values."""

    raw: SpikeModel
    refined: SpikeModel
    residual_raw: float
    residual_refined: float
    method: str
    eigenmatrix: Dict
    warnings: List[str] = field(default_factory=list)
    start: str = "eigenmatrix"

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "start": self.start,
            "raw": self.raw.to_dict(),
            "refined": self.refined.to_dict(),
            "residual_raw": self.residual_raw,
            "residual_refined": self.residual_refined,
            "eigenmatrix": self.eigenmatrix,
            "warnings": list(self.warnings),
        }


def default_ell(n_x: int, n_s: int) -> int:
    """max(n_x + 1, min(2 n_x, n_s - 1))."""
    return max(n_x + 1, min(2 * n_x, n_s - 1))


def krylov(E: Eigenmatrix, u: Observations, ell: int) -> np.ndarray:
    """[u, M u, ..., M^ell u] by repeated matrix-vector products."""
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    K = np.empty((u.values.size, ell + 1), dtype=np.complex128)
    K[:, 0] = u.values
    for i in range(1, ell + 1):
        K[:, i] = E.matrix @ K[:, i - 1]
    return K


def _finalize_locations(eigenvalues: np.ndarray, domain: ReferenceDomain,
                        warnings: List[str]) -> LocationEstimate:
    far = domain.far_outside(eigenvalues)
    if np.any(far):
        msg = f"discarded {int(np.sum(far))} eigenvalue(s) far outside the {domain.kind}: {eigenvalues[far]}"
        logger.warning(msg)
        warnings.append(msg)
    kept = eigenvalues[~far]
    projected = np.atleast_1d(project_to_domain(domain, kept)) if kept.size else kept
    return LocationEstimate(locations=np.asarray(projected, dtype=np.complex128),
                            raw_eigenvalues=eigenvalues, discarded=eigenvalues[far], warnings=warnings)


def prony_coefficients(K: np.ndarray) -> np.ndarray:
    """Least-squares null vector of K: right singular vector of the smallest singular value."""
    factors = svd(K)
    if factors.s[0] == 0.0:
        raise NumericalError("Krylov matrix is zero; data carry no information")
    return factors.vh[-1].conj()


def _roots_of_null_vector(p: np.ndarray, n_x: int, warnings: List[str]) -> np.ndarray:
    scale = np.max(np.abs(p))
    trimmed = p.copy()
    while trimmed.size > 1 and abs(trimmed[-1]) <= PRONY_DEGREE_TOLERANCE * scale:
        trimmed = trimmed[:-1]
    if trimmed.size - 1 < n_x:
        msg = f"Prony polynomial degree dropped from {n_x} to {trimmed.size - 1}"
        logger.warning(msg)
        warnings.append(msg)
    if trimmed.size < 2:
        return np.empty(0, dtype=np.complex128)
    return poly_roots(trimmed)


def prony_locations(E: Eigenmatrix, u: Observations, n_x: int,
                    domain: Optional[ReferenceDomain] = None) -> LocationEstimate:
    """
    Roots of the polynomial annihilating the Krylov sequence.

    Raises:
        NumericalError: if the observations are zero.
    """
    n_s = u.values.size
    if n_x < 1 or n_s <= n_x:
        raise ValueError(f"Prony needs 1 <= n_x < n_s, got n_x={n_x}, n_s={n_s}")
    domain = domain or ReferenceDomain(E.grid.kind)
    warnings: List[str] = []
    p = prony_coefficients(krylov(E, u, n_x))
    roots = _roots_of_null_vector(p, n_x, warnings)
    return _finalize_locations(roots, domain, warnings)


def rotational_eigenvalues(K: np.ndarray, n_x: int, warnings: List[str]) -> np.ndarray:
    """Eigenvalues of Z1 Z0^+ from the rank-n_x row space of K."""
    factors = svd(K)
    if factors.s[0] == 0.0:
        raise NumericalError("Krylov matrix is zero; data carry no information")
    if factors.s[n_x - 1] / factors.s[0] < RANK_WARNING_RATIO:
        msg = (f"rank deficiency: s_{n_x}/s_1 = {factors.s[n_x - 1] / factors.s[0]:.2e}; "
               f"n_x={n_x} is likely overestimated")
        logger.warning(msg)
        warnings.append(msg)
    Vh = factors.vh[:n_x]
    Z0 = Vh[:, :-1]
    Z1 = Vh[:, 1:]
    return eig(Z1 @ pinv_thresholded(Z0, ESPRIT_PINV_THRESHOLD))


def esprit_locations(E: Eigenmatrix, u: Observations, n_x: int, ell: Optional[int] = None,
                     domain: Optional[ReferenceDomain] = None) -> LocationEstimate:
    """
    ESPRIT on the eigenmatrix Krylov sequence.

    Raises:
        NumericalError: if the observations are zero.
    """
    n_s = u.values.size
    ell = default_ell(n_x, n_s) if ell is None else ell
    if n_x < 1 or ell <= n_x or n_s < n_x:
        raise ValueError(f"ESPRIT needs ell > n_x >= 1 and n_s >= n_x, got n_x={n_x}, ell={ell}, n_s={n_s}")
    domain = domain or ReferenceDomain(E.grid.kind)
    warnings: List[str] = []
    eigenvalues = rotational_eigenvalues(krylov(E, u, ell), n_x, warnings)
    return _finalize_locations(eigenvalues, domain, warnings)


def collocation_matrix(k: KernelFunction, S: SampleSet, locations: np.ndarray) -> np.ndarray:
    """n_s x n_x matrix [G(s_j, x_k)]."""
    return assemble_matrix(k, S, locations)


def recover_weights(k: KernelFunction, S: SampleSet, u: Observations, locations) -> np.ndarray:
    """Least-squares weights for fixed locations in X."""
    locations = np.atleast_1d(np.asarray(locations, dtype=np.complex128))
    if locations.size == 0:
        return np.empty(0, dtype=np.complex128)
    if locations.size > S.n_s:
        raise ValueError(f"cannot fit {locations.size} weights from {S.n_s} samples")
    A = collocation_matrix(k, S, locations)
    s = svd(A).s
    if s[0] == 0.0 or s[-1] <= LSTSQ_THRESHOLD * s[0]:
        logger.warning("collocation matrix is rank-deficient (coalesced locations); "
                       "returning the minimum-norm weights")
    return lstsq(A, u.values)


def hankel_matrix(u: np.ndarray, cols: int) -> np.ndarray:
    """Rows [u_j, ..., u_{j+cols-1}] for every j that fits."""
    u = np.asarray(u, dtype=np.complex128)
    rows = u.size - cols + 1
    if rows < 1:
        raise ValueError(f"need at least {cols} samples, got {u.size}")
    idx = np.arange(rows)[:, None] + np.arange(cols)[None, :]
    return u[idx]


def classical_prony(u, n_x: int) -> np.ndarray:
    """
    Prony's method on equispaced data u_j = sum_k w_k x_k^j.

    Solves the linear-prediction equations u_{j+n} = -sum_i c_i u_{j+i} in the
    least-squares sense and returns the roots of c_0 + c_1 z + ... + z^n.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.size < 2 * n_x:
        raise ValueError(f"need at least {2 * n_x} samples, got {u.size}")
    H = hankel_matrix(u, n_x + 1)
    c = np.linalg.lstsq(H[:, :n_x], -H[:, n_x], rcond=None)[0]
    return P.polyroots(np.concatenate([c, [1.0]]))


def classical_esprit(u, n_x: int, ell: Optional[int] = None) -> np.ndarray:
    """
    ESPRIT on equispaced data.

    The right singular vectors of the Hankel matrix with ell + 1 columns span the
    Vandermonde vectors [1, x_k, ..., x_k^ell]; shifting them by one entry
    multiplies by diag(x_k), so the nodes are the eigenvalues of pinv(V1) V2.
    """
    u = np.asarray(u, dtype=np.complex128)
    ell = default_ell(n_x, u.size) if ell is None else ell
    if not n_x < ell + 1 <= u.size:
        raise ValueError(f"need n_x < ell + 1 <= {u.size}, got n_x={n_x}, ell={ell}")
    H = hankel_matrix(u, ell + 1)
    _, _, Vh = np.linalg.svd(H)
    V = Vh[:n_x].T
    return np.linalg.eigvals(np.linalg.pinv(V[:-1]) @ V[1:])
