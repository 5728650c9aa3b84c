"""
Eigenmatrix Construction

Builds the data-driven matrix M = G_hat Lambda G_hat^+ whose approximate
eigenpairs are (x, g(x)) for x in the reference domain, and reports the
diagnostics used to judge it: the eigen-residual, the condition number of
G_hat and the achieved spectral norm.

G_hat is assembled column by column in probe-grid order; column t is the
normalized kernel vector at phi(a_t). Lambda holds the reference-domain
nodes a_t, so estimates coming out of M are in reference coordinates.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config import CONDITION_LIMIT, DEFAULT_NORM_BOUND, NORM_BOUND_SLACK, THRESHOLD_LADDER
from domains import DomainMap, ProbeGrid, ReferenceDomain, map_forward, probe_grid
from kernels import KernelFunction, SampleSet, assemble_matrix, normalize_columns
from numerics import NumericalError, SvdResult, numerical_rank, pinv_from_svd, spectral_norm, svd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Eigenmatrix:
    """M together with the metadata of its construction."""

    matrix: np.ndarray
    grid: ProbeGrid
    threshold_used: float
    norm_M: float
    cond_Ghat: float
    norm_bound: float
    rank: int
    singular_values: np.ndarray = field(repr=False)

    @property
    def n_s(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_a(self) -> int:
        return self.grid.n_a

    def metadata(self) -> Dict:
        """Scalar build metadata, JSON-ready."""
        return {
            "n_s": self.n_s,
            "n_a": self.n_a,
            "grid_kind": self.grid.kind,
            "threshold_used": self.threshold_used,
            "norm_M": self.norm_M,
            "norm_bound": self.norm_bound,
            "cond_Ghat": _finite_or_none(self.cond_Ghat),
            "rank": self.rank,
        }


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def _pairs(values: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.ravel(values)]


def _from_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def probe_matrix(k: KernelFunction, S: SampleSet, d: ReferenceDomain, m: DomainMap,
                 n_a: int) -> Tuple[ProbeGrid, np.ndarray]:
    """
    Probe grid and G_hat (n_s x n_a), columns g_hat(phi(a_t)).

    Raises:
        ValueError: if a kernel vector vanishes at some phi(a_t).
    """
    grid = probe_grid(d, n_a)
    x_nodes = map_forward(m, grid.nodes)
    G = assemble_matrix(k, S, x_nodes)
    if not np.all(np.isfinite(G)):
        raise ValueError("probe matrix has non-finite entries")
    return grid, normalize_columns(G, x_nodes)


def _condition(factors: SvdResult, shape: Tuple[int, int]) -> float:
    s = factors.s
    n_s, n_a = shape
    if n_a > n_s or s[0] == 0.0:
        return float("inf")
    if s[-1] <= np.finfo(float).eps * max(shape) * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def build(k: KernelFunction, S: SampleSet, d: ReferenceDomain, m: DomainMap,
          n_a: int, norm_bound: float = DEFAULT_NORM_BOUND,
          ladder: Sequence[float] = THRESHOLD_LADDER) -> Eigenmatrix:
    """
    Build M = G_hat Lambda G_hat^+ with the smallest ladder threshold keeping ||M||_2 <= norm_bound.

    Raises:
        ValueError: if G_hat has a zero column.
        NumericalError: if no ladder threshold achieves the norm bound.
    """
    if n_a < 1:
        raise ValueError(f"n_a must be >= 1, got {n_a}")
    grid, G_hat = probe_matrix(k, S, d, m, n_a)
    factors = svd(G_hat)
    cond = _condition(factors, G_hat.shape)
    scaled = G_hat * grid.nodes[None, :]

    best_norm = float("inf")
    for threshold in sorted(ladder):
        M = scaled @ pinv_from_svd(factors, threshold)
        norm = spectral_norm(M)
        best_norm = min(best_norm, norm)
        if norm <= norm_bound + NORM_BOUND_SLACK:
            rank = numerical_rank(factors.s, threshold)
            logger.info(f"Eigenmatrix built: n_s={S.n_s}, n_a={n_a}, threshold={threshold:g}, "
                        f"rank={rank}, ||M||={norm:.4g}, cond={cond:.3g}")
            M.setflags(write=False)
            return Eigenmatrix(matrix=M, grid=grid, threshold_used=float(threshold), norm_M=norm,
                               cond_Ghat=cond, norm_bound=float(norm_bound), rank=rank,
                               singular_values=factors.s.copy())
        logger.debug(f"threshold {threshold:g}: ||M||={norm:.4g} exceeds bound {norm_bound}")

    raise NumericalError(f"no threshold in the ladder keeps ||M|| <= {norm_bound}; "
                         f"best achievable norm {best_norm:.6g}")


def residual_diagnostic(E: Eigenmatrix, k: KernelFunction, S: SampleSet, m: DomainMap,
                        test_points: Sequence[complex], rows: Optional[slice] = None) -> float:
    """
    max_t ||M g_hat(phi(t)) - t g_hat(phi(t))||_2 over reference-domain test points.

    ``rows`` restricts the residual to a subset of sample rows.
    """
    t = np.atleast_1d(np.asarray(test_points, dtype=np.complex128))
    if t.size == 0:
        return 0.0
    x = map_forward(m, t)
    Gn = normalize_columns(assemble_matrix(k, S, x), x)
    R = E.matrix @ Gn - Gn * t[None, :]
    if rows is not None:
        R = R[rows]
    return float(np.max(np.linalg.norm(R, axis=0)))


def condition_check(k: KernelFunction, S: SampleSet, d: ReferenceDomain, m: DomainMap, n_a: int) -> float:
    """s_1 / s_min of G_hat; +inf when the columns are numerically dependent."""
    _, G_hat = probe_matrix(k, S, d, m, n_a)
    return _condition(svd(G_hat), G_hat.shape)


def select_probe_count(k: KernelFunction, S: SampleSet, d: ReferenceDomain, m: DomainMap,
                       n_a: int, limit: float = CONDITION_LIMIT) -> int:
    """Largest n <= n_a with cond(G_hat) < limit."""
    for n in range(n_a, 0, -1):
        cond = condition_check(k, S, d, m, n)
        if cond < limit:
            if n < n_a:
                logger.info(f"n_a reduced from {n_a} to {n} (cond(G_hat)={cond:.3g} < {limit:g})")
            return n
    return 1


def shift_deviation(E: Eigenmatrix) -> Dict[str, float]:
    """
    Distance of M from the one-step shift on rows j < n_s - 1.

    superdiagonal: max |M[j, j+1] - 1|; off_pattern: max |M[j, k]| for k != j+1.
    """
    M = E.matrix
    n = M.shape[0]
    if n < 2:
        return {"superdiagonal": 0.0, "off_pattern": 0.0, "max": 0.0}
    head = M[:-1]
    j = np.arange(n - 1)
    superdiag = float(np.max(np.abs(head[j, j + 1] - 1.0)))
    mask = np.ones(head.shape, dtype=bool)
    mask[j, j + 1] = False
    off = float(np.max(np.abs(head[mask])))
    return {"superdiagonal": superdiag, "off_pattern": off, "max": max(superdiag, off)}


def interior_points(d: ReferenceDomain, count: int, radius: float = 0.9, seed: int = 0) -> np.ndarray:
    """Deterministic random test points strictly inside the reference domain."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if d.kind == "disk":
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
        return r * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, count))
    return rng.uniform(-radius, radius, count).astype(np.complex128)


def to_dict(E: Eigenmatrix) -> Dict:
    """JSON-ready form; complex entries as [re, im] pairs at full precision."""
    data = E.metadata()
    data["grid_nodes"] = _pairs(E.grid.nodes)
    data["singular_values"] = [float(v) for v in E.singular_values]
    data["matrix"] = [_pairs(row) for row in E.matrix]
    return data


def from_dict(data: Dict) -> Eigenmatrix:
    """Inverse of to_dict."""
    nodes = _from_pairs(data["grid_nodes"]).astype(np.complex128)
    matrix = _from_pairs(data["matrix"]).astype(np.complex128).reshape(data["n_s"], data["n_s"])
    cond = data.get("cond_Ghat")
    return Eigenmatrix(
        matrix=matrix,
        grid=ProbeGrid(nodes=nodes, kind=data["grid_kind"]),
        threshold_used=float(data["threshold_used"]),
        norm_M=float(data["norm_M"]),
        cond_Ghat=float("inf") if cond is None else float(cond),
        norm_bound=float(data["norm_bound"]),
        rank=int(data["rank"]),
        singular_values=np.asarray(data["singular_values"], dtype=np.float64),
    )
