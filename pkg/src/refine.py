"""
Post-processing Refinement and Model-Order Selection

Polishes spike locations and weights by minimizing
sum_j |sum_k G(s_j, x_k) w_k - u_j|^2 with variable projection: the weights
are eliminated by an exact least-squares solve at every iterate and the
locations move by damped Gauss-Newton (Levenberg-Marquardt) steps using the
analytic x-derivative of the kernel.

Locations are parametrized in reference coordinates t with x = phi(t):
real t on the interval, complex t on the disk. Iterates leaving the
reference domain are projected back.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg as sl

from config import (
    DEFAULT_ESTIMATOR,
    ESTIMATORS,
    EXACT_FIT_LEVEL,
    LSTSQ_THRESHOLD,
    NOISE_ACCEPTANCE_FACTOR,
    REFINE_DAMPING_INIT,
    REFINE_GRADIENT_TOLERANCE,
    REFINE_MAX_ITERATIONS,
    REFINE_RESTARTS,
    REFINE_STEP_TOLERANCE,
)
from domains import DomainMap, ReferenceDomain, map_forward, map_inverse, probe_grid, project_to_domain
from eigenmatrix import Eigenmatrix
from kernels import Kernel, KernelFunction, KernelSingularityError, SampleSet, normalize_columns
from numerics import NumericalError, pinv_thresholded
from recovery import (
    Observations,
    RecoveryResult,
    SpikeModel,
    collocation_matrix,
    default_ell,
    esprit_locations,
    prony_locations,
    recover_weights,
)

logger = logging.getLogger(__name__)

# Objective at or below this fraction of ||u||^2 is an exact fit in floating point
_ROUNDING_FLOOR = 1e-28
_DAMPING_MAX = 1e16
_DAMPING_MIN = 1e-20
# A trial must beat the current objective by more than rounding to count as a decrease
_DECREASE_MARGIN = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class RefineOptions:
    """Stopping rules and initial damping of the Gauss-Newton iteration."""

    max_iterations: int = REFINE_MAX_ITERATIONS
    gradient_tolerance: float = REFINE_GRADIENT_TOLERANCE
    step_tolerance: float = REFINE_STEP_TOLERANCE
    damping_init: float = REFINE_DAMPING_INIT
    restarts: bool = REFINE_RESTARTS

    def __post_init__(self):
        for name in ("max_iterations", "gradient_tolerance", "step_tolerance", "damping_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"refine option {name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> Dict:
        return {
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "step_tolerance": self.step_tolerance,
            "damping_init": self.damping_init,
            "restarts": self.restarts,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> "RefineOptions":
        return cls(**(data or {}))


@dataclass(frozen=True)
class RefineResult:
    model: SpikeModel
    objective: float
    initial_objective: float
    iterations: int
    converged: bool
    no_progress: bool
    history: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class ModelOrderResult:
    n_x: int
    result: RecoveryResult
    objectives: Dict[int, float]
    level: float
    converged: bool
    zero_data: bool = False


def _power_derivative(k, s, x):
    return s * np.exp((s - 1.0) * np.log(x))


_DERIVATIVES = {
    "cauchy": lambda k, s, x: 1.0 / (s - x) ** 2,
    "power": _power_derivative,
    "fourier": lambda k, s, x: 1j * np.pi * s * np.exp(1j * np.pi * s * x),
    "laplace": lambda k, s, x: (1.0 - s * x) * np.exp(-s * x),
    "lorentzian": lambda k, s, x: 2.0 * k.gamma * (s - x) / (1.0 + k.gamma * (s - x) ** 2) ** 2,
}


def kernel_x_derivative(k: KernelFunction, s, x):
    """
    dG/dx for the built-in families; other kernels must provide x_derivative().

    Raises:
        KernelSingularityError: at a singular (s, x) pair.
    """
    if not isinstance(k, Kernel):
        return k.x_derivative(s, x)
    s = np.asarray(s, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    singular = k.singular_mask(s, x)
    if k.family == "power":
        singular = singular | np.broadcast_to(x == 0, singular.shape)
    if np.any(singular):
        raise KernelSingularityError(f"{k.family} kernel derivative is singular at some (s, x)")
    out = _DERIVATIVES[k.family](k, s, x)
    return complex(out) if np.ndim(out) == 0 else out


def objective(k: KernelFunction, S: SampleSet, u: Observations, model: SpikeModel) -> float:
    """sum_j |sum_k G(s_j, x_k) w_k - u_j|^2 for the given locations and weights."""
    if model.n_x == 0:
        return float(np.vdot(u.values, u.values).real)
    r = collocation_matrix(k, S, model.locations) @ model.weights - u.values
    return float(np.vdot(r, r).real)


class _Problem:
    """Variable-projection state for one refinement run."""

    def __init__(self, k, S, u, domain, dmap):
        self.k = k
        self.S = S
        self.u = u.values
        self.domain = domain
        self.dmap = dmap or DomainMap()
        self.real = domain is not None and domain.is_real and self.dmap.is_real
        self.dphi = 1.0 if self.dmap.kind == "identity" else self.dmap.scale

    def to_params(self, t: np.ndarray) -> np.ndarray:
        if self.real:
            return t.real.copy()
        return np.concatenate([t.real, t.imag])

    def to_reference(self, p: np.ndarray) -> np.ndarray:
        if self.real:
            t = p.astype(np.complex128)
        else:
            n = p.size // 2
            t = p[:n] + 1j * p[n:]
        if self.domain is not None:
            t = np.atleast_1d(project_to_domain(self.domain, t))
        return t

    def locations(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(map_forward(self.dmap, t), dtype=np.complex128)

    def evaluate(self, t: np.ndarray) -> Dict:
        x = self.locations(t)
        A = collocation_matrix(self.k, self.S, x)
        A_pinv = pinv_thresholded(A, LSTSQ_THRESHOLD)
        w = A_pinv @ self.u
        r = self.u - A @ w
        return {"t": t, "x": x, "A": A, "A_pinv": A_pinv, "w": w, "r": r, "f": float(np.vdot(r, r).real)}

    def jacobian(self, state: Dict) -> np.ndarray:
        """Real Jacobian of [Re r; Im r] with respect to the real parameters (Golub-Pereyra form)."""
        A, A_pinv, w, r = state["A"], state["A_pinv"], state["w"], state["r"]
        dA = kernel_x_derivative(self.k, self.S.locations[:, None], state["x"][None, :]) * self.dphi
        dA = np.asarray(dA, dtype=np.complex128).reshape(A.shape)
        directions = (1.0,) if self.real else (1.0, 1j)
        columns = []
        for c in directions:
            for k in range(A.shape[1]):
                v = dA[:, k] * (c * w[k])
                term1 = v - A @ (A_pinv @ v)
                term2 = np.conj(c) * np.vdot(dA[:, k], r) * A_pinv[k, :].conj()
                columns.append(-(term1 + term2))
        J = np.stack(columns, axis=1)
        return np.vstack([J.real, J.imag])


def refine(k: KernelFunction, S: SampleSet, u: Observations, init: SpikeModel,
           opts: Optional[RefineOptions] = None, domain: Optional[ReferenceDomain] = None,
           dmap: Optional[DomainMap] = None) -> RefineResult:
    """
    Locally minimize the data misfit starting from ``init``.

    Accepted steps never increase the objective. If no step is ever accepted
    and the initial point is not stationary, the initial model is returned
    with ``no_progress`` set.
    """
    opts = opts or RefineOptions()
    problem = _Problem(k, S, u, domain, dmap)
    u_sq = max(float(np.vdot(u.values, u.values).real), np.finfo(float).tiny)

    if init.n_x == 0:
        f = objective(k, S, u, init)
        return RefineResult(init, f, f, 0, True, False, [f])

    t0 = np.atleast_1d(np.asarray(map_inverse(problem.dmap, init.locations), dtype=np.complex128))
    if problem.real:
        t0 = t0.real.astype(np.complex128)
    if domain is not None:
        t0 = np.atleast_1d(project_to_domain(domain, t0))
    state = problem.evaluate(t0)
    initial_f = state["f"]
    history = [initial_f]
    damping = opts.damping_init
    accepted = 0
    converged = False
    iterations = 0

    for iterations in range(1, opts.max_iterations + 1):
        if state["f"] <= _ROUNDING_FLOOR * u_sq:
            converged = True
            break
        try:
            J = problem.jacobian(state)
        except KernelSingularityError as e:
            logger.warning(f"derivative singular at current iterate: {e}")
            break
        r_real = np.concatenate([state["r"].real, state["r"].imag])
        grad = J.T @ r_real
        col_norms = np.linalg.norm(J, axis=0)
        r_norm = np.linalg.norm(r_real)
        scaled = np.abs(grad) / np.where(col_norms > 0, col_norms * r_norm, np.inf)
        if np.max(scaled) <= opts.gradient_tolerance:
            converged = True
            break

        p = problem.to_params(state["t"])
        diag = np.maximum(col_norms, np.finfo(float).eps * max(1.0, np.max(col_norms)))
        improved = False
        while damping <= _DAMPING_MAX:
            lhs = np.vstack([J, np.sqrt(damping) * np.diag(diag)])
            rhs = np.concatenate([-r_real, np.zeros(p.size)])
            step = sl.lstsq(lhs, rhs, check_finite=False)[0]
            try:
                trial = problem.evaluate(problem.to_reference(p + step))
            except KernelSingularityError:
                damping *= 10.0
                continue
            if trial["f"] < state["f"] * (1.0 - _DECREASE_MARGIN):
                moved = np.linalg.norm(problem.to_params(trial["t"]) - p)
                state = trial
                history.append(state["f"])
                accepted += 1
                damping = max(damping / 10.0, _DAMPING_MIN)
                improved = True
                if moved <= opts.step_tolerance * (np.linalg.norm(p) + opts.step_tolerance):
                    converged = True
                break
            damping *= 10.0
        logger.debug(f"refine iteration {iterations}: objective={state['f']:.6e}, damping={damping:.1e}")
        if not improved or converged:
            break

    no_progress = accepted == 0 and not converged
    if no_progress:
        logger.warning("refinement made no progress; returning the initial model")
        model = init
    else:
        model = SpikeModel(state["x"], state["w"])
    final = objective(k, S, u, model)
    return RefineResult(model=model, objective=final, initial_objective=initial_f, iterations=iterations,
                        converged=converged, no_progress=no_progress, history=history)


def estimate_locations(E: Eigenmatrix, u: Observations, n_x: int, estimator: str = DEFAULT_ESTIMATOR,
                       ell: Optional[int] = None, domain: Optional[ReferenceDomain] = None):
    if estimator not in ESTIMATORS:
        raise ValueError(f"Unsupported estimator: {estimator}. Use {list(ESTIMATORS)}")
    if estimator == "prony":
        return prony_locations(E, u, n_x, domain=domain)
    return esprit_locations(E, u, n_x, ell=ell, domain=domain)


def _start_nodes(domain: ReferenceDomain, n_a: int) -> np.ndarray:
    """Candidate locations for the greedy start, in reference coordinates."""
    nodes = probe_grid(domain, n_a).nodes
    if domain.kind == "interval":
        return nodes
    return np.concatenate([r * nodes for r in (0.3, 0.6, 0.9)])


def greedy_start(k: KernelFunction, S: SampleSet, u: Observations, n_x: int, domain: ReferenceDomain,
                 dmap: DomainMap, n_a: int, opts: Optional[RefineOptions] = None) -> SpikeModel:
    """
    Grid-greedy initialization independent of the eigenmatrix.

    Adds the candidate node whose normalized kernel vector is best correlated
    with the current residual, then refines all locations jointly before the
    next pick.
    """
    t_nodes = _start_nodes(domain, n_a)
    nodes = np.asarray(map_forward(dmap, t_nodes), dtype=np.complex128)
    A = normalize_columns(collocation_matrix(k, S, nodes), nodes)
    taken: List[int] = []
    locations = np.empty(0, dtype=np.complex128)
    residual = u.values
    model = None
    for _ in range(n_x):
        scores = np.abs(A.conj().T @ residual)
        scores[taken] = -1.0
        j = int(np.argmax(scores))
        taken.append(j)
        locations = np.append(locations, nodes[j])
        model = refine(k, S, u, SpikeModel(locations, recover_weights(k, S, u, locations)), opts, domain, dmap).model
        locations = model.locations
        residual = u.values - collocation_matrix(k, S, locations) @ model.weights
    return model


def recover_spikes(k: KernelFunction, S: SampleSet, u: Observations, E: Eigenmatrix, n_x: int,
                   estimator: str = DEFAULT_ESTIMATOR, ell: Optional[int] = None,
                   domain: Optional[ReferenceDomain] = None, dmap: Optional[DomainMap] = None,
                   opts: Optional[RefineOptions] = None) -> RecoveryResult:
    """
    Eigenmatrix estimate, least-squares weights and refinement for a fixed n_x.

    ``raw`` is always the eigenmatrix estimate at the requested (or default)
    Krylov depth. With ``opts.restarts`` and no explicit ell, refinement also
    starts from the estimates at the other depths n_x+1..min(2 n_x, n_s-1) and
    from the greedy grid start; the smallest refined objective wins, earlier
    starts first on ties.
    """
    opts = opts or RefineOptions()
    domain = domain or ReferenceDomain(E.grid.kind)
    dmap = dmap or DomainMap()
    estimate = estimate_locations(E, u, n_x, estimator, ell, domain)
    x_raw = np.asarray(map_forward(dmap, estimate.locations), dtype=np.complex128)
    raw = SpikeModel(x_raw, recover_weights(k, S, u, x_raw))
    residual_raw = objective(k, S, u, raw)
    refined = refine(k, S, u, raw, opts, domain, dmap)
    warnings = list(estimate.warnings)
    if refined.no_progress:
        warnings.append("refinement made no progress")

    start = "eigenmatrix"
    if opts.restarts and ell is None:
        best_f = refined.objective
        for label, init in _restart_models(k, S, u, E, n_x, estimator, domain, dmap, opts):
            candidate = refine(k, S, u, init, opts, domain, dmap)
            if candidate.objective < best_f:
                refined, best_f, start = candidate, candidate.objective, label
        if start != "eigenmatrix":
            logger.debug(f"best refined fit came from the {start} start")

    logger.info(f"{estimator}: n_x={n_x}, raw objective={residual_raw:.3e}, refined={refined.objective:.3e}")
    return RecoveryResult(raw=raw, refined=refined.model, residual_raw=residual_raw,
                          residual_refined=refined.objective, method=estimator,
                          eigenmatrix=E.metadata(), warnings=warnings, start=start)


def _restart_models(k, S, u, E, n_x, estimator, domain, dmap, opts):
    """Yield (label, initial model) for every extra start that can be formed."""
    if estimator == "esprit":
        default = default_ell(n_x, S.n_s)
        for depth in range(n_x + 1, min(2 * n_x, S.n_s - 1) + 1):
            if depth == default:
                continue
            try:
                estimate = esprit_locations(E, u, n_x, ell=depth, domain=domain)
                x0 = np.asarray(map_forward(dmap, estimate.locations), dtype=np.complex128)
                yield f"ell={depth}", SpikeModel(x0, recover_weights(k, S, u, x0))
            except (NumericalError, ValueError) as e:
                logger.debug(f"restart at ell={depth} skipped: {e}")
    try:
        yield "greedy", greedy_start(k, S, u, n_x, domain, dmap, E.grid.n_a, opts)
    except (NumericalError, ValueError, KernelSingularityError) as e:
        logger.debug(f"greedy start skipped: {e}")


def acceptance_level(u: Observations, sigma_estimate: float, factor: float = NOISE_ACCEPTANCE_FACTOR) -> float:
    """Largest objective compatible with the noise level."""
    u_sq = u.norm ** 2
    return max((factor * sigma_estimate * u.norm) ** 2, EXACT_FIT_LEVEL * u_sq)


def select_model_order(k: KernelFunction, S: SampleSet, u: Observations, E: Eigenmatrix,
                       sigma_estimate: float, n_max: int, estimator: str = DEFAULT_ESTIMATOR,
                       domain: Optional[ReferenceDomain] = None, dmap: Optional[DomainMap] = None,
                       opts: Optional[RefineOptions] = None, factor: float = NOISE_ACCEPTANCE_FACTOR,
                       workers: int = 1) -> ModelOrderResult:
    """
    Smallest n_x whose refined objective is within the noise level.

    Candidates n = 1..n_max are independent; with workers > 1 they run in a
    thread pool and the outcome equals the sequential one.
    """
    if n_max < 1 or n_max > S.n_s / 2:
        raise ValueError(f"n_max must be in [1, n_s/2] = [1, {S.n_s / 2}], got {n_max}")
    domain = domain or ReferenceDomain(E.grid.kind)
    dmap = dmap or DomainMap()
    level = acceptance_level(u, sigma_estimate, factor)

    if u.norm == 0.0:
        origin = np.atleast_1d(np.asarray(map_forward(dmap, np.zeros(1, dtype=np.complex128))))
        zero = SpikeModel(origin, np.zeros(1, dtype=np.complex128))
        result = RecoveryResult(zero, zero, 0.0, 0.0, estimator, E.metadata(), ["zero data"])
        return ModelOrderResult(1, result, {1: 0.0}, level, True, zero_data=True)

    def attempt(n: int) -> Optional[RecoveryResult]:
        try:
            return recover_spikes(k, S, u, E, n, estimator, None, domain, dmap, opts)
        except (NumericalError, ValueError) as e:
            logger.warning(f"model order {n} failed: {e}")
            return None

    orders = list(range(1, n_max + 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(attempt, orders))
    else:
        results = [attempt(n) for n in orders]

    objectives = {n: (res.residual_refined if res is not None else float("inf")) for n, res in zip(orders, results)}
    for n, res in zip(orders, results):
        if res is not None and res.residual_refined <= level:
            return ModelOrderResult(n, res, objectives, level, True)

    best = min(orders, key=lambda n: objectives[n])
    if results[best - 1] is None:
        raise NumericalError("every model order failed")
    logger.warning(f"no model order up to {n_max} fits within the noise level; returning n_x={best}")
    return ModelOrderResult(best, results[best - 1], objectives, level, False)
