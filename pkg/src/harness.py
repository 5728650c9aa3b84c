"""
Experiment Harness

Named scenarios, forward synthesis, seeded multiplicative noise, spike
layouts, scoring against the truth, and seeded multi-trial experiment runs
with JSON/CSV reports.

Seeding: every trial draws from three independent PCG64 streams (samples,
layout, noise). The seed of stream ``k`` in trial ``i`` is the first 64-bit
word of ``SeedSequence(master_seed, spawn_key=(i, k))``, so trials do not
depend on execution order and parallel runs reproduce serial ones.
"""

import itertools
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import json5
import numpy as np
from scipy.optimize import linear_sum_assignment
from tqdm import tqdm

from config import (
    AUTO_SHRINK_N_A,
    CONDITION_LIMIT,
    ConfigError,
    DEFAULT_ESTIMATOR,
    DEFAULT_N_A,
    DEFAULT_N_X,
    DEFAULT_NORM_BOUND,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    ESTIMATORS,
    MAX_BRUTE_FORCE_MATCH,
)
from domains import DomainMap, ReferenceDomain, domain_diameter, map_forward
from eigenmatrix import build, select_probe_count
from kernels import Kernel, SampleSet, assemble_matrix
from recovery import Observations, SpikeModel, recover_weights
from refine import RefineOptions, objective, recover_spikes
from utils import SPIKE_COLUMNS, spike_rows, write_csv_rows, write_json, write_observations_csv

logger = logging.getLogger(__name__)

STREAM_SAMPLES = 0
STREAM_LAYOUT = 1
STREAM_NOISE = 2

LAYOUTS = ("easy", "hard")
MIN_SEPARATION = 0.3
INTERVAL_WINDOW = 0.9
DISK_RADIUS = 0.8
_MAX_DRAWS = 10000

# Kernels that are only meaningful for real locations
REAL_FAMILIES = ("fourier", "laplace", "lorentzian")

ROW_COLUMNS = (
    "trial", "status", "error", "sigma", "seed_samples", "seed_layout", "seed_noise",
    "n_x_true", "n_x_estimated",
    "raw_location_error", "refined_location_error", "raw_weight_error", "refined_weight_error",
    "residual_raw", "residual_refined", "residual_truth", "start", "refine_monotone",
    "n_a", "threshold_used", "norm_M", "cond_Ghat", "rank", "warnings",
)
AGGREGATE_COLUMNS = (
    "raw_location_error", "refined_location_error", "raw_weight_error", "refined_weight_error",
    "residual_raw", "residual_refined",
)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"noise sigma must be >= 0, got {self.sigma}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class SampleSpec:
    """
    How the sample set is generated.

    Kinds:
        annulus:           modulus uniform in [low, high], angle uniform in [0, 2 pi)
        interval:          uniform in [low, high]
        matsubara:         +-i (2m - 1) pi / beta for m = 1..n_s/2 (deterministic)
        lattice:           s_j = j (deterministic)
        perturbed_lattice: s_j = j + jitter * U(-1/2, 1/2)
        uniform:           uniform in [0, n_s]
    """

    kind: str
    n_s: int
    low: Optional[float] = None
    high: Optional[float] = None
    beta: Optional[float] = None
    jitter: Optional[float] = None

    KINDS = ("annulus", "interval", "matsubara", "lattice", "perturbed_lattice", "uniform")
    DETERMINISTIC = ("matsubara", "lattice")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"Unsupported sample kind: {self.kind}. Use {list(self.KINDS)}")
        if int(self.n_s) < 1:
            raise ConfigError(f"n_s must be >= 1, got {self.n_s}")
        if self.kind in ("annulus", "interval"):
            if self.low is None or self.high is None or not self.high > self.low:
                raise ConfigError(f"{self.kind} samples need low < high, got [{self.low}, {self.high}]")
        if self.kind == "matsubara":
            if self.beta is None or not self.beta > 0:
                raise ConfigError(f"matsubara samples need beta > 0, got {self.beta}")
            if self.n_s % 2:
                raise ConfigError(f"matsubara grid has an even number of points, got n_s={self.n_s}")
        if self.kind == "perturbed_lattice" and (self.jitter is None or self.jitter < 0):
            raise ConfigError(f"perturbed_lattice samples need jitter >= 0, got {self.jitter}")

    @property
    def is_random(self) -> bool:
        return self.kind not in self.DETERMINISTIC

    def to_dict(self) -> Dict:
        data = {"kind": self.kind, "n_s": self.n_s}
        for name in ("low", "high", "beta", "jitter"):
            if getattr(self, name) is not None:
                data[name] = getattr(self, name)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "SampleSpec":
        return cls(**data)


def check_pairing(kernel, domain: ReferenceDomain) -> None:
    """
    Raises:
        ConfigError: if the kernel family does not fit the reference domain.
    """
    family = getattr(kernel, "family", None)
    if family in REAL_FAMILIES and domain.kind != "interval":
        raise ConfigError(f"{family} kernel pairs with the interval domain")
    if family == "power" and domain.kind != "disk":
        raise ConfigError("power kernel pairs with the disk domain")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a run needs. ``truth`` (tuples of (x, w) in X) overrides the
    random ``layout`` when given.
    """

    scenario: str
    kernel: Kernel
    domain: ReferenceDomain
    dmap: DomainMap
    samples: SampleSpec
    layout: str = "easy"
    close_gap: float = 0.1
    n_x: int = DEFAULT_N_X
    truth: Optional[Tuple[Tuple[complex, complex], ...]] = None
    sigma: float = 0.0
    seed: int = DEFAULT_SEED
    n_a: int = DEFAULT_N_A
    norm_bound: float = DEFAULT_NORM_BOUND
    auto_n_a: bool = AUTO_SHRINK_N_A
    estimator: str = DEFAULT_ESTIMATOR
    ell: Optional[int] = None
    refine: RefineOptions = field(default_factory=RefineOptions)
    trials: int = DEFAULT_TRIALS

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"Unsupported layout: {self.layout}. Use {list(LAYOUTS)}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"Unsupported estimator: {self.estimator}. Use {list(ESTIMATORS)}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not self.close_gap > 0:
            raise ConfigError(f"close_gap must be > 0, got {self.close_gap}")
        if self.n_a < 1 or not self.norm_bound > 0:
            raise ConfigError(f"need n_a >= 1 and norm_bound > 0, got {self.n_a}, {self.norm_bound}")
        if self.truth is not None:
            object.__setattr__(self, "truth", tuple((complex(x), complex(w)) for x, w in self.truth))
            object.__setattr__(self, "n_x", len(self.truth))
        if self.n_x < 1:
            raise ConfigError(f"n_x must be >= 1, got {self.n_x}")
        if self.samples.n_s < 2 * self.n_x:
            raise ConfigError(f"need n_s >= 2 n_x, got n_s={self.samples.n_s}, n_x={self.n_x}")
        check_pairing(self.kernel, self.domain)

    @property
    def truth_model(self) -> Optional[SpikeModel]:
        if self.truth is None:
            return None
        return SpikeModel(np.array([x for x, _ in self.truth]), np.array([w for _, w in self.truth]))

    def to_dict(self) -> Dict:
        return {
            "scenario": self.scenario,
            "kernel": self.kernel.to_dict(),
            "domain": self.domain.kind,
            "map": self.dmap.to_dict(),
            "samples": self.samples.to_dict(),
            "layout": self.layout,
            "close_gap": self.close_gap,
            "n_x": self.n_x,
            "truth": None if self.truth is None else self.truth_model.to_dict(),
            "sigma": self.sigma,
            "seed": self.seed,
            "n_a": self.n_a,
            "norm_bound": self.norm_bound,
            "auto_n_a": self.auto_n_a,
            "estimator": self.estimator,
            "ell": self.ell,
            "refine": self.refine.to_dict(),
            "trials": self.trials,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        """
        Build a config from a dict; keys missing from ``data`` come from the
        named scenario when ``data["scenario"]`` is one.

        Raises:
            ConfigError: on unknown keys or invalid values.
        """
        data = dict(data)
        scenario = data.get("scenario", "custom")
        base = scenario_config(scenario).to_dict() if scenario in SCENARIOS else {}
        unknown = set(data) - set(cls.__dataclass_fields__) - {"map"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        merged = {**base, **data}
        try:
            truth = merged.get("truth")
            if truth is not None:
                model = SpikeModel.from_dict(truth)
                truth = tuple(zip(model.locations.tolist(), model.weights.tolist()))
            return cls(
                scenario=scenario,
                kernel=Kernel.from_dict(merged["kernel"]),
                domain=ReferenceDomain(merged["domain"]),
                dmap=DomainMap.from_dict(merged.get("map", {"kind": "identity"})),
                samples=SampleSpec.from_dict(merged["samples"]),
                layout=merged.get("layout", "easy"),
                close_gap=float(merged.get("close_gap", 0.1)),
                n_x=int(merged.get("n_x", DEFAULT_N_X)),
                truth=truth,
                sigma=float(merged.get("sigma", 0.0)),
                seed=int(merged.get("seed", DEFAULT_SEED)),
                n_a=int(merged.get("n_a", DEFAULT_N_A)),
                norm_bound=float(merged.get("norm_bound", DEFAULT_NORM_BOUND)),
                auto_n_a=bool(merged.get("auto_n_a", AUTO_SHRINK_N_A)),
                estimator=merged.get("estimator", DEFAULT_ESTIMATOR),
                ell=None if merged.get("ell") is None else int(merged["ell"]),
                refine=RefineOptions.from_dict(merged.get("refine")),
                trials=int(merged.get("trials", DEFAULT_TRIALS)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid experiment configuration: {e}") from e


def load_config(path: Path) -> ExperimentConfig:
    """Read a JSON or JSON5 experiment configuration file."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            data = json5.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"cannot parse configuration {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"configuration {path} must contain an object")
    return ExperimentConfig.from_dict(data)


SCENARIOS = {
    "rational": dict(kernel=Kernel("cauchy"), domain=ReferenceDomain("disk"), dmap=DomainMap(),
                     samples=SampleSpec("annulus", 40, low=1.2, high=2.2), close_gap=0.1),
    "spectral": dict(kernel=Kernel("cauchy"), domain=ReferenceDomain("interval"), dmap=DomainMap(),
                     samples=SampleSpec("matsubara", 256, beta=100.0), close_gap=0.1),
    "fourier": dict(kernel=Kernel("fourier"), domain=ReferenceDomain("interval"), dmap=DomainMap(),
                    samples=SampleSpec("interval", 128, low=-5.0, high=5.0), close_gap=0.1),
    "laplace": dict(kernel=Kernel("laplace"), domain=ReferenceDomain("interval"),
                    dmap=DomainMap("affine", center=1.1, scale=1.0),
                    samples=SampleSpec("interval", 100, low=0.0, high=10.0), close_gap=0.25),
    "deconv": dict(kernel=Kernel("lorentzian", gamma=4.0), domain=ReferenceDomain("interval"), dmap=DomainMap(),
                   samples=SampleSpec("interval", 100, low=-5.0, high=5.0), close_gap=0.1),
    "shift": dict(kernel=Kernel("power"), domain=ReferenceDomain("disk"), dmap=DomainMap(),
                  samples=SampleSpec("lattice", 32), close_gap=0.1,
                  truth=((complex(np.exp(1j * np.pi / 4)), 1.0), (complex(np.exp(-1j * np.pi / 4)), 1.0))),
}


def scenario_config(name: str, **overrides) -> ExperimentConfig:
    """Default configuration of a named scenario, with keyword overrides."""
    if name not in SCENARIOS:
        raise ConfigError(f"Unknown scenario: {name}. Use {list(SCENARIOS)}")
    return ExperimentConfig(scenario=name, **{**SCENARIOS[name], **overrides})


def trial_seed(master_seed: int, trial: int, stream: int) -> int:
    """64-bit seed of one stream of one trial."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(stream)))
    return int(seq.generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_samples(spec: SampleSpec, seed: Optional[int] = None) -> SampleSet:
    """
    Sample locations for a spec; random kinds are deterministic per seed.

    Raises:
        ConfigError: if a random kind is requested without a seed.
    """
    n = spec.n_s
    if spec.kind == "matsubara":
        omega = (2 * np.arange(1, n // 2 + 1) - 1) * np.pi / spec.beta
        return SampleSet(1j * np.concatenate([-omega[::-1], omega]))
    if spec.kind == "lattice":
        return SampleSet(np.arange(n, dtype=np.float64))
    if seed is None:
        raise ConfigError(f"{spec.kind} samples need a seed")
    rng = _rng(seed)
    if spec.kind == "annulus":
        r = rng.uniform(spec.low, spec.high, n)
        theta = rng.uniform(0.0, 2 * np.pi, n)
        return SampleSet(r * np.exp(1j * theta))
    if spec.kind == "interval":
        return SampleSet(rng.uniform(spec.low, spec.high, n))
    if spec.kind == "perturbed_lattice":
        return SampleSet(np.arange(n) + spec.jitter * rng.uniform(-0.5, 0.5, n))
    return SampleSet(rng.uniform(0.0, float(n), n))


def synthesize(k: Kernel, S: SampleSet, truth: SpikeModel) -> Observations:
    """Exact data u_j = sum_k G(s_j, x_k) w_k."""
    if truth.n_x == 0:
        return Observations(np.zeros(S.n_s, dtype=np.complex128), S)
    return Observations(assemble_matrix(k, S, truth.locations) @ truth.weights, S)


def add_noise(u: Observations, n: NoiseSpec) -> Observations:
    """u_j (1 + sigma Z_j) with real standard normal Z_j from PCG64(n.seed)."""
    if n.sigma == 0:
        return u
    z = _rng(n.seed).standard_normal(u.values.size)
    return Observations(u.values * (1.0 + n.sigma * z), u.samples)


def _interval_points(rng, n_x: int, hard: bool, close: float) -> np.ndarray:
    # Blocks are single spikes or the close pair; gaps between blocks are >= MIN_SEPARATION
    widths = np.zeros(n_x - 1 if hard else n_x)
    if hard:
        widths[rng.integers(widths.size)] = close
    span = 2 * INTERVAL_WINDOW
    slack = span - widths.sum() - (widths.size - 1) * MIN_SEPARATION
    if slack < 0:
        raise ConfigError(f"{n_x} spikes do not fit in the interval window with separation {MIN_SEPARATION}")
    offsets = np.sort(rng.uniform(0.0, slack, widths.size))
    starts = -INTERVAL_WINDOW + offsets + np.concatenate([[0.0], np.cumsum(widths[:-1] + MIN_SEPARATION)])
    points = []
    for start, width in zip(starts, widths):
        points.append(start)
        if width > 0:
            points.append(start + width)
    return np.array(points, dtype=np.complex128)


def _disk_points(rng, count: int, separation: float) -> List[complex]:
    points: List[complex] = []
    for _ in range(_MAX_DRAWS):
        if len(points) == count:
            return points
        z = DISK_RADIUS * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        if all(abs(z - p) >= separation for p in points):
            points.append(complex(z))
    if len(points) == count:
        return points
    raise ConfigError(f"could not place {count} spikes in |t| <= {DISK_RADIUS} with separation {separation}")


def _disk_layout(rng, n_x: int, hard: bool, close: float) -> np.ndarray:
    if not hard:
        return np.array(_disk_points(rng, n_x, MIN_SEPARATION))
    base = _disk_points(rng, n_x - 1, MIN_SEPARATION + close)
    idx = int(rng.integers(len(base)))
    for _ in range(_MAX_DRAWS):
        partner = base[idx] + close * np.exp(2j * np.pi * rng.uniform())
        if abs(partner) <= DISK_RADIUS:
            return np.array(base[:idx + 1] + [complex(partner)] + base[idx + 1:])
    raise ConfigError("could not place the close partner inside the disk")


def layout_from_config(cfg: ExperimentConfig, seed: int) -> SpikeModel:
    """Truth model of a run: explicit truth or a seeded easy/hard layout mapped into X."""
    if cfg.truth is not None:
        return cfg.truth_model
    hard = cfg.layout == "hard"
    if hard and cfg.n_x < 2:
        raise ConfigError("hard layout needs n_x >= 2")
    rng = _rng(seed)
    if cfg.domain.kind == "interval":
        t = _interval_points(rng, cfg.n_x, hard, cfg.close_gap)
    else:
        t = _disk_layout(rng, cfg.n_x, hard, cfg.close_gap)
    x = np.asarray(map_forward(cfg.dmap, t), dtype=np.complex128)
    return SpikeModel(x, np.ones(cfg.n_x, dtype=np.complex128))


def spike_layout(scenario: str, difficulty: str, seed: int, n_x: int = DEFAULT_N_X) -> SpikeModel:
    """Seeded easy (separation >= 0.3) or hard (one close pair) layout of a named scenario, weights 1."""
    cfg = scenario_config(scenario, layout=difficulty, n_x=n_x, truth=None)
    return layout_from_config(cfg, seed)


@dataclass(frozen=True)
class Score:
    location_error: float
    weight_error: float
    unmatched: int = 0


def _assignment(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n_rows, n_cols = cost.shape
    if max(n_rows, n_cols) > MAX_BRUTE_FORCE_MATCH:
        return linear_sum_assignment(cost)
    if n_rows <= n_cols:
        rows = np.arange(n_rows)
        best = min(itertools.permutations(range(n_cols), n_rows), key=lambda p: cost[rows, list(p)].sum())
        return rows, np.array(best, dtype=int)
    cols = np.arange(n_cols)
    best = min(itertools.permutations(range(n_rows), n_cols), key=lambda p: cost[list(p), cols].sum())
    order = np.argsort(best)
    return np.array(best, dtype=int)[order], cols[order]


def match_and_score(truth: SpikeModel, estimate: SpikeModel, diameter: float = 2.0) -> Score:
    """
    Max matched location and weight errors under the assignment minimizing
    total location distance. Each unmatched spike adds ``diameter`` to the
    location error and its |w| to the weight error.
    """
    n_t, n_e = truth.n_x, estimate.n_x
    loc_err, w_err = 0.0, 0.0
    matched_t = np.zeros(n_t, dtype=bool)
    matched_e = np.zeros(n_e, dtype=bool)
    if n_t and n_e:
        cost = np.abs(truth.locations[:, None] - estimate.locations[None, :])
        rows, cols = _assignment(cost)
        loc_err = float(np.max(cost[rows, cols]))
        w_err = float(np.max(np.abs(truth.weights[rows] - estimate.weights[cols])))
        matched_t[rows] = True
        matched_e[cols] = True
    unmatched = int(np.sum(~matched_t) + np.sum(~matched_e))
    loc_err += diameter * unmatched
    w_err += float(np.sum(np.abs(truth.weights[~matched_t])) + np.sum(np.abs(estimate.weights[~matched_e])))
    return Score(location_error=loc_err, weight_error=w_err, unmatched=unmatched)


@dataclass
class ExperimentReport:
    config: Dict
    rows: List[Dict]
    aggregate: Dict
    spikes: Dict[int, List[Dict]] = field(default_factory=dict)
    # Noisy observations per trial; written as CSV, not part of report.json
    observations: Dict[int, Observations] = field(default_factory=dict)

    @property
    def all_failed(self) -> bool:
        return all(row["status"] != "ok" for row in self.rows)

    @property
    def success_count(self) -> int:
        return sum(row["status"] == "ok" for row in self.rows)

    def to_dict(self) -> Dict:
        return {
            "config": self.config,
            "rows": self.rows,
            "aggregate": self.aggregate,
            "spikes": {str(k): v for k, v in sorted(self.spikes.items())},
        }


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None


def _empty_row(cfg: ExperimentConfig, trial: int) -> Dict:
    row = {c: None for c in ROW_COLUMNS}
    row.update({
        "trial": trial,
        "sigma": cfg.sigma,
        "seed_samples": trial_seed(cfg.seed, trial, STREAM_SAMPLES),
        "seed_layout": trial_seed(cfg.seed, trial, STREAM_LAYOUT),
        "seed_noise": trial_seed(cfg.seed, trial, STREAM_NOISE),
        "warnings": "",
    })
    return row


def run_trial(cfg: ExperimentConfig, trial: int) -> Tuple[Dict, List[Dict], Optional[Observations]]:
    """
    One seeded trial: samples, synthesis, noise, eigenmatrix, estimate, refine, score.

    Any error is caught and recorded in the row, so one bad trial never
    stops an experiment. The noisy observations are returned whenever they
    were generated.
    """
    row = _empty_row(cfg, trial)
    spikes: List[Dict] = []
    u = None
    try:
        S = generate_samples(cfg.samples, row["seed_samples"] if cfg.samples.is_random else None)
        truth = layout_from_config(cfg, row["seed_layout"])
        spikes.extend(spike_rows("exact", truth.locations, truth.weights))
        u = add_noise(synthesize(cfg.kernel, S, truth), NoiseSpec(cfg.sigma, row["seed_noise"]))

        n_a = cfg.n_a
        if cfg.auto_n_a:
            n_a = select_probe_count(cfg.kernel, S, cfg.domain, cfg.dmap, cfg.n_a, CONDITION_LIMIT)
        E = build(cfg.kernel, S, cfg.domain, cfg.dmap, n_a, cfg.norm_bound)
        result = recover_spikes(cfg.kernel, S, u, E, truth.n_x, cfg.estimator, cfg.ell,
                                cfg.domain, cfg.dmap, cfg.refine)
        truth_fit = objective(cfg.kernel, S, u,
                              SpikeModel(truth.locations, recover_weights(cfg.kernel, S, u, truth.locations)))
    except Exception as e:
        logger.warning(f"trial {trial} failed: {type(e).__name__}: {e}")
        row.update({"status": "failed", "error": f"{type(e).__name__}: {e}"})
        return row, spikes, u

    diameter = domain_diameter(cfg.domain, cfg.dmap)
    raw_score = match_and_score(truth, result.raw, diameter)
    refined_score = match_and_score(truth, result.refined, diameter)
    spikes.extend(spike_rows("raw", result.raw.locations, result.raw.weights))
    spikes.extend(spike_rows("refined", result.refined.locations, result.refined.weights))
    row.update({
        "status": "ok",
        "n_x_true": truth.n_x,
        "n_x_estimated": result.raw.n_x,
        "raw_location_error": raw_score.location_error,
        "refined_location_error": refined_score.location_error,
        "raw_weight_error": raw_score.weight_error,
        "refined_weight_error": refined_score.weight_error,
        "residual_raw": _finite_or_none(result.residual_raw),
        "residual_refined": _finite_or_none(result.residual_refined),
        "residual_truth": _finite_or_none(truth_fit),
        "start": result.start,
        "refine_monotone": bool(result.residual_refined <= result.residual_raw + 1e-9),
        "n_a": E.n_a,
        "threshold_used": E.threshold_used,
        "norm_M": E.norm_M,
        "cond_Ghat": _finite_or_none(E.cond_Ghat),
        "rank": E.rank,
        "warnings": "; ".join(result.warnings),
    })
    logger.info(f"trial {trial}: refined location error {refined_score.location_error:.3e}")
    return row, spikes, u


def aggregate_rows(rows: Sequence[Dict]) -> Dict:
    """Mean, median and max of each error column over successful rows."""
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {"trials": len(rows), "succeeded": len(ok), "failed": len(rows) - len(ok)}
    for column in AGGREGATE_COLUMNS:
        values = np.array([r[column] for r in ok if r[column] is not None], dtype=np.float64)
        if values.size == 0:
            summary[column] = None
            continue
        summary[column] = {
            "mean": float(np.mean(values)),
            "median": float(np.median(values)),
            "max": float(np.max(values)),
        }
    return summary


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress: bool = False) -> ExperimentReport:
    """
    Run ``cfg.trials`` seeded trials. Failed trials are recorded and the run
    continues. Rows are ordered by trial index whatever ``workers`` is.
    """
    logger.info(f"Running {cfg.scenario} ({cfg.layout}) sigma={cfg.sigma:g}, {cfg.trials} trial(s), "
                f"estimator={cfg.estimator}")
    with tqdm(total=cfg.trials, desc=f"{cfg.scenario} sigma={cfg.sigma:g}", disable=not progress,
              file=sys.stderr) as bar:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_trial, cfg, i) for i in range(cfg.trials)]
                outcomes = []
                for future in futures:
                    outcomes.append(future.result())
                    bar.update(1)
        else:
            outcomes = []
            for i in range(cfg.trials):
                outcomes.append(run_trial(cfg, i))
                bar.update(1)

    rows = [row for row, _, _ in outcomes]
    spikes = {row["trial"]: table for row, table, _ in outcomes}
    observations = {row["trial"]: u for row, _, u in outcomes if u is not None}
    report = ExperimentReport(config=cfg.to_dict(), rows=rows, aggregate=aggregate_rows(rows), spikes=spikes,
                              observations=observations)
    logger.info(f"{report.success_count}/{cfg.trials} trial(s) succeeded")
    return report


def sigma_sweep(cfg: ExperimentConfig, sigmas: Sequence[float], workers: int = 1,
                progress: bool = False) -> List[ExperimentReport]:
    """One report per noise level, all other settings equal."""
    return [run_experiment(replace(cfg, sigma=float(s)), workers, progress) for s in sigmas]


def write_report(report: ExperimentReport, out_dir: Path, fmt: str = "json") -> Dict[str, str]:
    """
    Write report.json (always), report.csv (format csv), and under trials/ one
    spike table and one observation file per trial. The observation files
    have the layout the recover command reads. Returns the written paths by role.
    """
    out_dir = Path(out_dir)
    (out_dir / "trials").mkdir(parents=True, exist_ok=True)
    written = {"report": str(write_json(out_dir / "report.json", report.to_dict()))}
    if fmt == "csv":
        written["rows"] = str(write_csv_rows(out_dir / "report.csv", report.rows, ROW_COLUMNS))
    for trial, table in sorted(report.spikes.items()):
        write_csv_rows(out_dir / "trials" / f"trial_{trial:03d}_spikes.csv", table, SPIKE_COLUMNS)
    for trial, u in sorted(report.observations.items()):
        path = out_dir / "trials" / f"trial_{trial:03d}_observations.csv"
        write_observations_csv(path, u.samples.locations, u.values)
    written["trials"] = str(out_dir / "trials")
    return written
