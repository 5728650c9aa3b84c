# Configuration for the eigenmatrix sparse recovery toolkit.
# Values here are defaults; environment variables (EIGENMATRIX_*) override them.

import logging
import os
from pathlib import Path


class ConfigError(ValueError):
    """Invalid experiment configuration or input file."""


# Base configuration
BASE_DIR = Path(__file__).parent.parent
OUTPUT_BASE_DIR = Path(os.getenv("EIGENMATRIX_OUTPUT_DIR", BASE_DIR / "output"))

# Eigenmatrix construction
DEFAULT_N_A = int(os.getenv("EIGENMATRIX_N_A", "32"))
DEFAULT_NORM_BOUND = float(os.getenv("EIGENMATRIX_NORM_BOUND", "3.0"))
NORM_BOUND_SLACK = 1e-9
# Relative pseudoinverse thresholds, scanned from the smallest. The top rungs
# exist for the matsubara and laplace kernels, whose probe matrices need a coarse
# truncation before ||M|| <= 3 holds.
THRESHOLD_LADDER = (1e-14, 1e-12, 1e-10, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1)
CONDITION_LIMIT = 1e7
# Off: the smooth kernels lose interpolation accuracy long before cond(G) < 1e7
AUTO_SHRINK_N_A = False

# Linear algebra
LSTSQ_THRESHOLD = 1e-12
ESPRIT_PINV_THRESHOLD = 1e-12
RANK_WARNING_RATIO = 1e-13

# Recovery
DEFAULT_N_X = 3
DEFAULT_ESTIMATOR = "esprit"
ESTIMATORS = ("prony", "esprit")

# Refinement (damped Gauss-Newton with variable projection)
REFINE_MAX_ITERATIONS = 200
REFINE_GRADIENT_TOLERANCE = 1e-10
REFINE_STEP_TOLERANCE = 1e-12
REFINE_DAMPING_INIT = 1e-3
# Also refine from the other Krylov depths and from a greedy grid start; keep the best fit
REFINE_RESTARTS = True
NOISE_ACCEPTANCE_FACTOR = 2.0
EXACT_FIT_LEVEL = 1e-20

# Experiments
DEFAULT_TRIALS = int(os.getenv("EIGENMATRIX_TRIALS", "5"))
DEFAULT_SEED = 20240101
MAX_WORKERS = int(os.getenv("EIGENMATRIX_MAX_WORKERS", "1"))
MAX_BRUTE_FORCE_MATCH = 8

# Logging configuration
LOG_LEVEL = os.getenv("EIGENMATRIX_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Environment-specific overrides
if os.getenv("PRODUCTION"):
    LOG_LEVEL = "WARNING"

# Development mode
if os.getenv("DEVELOPMENT"):
    LOG_LEVEL = "DEBUG"


def setup_logging(level=None):
    """Configure root logging once for command-line runs."""
    level = level or LOG_LEVEL
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    return level
