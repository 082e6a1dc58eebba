"""Shared numeric defaults and distribution-family helpers for optiquant."""

from difflib import get_close_matches
from typing import Dict, Optional

# Lloyd stopping rule
DEFAULT_MAX_ITER: int = 10_000
DEFAULT_TOL_MOVE: float = 1e-9
DEFAULT_TOL_GAP_REL: float = 1e-12
DESCENT_ABS_TOL: float = 1e-12
MC_SLACK_SIGMAS: float = 4.0
QUAD_DESCENT_REL: float = 1e-9
NO_MERGE_WINDOW: int = 10

# Backends
DEFAULT_MC_SAMPLES: int = 200_000
MC_CHUNK: int = 65_536
DEFAULT_QUAD_NODES: int = 512
QUAD_PANEL: int = 16
QUAD_LINE_NODES: int = 32
UNBOUNDED_INFLATE_SIGMAS: float = 6.0

# Splitting
SPLIT_MAX_RETRIES: int = 32
SPHERE_PULLBACK_TRIES: int = 64

# Faces and Hessian
FACE_PROBES: int = 128
TOL_EIG_REL: float = 1e-7
SYMMETRY_TOL: float = 1e-8
FD_HESSIAN_STEP: float = 1e-4
FD_GRADIENT_REL_STEP: float = 1e-5
DIVERGENCE_DENSITY_RATIO: float = 1e-6

# Radius search
RADIUS_R_POINTS: int = 32
RADIUS_BIG_R_POINTS: int = 64
RADIUS_QUANTILE_LO: float = 0.01
RADIUS_QUANTILE_HI: float = 0.50
RADIUS_SPAN: float = 1e3
RADIUS_GUARD_FACTOR: float = 2.0

FAMILY_ALIASES: Dict[str, str] = {
    "uniform01": "uniform01",
    "unif01": "uniform01",
    "u01": "uniform01",
    "uniform": "uniform",
    "unif": "uniform",
    "box": "uniform",
    "gauss1d": "gauss1d",
    "normal1d": "gauss1d",
    "stdnormal": "gauss1d",
    "gaussian": "gaussian",
    "gauss": "gaussian",
    "normal": "gaussian",
    "exponential": "exponential",
    "exp": "exponential",
    "expon": "exponential",
    "empirical": "empirical",
    "data": "empirical",
    "csv": "empirical",
}


def progress_bar(done: int, total: int, length: int = 8) -> str:
    """Create a text progress bar for ladder logging."""
    fraction = done / total if total > 0 else 1.0
    filled_length = int(length * fraction)
    return "█" * filled_length + "░" * (length - filled_length)


def match_family(user_input: str) -> Optional[str]:
    """Match a distribution name to a family using aliases and fuzzy matching."""
    user_input_lower = user_input.lower().strip().replace("-", "").replace("_", "")
    if not user_input_lower:
        return None
    if user_input_lower in FAMILY_ALIASES:
        return FAMILY_ALIASES[user_input_lower]
    matches = get_close_matches(user_input_lower, list(FAMILY_ALIASES.keys()), n=1, cutoff=0.75)
    if matches:
        return FAMILY_ALIASES[matches[0]]
    return None
