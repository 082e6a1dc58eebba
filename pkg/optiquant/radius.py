"""A-priori radius bounds for grids with error at most c.

A grid whose quantization error is at most ``c`` lies in B(m_X, R) when
some r satisfies

    (i)  (R/5 - r)^2 P(|X - m_X| <= r) > c
    (ii) 4 ∫_{|ξ - m_X| >= 2R/5} |ξ - m_X|^2 μ(dξ) < e_prev^2 - c^2

with e_prev an (estimated) e_{N-1}. Condition (ii) works with squared errors
since its left side is a second moment.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from optiquant.constants import (
    DEFAULT_MC_SAMPLES,
    MC_SLACK_SIGMAS,
    RADIUS_BIG_R_POINTS,
    RADIUS_QUANTILE_HI,
    RADIUS_QUANTILE_LO,
    RADIUS_R_POINTS,
    RADIUS_SPAN,
)
from optiquant.errors import InfeasibleRadiusError, PreconditionError
from optiquant.measure import DistributionModel, ball_mass, quantile_radii, tail_second_moment
from optiquant.measure.rng import SeedLike
from optiquant.voronoi import Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadiusBound:
    R: float
    r_witness: float
    c: float
    e_prev: float
    slack_i: float
    slack_ii: float
    ball_mass: float
    tail: float
    std_err: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _slack_i(R: float, r: float, mass: float, c: float) -> float:
    if r >= R / 5.0:
        return -math.inf
    return (R / 5.0 - r) ** 2 * mass - c


def check_conditions(dist: DistributionModel, R: float, r: float, c: float, e_prev: float,
                     samples: int = DEFAULT_MC_SAMPLES, seed: SeedLike = 0) -> Tuple[float, float]:
    """Margins ``(slack_i, slack_ii)``; both positive means (R, r) is a valid witness."""
    mass = ball_mass(dist, r, samples, seed).value
    tail = tail_second_moment(dist, R, samples, seed).value
    return _slack_i(R, r, mass, c), (e_prev ** 2 - c ** 2) - 4.0 * tail


def solve_radius(dist: DistributionModel, c: float, e_prev: float, r_points: int = RADIUS_R_POINTS,
                 R_points: int = RADIUS_BIG_R_POINTS, samples: int = DEFAULT_MC_SAMPLES,
                 seed: SeedLike = 0) -> RadiusBound:
    """Smallest R on the search grid admitting a witness r for both conditions."""
    if not (c > 0 and c <= e_prev):
        raise PreconditionError(f"radius bound needs 0 < c <= e_prev, got c={c}, e_prev={e_prev}")

    levels = np.linspace(RADIUS_QUANTILE_LO, RADIUS_QUANTILE_HI, r_points)
    radii = np.unique(quantile_radii(dist, levels, samples, seed))
    radii = radii[radii > 0]
    if radii.size == 0:
        raise PreconditionError(f"{dist.name} has no mass away from its mean")
    masses = np.array([ball_mass(dist, float(r), samples, seed).value for r in radii])
    r_min = float(radii[0])
    candidates = np.geomspace(5.0 * r_min, 5.0 * r_min * RADIUS_SPAN, R_points)

    best_i, best_ii = -math.inf, -math.inf
    for R in candidates:
        tail = tail_second_moment(dist, float(R), samples, seed)
        slack_ii = (e_prev ** 2 - c ** 2) - 4.0 * tail.value
        margin_ii = slack_ii - 4.0 * MC_SLACK_SIGMAS * tail.std_err
        slacks_i = np.array([_slack_i(float(R), float(r), m, c) for r, m in zip(radii, masses)])
        k = int(np.argmax(slacks_i))
        best_i, best_ii = max(best_i, float(slacks_i[k])), max(best_ii, slack_ii)
        if slacks_i[k] > 0 and margin_ii > 0:
            bound = RadiusBound(
                R=float(R),
                r_witness=float(radii[k]),
                c=float(c),
                e_prev=float(e_prev),
                slack_i=float(slacks_i[k]),
                slack_ii=float(slack_ii),
                ball_mass=float(masses[k]),
                tail=tail.value,
                std_err=tail.std_err,
            )
            logger.info("radius bound R=%.6g (r=%.6g, slack_i=%.3e, slack_ii=%.3e)", bound.R, bound.r_witness,
                        bound.slack_i, bound.slack_ii)
            return bound

    binding = "ii" if best_ii <= 0 else "i"
    raise InfeasibleRadiusError(
        f"no radius up to {candidates[-1]:.6g} satisfies condition ({binding})",
        details={
            "binding": binding,
            "c": float(c),
            "e_prev": float(e_prev),
            "R_max": float(candidates[-1]),
            "best_slack_i": best_i,
            "best_slack_ii": best_ii,
        },
    )


def gaussian_radius_asymptote(d: float) -> float:
    """lim R(N) / sqrt(log N) for N(0, I_d); ``d = math.inf`` gives 1/sqrt(2)."""
    if not d >= 1:
        raise PreconditionError(f"dimension must be at least 1, got {d}")
    if math.isinf(d):
        return 1.0 / math.sqrt(2.0)
    return math.sqrt(1.0 + 2.0 / d) / math.sqrt(2.0)


def measured_radius(grid: Grid, dist: DistributionModel, center=None) -> float:
    """max_i |x_i - m_X|."""
    c = np.asarray(dist.mean if center is None else center, dtype=float)
    return float(np.max(np.linalg.norm(grid.points - c, axis=1)))


def level_gap_profile(errors: Sequence[float], d: int) -> np.ndarray:
    """(e_{N-1} - e_N) N^{(d+2)/d} for N = 2..len(errors); ``errors[0]`` is e_1."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        return np.zeros(0)
    levels = np.arange(2, e.size + 1, dtype=float)
    return (e[:-1] - e[1:]) * levels ** ((d + 2.0) / d)


__all__ = [
    "RadiusBound",
    "check_conditions",
    "solve_radius",
    "gaussian_radius_asymptote",
    "measured_radius",
    "level_gap_profile",
]
