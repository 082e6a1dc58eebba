"""Integral and sampling queries against a DistributionModel."""

import logging
import math
from typing import Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from optiquant.constants import DEFAULT_MC_SAMPLES
from optiquant.errors import ConfigurationError, DomainError, PreconditionError, UnsupportedBackendError
from optiquant.measure.model import DistributionModel, Estimate, KINDS
from optiquant.measure.rng import SeedLike, stream

logger = logging.getLogger(__name__)


def sample(dist: DistributionModel, n: int, seed: SeedLike, tag: str = "sample") -> np.ndarray:
    """Draw ``n`` i.i.d. points, reproducible for fixed ``(seed, tag, n)``."""
    if dist.kind not in KINDS:
        raise ConfigurationError(f"cannot sample distribution kind {dist.kind!r}")
    if n < 1:
        raise ConfigurationError(f"sample size must be at least 1, got {n}")
    return dist.sampler(seed, int(n), tag=tag)


def _require_1d(dist: DistributionModel, what: str) -> None:
    if not dist.is_1d_analytic:
        raise UnsupportedBackendError(f"{what} needs a one-dimensional analytic law, got {dist.kind}")


def interval_stats(dist: DistributionModel, a: float, b: float) -> Tuple[float, float]:
    """Mass and first moment of ``[a, b]`` (infinite endpoints allowed)."""
    _require_1d(dist, "interval_stats")
    if a > b:
        raise PreconditionError(f"interval_stats needs a <= b, got ({a}, {b})")
    if a == b:
        return 0.0, 0.0
    mass = dist.cdf(b) - dist.cdf(a)
    return float(max(mass, 0.0)), float(dist.partial_first_moment(a, b))


def interval_second_moment(dist: DistributionModel, a: float, b: float) -> float:
    """∫_a^b ξ² μ(dξ)."""
    _require_1d(dist, "interval_second_moment")
    if a >= b:
        return 0.0
    if dist.partial_second_moment is not None:
        return float(dist.partial_second_moment(a, b))
    rho = dist.density
    return quad(lambda x: x * x * float(rho(np.array([[x]]))[0]), a, b, limit=200)[0]


def _complement_intervals(dist: DistributionModel, t: float):
    m = float(dist.mean[0])
    lo, hi = dist.support.bounding_box(1)
    lo, hi = float(lo[0]), float(hi[0])
    pieces = [(lo, min(m - t, hi)), (max(m + t, lo), hi)]
    return [(a, b) for a, b in pieces if a < b]


def tail_second_moment(dist: DistributionModel, R: float, samples: int = DEFAULT_MC_SAMPLES, seed: SeedLike = 0) -> Estimate:
    """∫ over the complement of B(m_X, 2R/5) of |ξ − m_X|² μ(dξ)."""
    if R < 0:
        raise PreconditionError(f"radius must be non-negative, got {R}")
    t = 2.0 * R / 5.0
    m = dist.mean

    if dist.is_1d_analytic:
        rho = dist.density
        m0 = float(m[0])
        total = 0.0
        for a, b in _complement_intervals(dist, t):
            value, _ = quad(
                lambda x: (x - m0) ** 2 * float(rho(np.array([[x]]))[0]),
                a, b, epsabs=1e-14, epsrel=1e-12, limit=400,
            )
            total += value
        result = Estimate(total, 0.0)
    elif dist.kind == "empirical":
        sq = np.sum((dist.points - m) ** 2, axis=1)
        outside = np.sqrt(sq) >= t
        result = Estimate(float(dist.weights @ np.where(outside, sq, 0.0)), 0.0)
    else:
        pts = sample(dist, samples, seed, tag="tail")
        sq = np.sum((pts - m) ** 2, axis=1)
        values = np.where(np.sqrt(sq) >= t, sq, 0.0)
        result = Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(samples)))

    if not math.isfinite(result.value):
        raise DomainError(f"second moment of {dist.name} is not finite", details={"R": R})
    return result


def ball_mass(dist: DistributionModel, r: float, samples: int = DEFAULT_MC_SAMPLES, seed: SeedLike = 0) -> Estimate:
    """P(|X − m_X| <= r)."""
    if r < 0:
        raise PreconditionError(f"radius must be non-negative, got {r}")
    m = dist.mean
    if dist.is_1d_analytic:
        m0 = float(m[0])
        return Estimate(float(dist.cdf(m0 + r) - dist.cdf(m0 - r)), 0.0)
    if dist.kind == "empirical":
        inside = np.linalg.norm(dist.points - m, axis=1) <= r
        return Estimate(float(dist.weights[inside].sum()), 0.0)
    pts = sample(dist, samples, seed, tag="ball")
    p = float(np.mean(np.linalg.norm(pts - m, axis=1) <= r))
    return Estimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / samples))


def quantile_radii(dist: DistributionModel, levels: Sequence[float], samples: int = DEFAULT_MC_SAMPLES, seed: SeedLike = 0) -> np.ndarray:
    """Quantiles of |X − m_X| at the given probability levels."""
    levels = np.asarray(levels, dtype=float)
    if np.any((levels <= 0) | (levels >= 1)):
        raise PreconditionError("quantile levels must lie in (0, 1)")
    m = dist.mean

    if dist.is_1d_analytic:
        radii = []
        for q in levels:
            hi = float(dist.scale[0]) if dist.scale is not None else 1.0
            while ball_mass(dist, hi).value < q:
                hi *= 2.0
            radii.append(brentq(lambda r: ball_mass(dist, r).value - q, 0.0, hi, xtol=1e-12))
        return np.asarray(radii)

    if dist.kind == "empirical":
        dists = np.linalg.norm(dist.points - m, axis=1)
        order = np.argsort(dists, kind="stable")
        cumulative = np.cumsum(dist.weights[order])
        idx = np.minimum(np.searchsorted(cumulative, levels, side="left"), len(order) - 1)
        return dists[order][idx]

    pts = sample(dist, samples, seed, tag="quantiles")
    return np.quantile(np.linalg.norm(pts - m, axis=1), levels)


def splitting_sampler(dist: DistributionModel, seed: SeedLike, tag: str = "split") -> Tuple[np.ndarray, bool]:
    """Draw one candidate point for a splitting initialization.

    Uses the law proportional to ρ^{d/(d+2)} when the model provides it and
    the law itself otherwise. Returns ``(point, tilted)``.
    """
    rng = stream(seed, tag)
    if dist.kind != "empirical" and dist.tilted_draw is not None:
        point = np.asarray(dist.tilted_draw(rng, 1), dtype=float).reshape(dist.dim)
        return point, True
    if dist.kind != "empirical":
        logger.debug("%s has no tilted sampler; drawing from the law itself", dist.name)
    point = np.asarray(dist.draw(rng, 1), dtype=float).reshape(dist.dim)
    return point, False


__all__ = [
    "sample",
    "interval_stats",
    "interval_second_moment",
    "tail_second_moment",
    "ball_mass",
    "quantile_radii",
    "splitting_sampler",
]
