"""Built-in analytic families: uniform, Gaussian, exponential, user log-concave."""

import logging
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

from optiquant.errors import ConfigurationError
from optiquant.measure.model import DistributionModel, SupportSpec

logger = logging.getLogger(__name__)

VectorLike = Union[float, Sequence[float]]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(z: float) -> float:
    if math.isinf(z):
        return 0.0
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _z_phi(z: float) -> float:
    if math.isinf(z):
        return 0.0
    return z * _phi(z)


def _tilt_exponent(d: int) -> float:
    return d / (d + 2.0)


# ---------------------------------------------------------------------------
# Uniform
# ---------------------------------------------------------------------------

def uniform(lo: VectorLike = 0.0, hi: VectorLike = 1.0) -> DistributionModel:
    """Uniform law on an interval (1D) or an axis-aligned box."""
    lo_v = np.atleast_1d(np.asarray(lo, dtype=float))
    hi_v = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo_v.shape != hi_v.shape:
        raise ConfigurationError("uniform bounds must have matching shapes")
    if not (np.all(np.isfinite(lo_v)) and np.all(np.isfinite(hi_v))):
        raise ConfigurationError("uniform bounds must be finite")
    dim = lo_v.size
    widths = hi_v - lo_v
    volume = float(np.prod(widths))
    mean = 0.5 * (lo_v + hi_v)
    scale = widths / math.sqrt(12.0)

    def density(points: np.ndarray) -> np.ndarray:
        inside = np.all((points >= lo_v) & (points <= hi_v), axis=1)
        return np.where(inside, 1.0 / volume, 0.0)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(lo_v, hi_v, size=(n, dim))

    params = {"lo": lo_v.tolist(), "hi": hi_v.tolist()}
    if dim > 1:
        return DistributionModel(
            kind="analyticNd",
            dim=dim,
            mean=mean,
            support=SupportSpec.box(lo_v, hi_v),
            draw=draw,
            name="uniform",
            params=params,
            scale=scale,
            density=density,
            tilted_draw=draw,
        )

    a0, b0, width = float(lo_v[0]), float(hi_v[0]), float(widths[0])

    def _clip(a: float, b: float):
        return min(max(a, a0), b0), min(max(b, a0), b0)

    def cdf(x: float) -> float:
        return min(max((x - a0) / width, 0.0), 1.0)

    def first(a: float, b: float) -> float:
        a, b = _clip(a, b)
        return (b * b - a * a) / (2.0 * width)

    def second(a: float, b: float) -> float:
        a, b = _clip(a, b)
        return (b ** 3 - a ** 3) / (3.0 * width)

    return DistributionModel(
        kind="analytic1d",
        dim=1,
        mean=mean,
        support=SupportSpec.interval(a0, b0),
        draw=draw,
        name="uniform01" if (a0, b0) == (0.0, 1.0) else "uniform",
        params=params,
        scale=scale,
        density=density,
        cdf=cdf,
        partial_first_moment=first,
        partial_second_moment=second,
        tilted_draw=draw,
    )


def uniform01() -> DistributionModel:
    return uniform(0.0, 1.0)


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------

def gaussian(mean: VectorLike = 0.0, var: VectorLike = 1.0) -> DistributionModel:
    """Gaussian law with diagonal covariance ``diag(var)``."""
    mean_v = np.atleast_1d(np.asarray(mean, dtype=float))
    var_v = np.broadcast_to(np.atleast_1d(np.asarray(var, dtype=float)), mean_v.shape).copy()
    if np.any(var_v <= 0):
        raise ConfigurationError("gaussian variances must be positive")
    dim = mean_v.size
    sd = np.sqrt(var_v)
    log_norm = -0.5 * dim * math.log(2.0 * math.pi) - float(np.sum(np.log(sd)))
    tilted_sd = sd * math.sqrt(1.0 / _tilt_exponent(dim))

    def density(points: np.ndarray) -> np.ndarray:
        z = (points - mean_v) / sd
        return np.exp(log_norm - 0.5 * np.sum(z * z, axis=1))

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(mean_v, sd, size=(n, dim))

    def tilted(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(mean_v, tilted_sd, size=(n, dim))

    params = {"mean": mean_v.tolist(), "var": var_v.tolist()}
    if dim > 1:
        return DistributionModel(
            kind="analyticNd",
            dim=dim,
            mean=mean_v,
            support=SupportSpec.everywhere(),
            draw=draw,
            name="gaussian",
            params=params,
            scale=sd,
            density=density,
            tilted_draw=tilted,
        )

    m, s = float(mean_v[0]), float(sd[0])

    def cdf(x: float) -> float:
        return float(ndtr((x - m) / s))

    def first(a: float, b: float) -> float:
        za, zb = (a - m) / s, (b - m) / s
        mass = float(ndtr(zb) - ndtr(za))
        return m * mass + s * (_phi(za) - _phi(zb))

    def second(a: float, b: float) -> float:
        za, zb = (a - m) / s, (b - m) / s
        mass = float(ndtr(zb) - ndtr(za))
        return (
            m * m * mass
            + 2.0 * m * s * (_phi(za) - _phi(zb))
            + s * s * (mass - (_z_phi(zb) - _z_phi(za)))
        )

    return DistributionModel(
        kind="analytic1d",
        dim=1,
        mean=mean_v,
        support=SupportSpec.interval(-math.inf, math.inf),
        draw=draw,
        name="gauss1d" if (m, s) == (0.0, 1.0) else "gaussian",
        params=params,
        scale=sd,
        density=density,
        cdf=cdf,
        partial_first_moment=first,
        partial_second_moment=second,
        tilted_draw=tilted,
    )


def gauss1d() -> DistributionModel:
    return gaussian(0.0, 1.0)


# ---------------------------------------------------------------------------
# Exponential
# ---------------------------------------------------------------------------

def exponential(rate: float = 1.0) -> DistributionModel:
    """Exponential law on [0, ∞) with the given rate."""
    lam = float(rate)
    if not lam > 0:
        raise ConfigurationError("exponential rate must be positive")
    tilted_rate = lam * _tilt_exponent(1)

    def _clip(a: float, b: float):
        return max(a, 0.0), max(b, 0.0)

    def density(points: np.ndarray) -> np.ndarray:
        x = points[:, 0]
        return np.where(x >= 0.0, lam * np.exp(-lam * np.maximum(x, 0.0)), 0.0)

    def cdf(x: float) -> float:
        return 0.0 if x <= 0.0 else -math.expm1(-lam * x)

    def _f1(x: float) -> float:
        if math.isinf(x):
            return 0.0
        return -math.exp(-lam * x) * (x + 1.0 / lam)

    def _f2(x: float) -> float:
        if math.isinf(x):
            return 0.0
        return -math.exp(-lam * x) * (x * x + 2.0 * x / lam + 2.0 / lam ** 2)

    def first(a: float, b: float) -> float:
        a, b = _clip(a, b)
        return _f1(b) - _f1(a)

    def second(a: float, b: float) -> float:
        a, b = _clip(a, b)
        return _f2(b) - _f2(a)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / lam, size=(n, 1))

    def tilted(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / tilted_rate, size=(n, 1))

    return DistributionModel(
        kind="analytic1d",
        dim=1,
        mean=[1.0 / lam],
        support=SupportSpec.interval(0.0, math.inf),
        draw=draw,
        name="exponential",
        params={"rate": lam},
        scale=[1.0 / lam],
        density=density,
        cdf=cdf,
        partial_first_moment=first,
        partial_second_moment=second,
        tilted_draw=tilted,
    )


# ---------------------------------------------------------------------------
# User-supplied 1D log-concave law
# ---------------------------------------------------------------------------

def _inverse_transform(cdf: Callable[[float], float], a: float, b: float) -> Callable:
    """Build a draw function by inverting ``cdf`` with brentq."""

    def _bracket(u: float):
        lo = a if math.isfinite(a) else -1.0
        hi = b if math.isfinite(b) else 1.0
        while not math.isfinite(a) and cdf(lo) > u:
            lo *= 2.0
        while not math.isfinite(b) and cdf(hi) < u:
            hi *= 2.0
        return lo, hi

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        us = rng.uniform(0.0, 1.0, size=n)
        out = np.empty((n, 1))
        for k, u in enumerate(us):
            lo, hi = _bracket(u)
            out[k, 0] = brentq(lambda x: cdf(x) - u, lo, hi, xtol=1e-12)
        return out

    return draw


def log_concave_1d(
    density: Callable[[np.ndarray], np.ndarray],
    cdf: Callable[[float], float],
    partial_first_moment: Optional[Callable[[float, float], float]] = None,
    partial_second_moment: Optional[Callable[[float, float], float]] = None,
    support: tuple = (-math.inf, math.inf),
    draw: Optional[Callable] = None,
    name: str = "logconcave",
) -> DistributionModel:
    """Wrap user closures for a one-dimensional log-concave law.

    Missing partial moments are integrated with ``scipy.integrate.quad`` and a
    missing sampler becomes inverse-CDF sampling.
    """
    a, b = float(support[0]), float(support[1])

    def rho(x: float) -> float:
        return float(np.asarray(density(np.asarray([x], dtype=float))).reshape(-1)[0])

    def _clip(lo: float, hi: float):
        return min(max(lo, a), b), min(max(hi, a), b)

    if partial_first_moment is None:
        def partial_first_moment(lo: float, hi: float) -> float:
            lo, hi = _clip(lo, hi)
            if lo >= hi:
                return 0.0
            return quad(lambda x: x * rho(x), lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)[0]

    if partial_second_moment is None:
        def partial_second_moment(lo: float, hi: float) -> float:
            lo, hi = _clip(lo, hi)
            if lo >= hi:
                return 0.0
            return quad(lambda x: x * x * rho(x), lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)[0]

    mean = partial_first_moment(a, b)
    variance = partial_second_moment(a, b) - mean * mean
    if not (math.isfinite(mean) and math.isfinite(variance)):
        raise ConfigurationError(f"{name}: mean and variance must be finite")

    def density_nd(points: np.ndarray) -> np.ndarray:
        return np.asarray(density(points[:, 0]), dtype=float)

    if draw is None:
        draw = _inverse_transform(cdf, a, b)

    tilted = None
    power = _tilt_exponent(1)
    try:
        z = quad(lambda x: rho(x) ** power, a, b, limit=200)[0]
    except Exception:  # noqa: BLE001
        z = math.inf
    if math.isfinite(z) and z > 0:
        def tilted_cdf(x: float) -> float:
            if x <= a:
                return 0.0
            return min(1.0, quad(lambda t: rho(t) ** power, a, min(x, b), limit=200)[0] / z)

        tilted = _inverse_transform(tilted_cdf, a, b)
    else:
        logger.warning("%s: density^%.3f is not integrable; splitting falls back to the law itself", name, power)

    return DistributionModel(
        kind="analytic1d",
        dim=1,
        mean=[mean],
        support=SupportSpec.interval(a, b),
        draw=draw,
        name=name,
        params={"support": [a, b]},
        scale=[math.sqrt(max(variance, 0.0))],
        density=density_nd,
        cdf=cdf,
        partial_first_moment=partial_first_moment,
        partial_second_moment=partial_second_moment,
        tilted_draw=tilted,
    )


__all__ = ["uniform", "uniform01", "gaussian", "gauss1d", "exponential", "log_concave_1d"]
