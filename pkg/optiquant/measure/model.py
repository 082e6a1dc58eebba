"""Distribution model and support descriptors."""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np

from optiquant.errors import ConfigurationError
from optiquant.measure.rng import SeedLike, stream

DrawFn = Callable[[np.random.Generator, int], np.ndarray]

KINDS = ("analytic1d", "analyticNd", "empirical")
SHAPES = ("interval", "box", "ball", "all")


class Estimate(NamedTuple):
    """A value with its Monte Carlo standard error (0.0 when exact)."""

    value: float
    std_err: float = 0.0


def _as_vector(values, dim: Optional[int] = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if dim is not None and arr.shape != (dim,):
        raise ConfigurationError(f"expected a vector of length {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SupportSpec:
    """Closed convex set carrying the law."""

    shape: str
    lo: np.ndarray = field(default=None)
    hi: np.ndarray = field(default=None)
    center: np.ndarray = field(default=None)
    radius: float = math.inf
    convex: bool = True

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown support shape {self.shape!r}")
        if self.shape in ("interval", "box"):
            lo = _as_vector(self.lo)
            hi = _as_vector(self.hi, lo.size)
            if not np.all(lo < hi):
                raise ConfigurationError(f"support needs lo < hi componentwise, got {lo} and {hi}")
            if self.shape == "interval" and lo.size != 1:
                raise ConfigurationError("interval support is one-dimensional")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.shape == "ball":
            if not self.radius > 0:
                raise ConfigurationError("ball support needs a positive radius")
            object.__setattr__(self, "center", _as_vector(self.center))

    @classmethod
    def interval(cls, a: float, b: float) -> "SupportSpec":
        return cls("interval", lo=[a], hi=[b])

    @classmethod
    def box(cls, lo, hi) -> "SupportSpec":
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def everywhere(cls) -> "SupportSpec":
        return cls("all")

    @property
    def is_bounded(self) -> bool:
        if self.shape in ("interval", "box"):
            return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))
        return self.shape == "ball"

    def bounding_box(self, dim: int) -> Tuple[np.ndarray, np.ndarray]:
        if self.shape in ("interval", "box"):
            return self.lo.copy(), self.hi.copy()
        if self.shape == "ball":
            return self.center - self.radius, self.center + self.radius
        return np.full(dim, -np.inf), np.full(dim, np.inf)

    def contains(self, points, atol: float = 1e-12) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if self.shape in ("interval", "box"):
            return np.all((pts >= self.lo - atol) & (pts <= self.hi + atol), axis=1)
        if self.shape == "ball":
            return np.linalg.norm(pts - self.center, axis=1) <= self.radius + atol
        return np.ones(len(pts), dtype=bool)


@dataclass(frozen=True)
class DistributionModel:
    """A probability law with the integral queries the algorithms need.

    One-dimensional analytic laws expose ``cdf`` and closed-form partial
    moments; every kind exposes ``draw(rng, n)``. Instances are immutable and
    safe to share between workers.
    """

    kind: str
    dim: int
    mean: np.ndarray
    support: SupportSpec
    draw: DrawFn
    name: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)
    scale: Optional[np.ndarray] = None
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cdf: Optional[Callable[[float], float]] = None
    partial_first_moment: Optional[Callable[[float, float], float]] = None
    partial_second_moment: Optional[Callable[[float, float], float]] = None
    tilted_draw: Optional[DrawFn] = None
    points: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.dim}")
        object.__setattr__(self, "mean", _as_vector(self.mean, self.dim))
        if self.scale is not None:
            object.__setattr__(self, "scale", _as_vector(self.scale, self.dim))
        if self.kind == "analytic1d":
            if self.dim != 1:
                raise ConfigurationError("analytic1d laws are one-dimensional")
            if self.cdf is None or self.partial_first_moment is None:
                raise ConfigurationError("analytic1d laws need cdf and partial_first_moment")
        if self.kind == "empirical" and (self.points is None or self.weights is None):
            raise ConfigurationError("empirical laws need points and weights")

    @property
    def is_1d_analytic(self) -> bool:
        return self.kind == "analytic1d"

    @property
    def covers_hyperplanes(self) -> bool:
        """True when hyperplanes carry no mass (strongly continuous law)."""
        return self.kind != "empirical"

    def sampler(self, seed: SeedLike, count: int, tag: str = "sample") -> np.ndarray:
        """Deterministic i.i.d. draws of shape ``(count, dim)``."""
        rng = stream(seed, tag)
        return np.asarray(self.draw(rng, count), dtype=float).reshape(count, self.dim)

    def evaluate_density(self, points) -> np.ndarray:
        if self.density is None:
            raise ConfigurationError(f"distribution {self.name!r} has no density")
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.density(pts), dtype=float).reshape(-1)

    def box(self, inflate: float) -> Tuple[np.ndarray, np.ndarray]:
        """Support bounding box, unbounded sides replaced by mean ± inflate·scale."""
        lo, hi = self.support.bounding_box(self.dim)
        scale = self.scale if self.scale is not None else np.ones(self.dim)
        lo = np.where(np.isfinite(lo), lo, self.mean - inflate * scale)
        hi = np.where(np.isfinite(hi), hi, self.mean + inflate * scale)
        return lo, hi


__all__ = ["Estimate", "SupportSpec", "DistributionModel", "DrawFn", "KINDS"]
