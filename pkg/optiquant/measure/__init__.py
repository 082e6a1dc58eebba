"""Probability laws and the integral queries the quantization modules use.

``build_distribution`` selects a family from a config mapping, the same way
the storage layer selects its backend from the environment.
"""

from typing import Any, Mapping

from optiquant.constants import match_family
from optiquant.errors import ConfigurationError

from .analytic import exponential, gauss1d, gaussian, log_concave_1d, uniform, uniform01
from .empirical import empirical, load_csv
from .model import DistributionModel, Estimate, SupportSpec
from .queries import (
	ball_mass,
	interval_second_moment,
	interval_stats,
	quantile_radii,
	sample,
	splitting_sampler,
	tail_second_moment,
)
from .rng import derive_seed, stream


def build_distribution(spec: Mapping[str, Any]) -> DistributionModel:
	"""Build a model from ``{"family": name, ...parameters}``."""
	raw = str(spec.get("family", ""))
	family = match_family(raw)
	if family is None:
		raise ConfigurationError(f"unknown distribution family {raw!r}", code="unknown_distribution")
	try:
		if family == "uniform01":
			return uniform01()
		if family == "uniform":
			return uniform(spec.get("lo", 0.0), spec.get("hi", 1.0))
		if family == "gauss1d":
			return gauss1d()
		if family == "gaussian":
			return gaussian(spec.get("mean", 0.0), spec.get("var", 1.0))
		if family == "exponential":
			return exponential(float(spec.get("rate", 1.0)))
		if "path" in spec:
			return load_csv(spec["path"])
		if "points" in spec:
			return empirical(spec["points"], spec.get("weights"))
	except (TypeError, ValueError) as exc:
		raise ConfigurationError(f"bad parameters for {family}: {exc}") from exc
	raise ConfigurationError("empirical family needs 'path' or 'points'", code="missing_field")


__all__ = [
	"DistributionModel",
	"Estimate",
	"SupportSpec",
	"build_distribution",
	"uniform",
	"uniform01",
	"gaussian",
	"gauss1d",
	"exponential",
	"log_concave_1d",
	"empirical",
	"load_csv",
	"sample",
	"interval_stats",
	"interval_second_moment",
	"tail_second_moment",
	"ball_mass",
	"quantile_radii",
	"splitting_sampler",
	"stream",
	"derive_seed",
]
