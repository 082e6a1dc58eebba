"""Run configuration dataclass: defaults < JSON config file < command-line flags."""

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Union

from optiquant.constants import (
	DEFAULT_MAX_ITER,
	DEFAULT_MC_SAMPLES,
	DEFAULT_QUAD_NODES,
	DEFAULT_TOL_MOVE,
)
from optiquant.errors import ConfigurationError
from optiquant.lloyd import PULLBACKS
from optiquant.storage import load_report
from optiquant.voronoi import BACKEND_KINDS

MODES = ("run", "ladder", "bounded", "radius", "hessian", "optimal-error")

# config-file spellings that map onto field names
KEY_ALIASES = {
	"dist": "distribution",
	"Nmax": "N_max",
	"n_max": "N_max",
	"tol-gap": "tol_gap",
	"tol-move": "tol_move",
	"max-iter": "max_iter",
	"e-prev": "e_prev",
	"quad-points": "quad_points",
}


@dataclass
class RunConfig:
	mode: str = "run"
	distribution: Dict[str, Any] = field(default_factory=dict)
	data: Optional[str] = None
	N: Optional[int] = None
	N_max: Optional[int] = None
	backend: Optional[str] = None
	samples: int = DEFAULT_MC_SAMPLES
	seed: Optional[int] = None
	max_iter: int = DEFAULT_MAX_ITER
	tol_gap: Optional[float] = None
	tol_move: float = DEFAULT_TOL_MOVE
	radius: Optional[Union[float, str]] = None
	pullback: str = "segment"
	restarts: int = 4
	init: Optional[Union[str, List[Any]]] = None
	c: Optional[float] = None
	e_prev: Optional[float] = None
	quad_points: int = DEFAULT_QUAD_NODES
	out: Optional[str] = None
	plot: bool = False

	@classmethod
	def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
		known = {f.name for f in fields(cls)}
		values = {}
		for key, value in data.items():
			name = KEY_ALIASES.get(key, key)
			if name not in known:
				raise ConfigurationError(f"unknown config field {key!r}", details={"field": key})
			values[name] = value
		if isinstance(values.get("distribution"), str):
			values["distribution"] = {"family": values["distribution"]}
		return cls(**values)

	@classmethod
	def from_file(cls, path: str) -> "RunConfig":
		data = load_report(path)
		if not isinstance(data, dict):
			raise ConfigurationError(f"{path} must hold a JSON object")
		return cls.from_mapping(data)

	def merged(self, overrides: Mapping[str, Any]) -> "RunConfig":
		"""Copy with every non-None override applied."""
		values = asdict(self)
		for key, value in overrides.items():
			if value is None:
				continue
			if key == "distribution" and value.get("family") == values["distribution"].get("family"):
				values["distribution"] = {**values["distribution"], **value}
			else:
				values[key] = value
		return RunConfig(**values)

	@property
	def effective_seed(self) -> int:
		return 0 if self.seed is None else int(self.seed)

	def distribution_spec(self) -> Dict[str, Any]:
		if self.data:
			return {"family": "empirical", "path": self.data}
		return dict(self.distribution)

	def validate(self) -> "RunConfig":
		if self.mode not in MODES:
			raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
		if not self.data and not self.distribution.get("family"):
			raise ConfigurationError("a distribution (--dist) or data file (--data) is required", code="missing_field")
		if self.backend is not None and self.backend not in BACKEND_KINDS:
			raise ConfigurationError(f"unknown backend {self.backend!r}; expected one of {BACKEND_KINDS}")
		if self.backend == "mc" and self.seed is None:
			raise ConfigurationError("the mc backend needs --seed", code="missing_field")
		if self.pullback not in PULLBACKS:
			raise ConfigurationError(f"unknown pullback rule {self.pullback!r}")
		if self.mode == "ladder":
			self._require_level("N_max")
		elif self.mode == "radius":
			if self.c is None or self.e_prev is None:
				self._require_level("N")
		elif self.mode == "optimal-error" or self.init is None:
			self._require_level("N")
		if self.mode == "bounded" and self.radius is None:
			raise ConfigurationError("bounded mode needs --radius FLOAT|auto", code="missing_field")
		if isinstance(self.radius, (int, float)) and not self.radius > 0:
			raise ConfigurationError(f"radius must be positive, got {self.radius}")
		if isinstance(self.radius, str) and self.radius != "auto":
			raise ConfigurationError(f"radius must be a number or 'auto', got {self.radius!r}")
		if self.restarts < 1:
			raise ConfigurationError(f"restarts must be at least 1, got {self.restarts}")
		if self.samples < 1 or self.quad_points < 1:
			raise ConfigurationError("samples and quad_points must be positive")
		return self

	def _require_level(self, name: str) -> None:
		value = getattr(self, name)
		if value is None:
			flag = "--Nmax" if name == "N_max" else "--N"
			raise ConfigurationError(f"{self.mode} mode needs {flag}", code="missing_field")
		if int(value) < 1:
			raise ConfigurationError(f"{name} must be at least 1, got {value}")

	def to_dict(self) -> Dict[str, Any]:
		return asdict(self)


__all__ = ["MODES", "RunConfig"]
