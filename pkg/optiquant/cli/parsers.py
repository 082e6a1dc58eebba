"""Argument parser and flag value parsers for the command line."""

import argparse
from typing import Any, Dict, List, Union

from optiquant.cli.config import MODES
from optiquant.errors import ConfigurationError


class ValueParser:
	"""Parses free-form flag values into config field values."""

	@staticmethod
	def parse_distribution(text: str) -> Dict[str, Any]:
		"""``name`` or ``name:key=value,key=value`` (values are numbers or ``a;b`` vectors)."""
		name, _, rest = text.strip().partition(":")
		if not name:
			raise ValueError("Format: `NAME[:key=value,...]`")
		spec: Dict[str, Any] = {"family": name}
		for item in filter(None, (part.strip() for part in rest.split(","))):
			key, sep, raw = item.partition("=")
			if not sep or not key:
				raise ValueError(f"Invalid distribution parameter {item!r}")
			try:
				values = [float(v) for v in raw.split(";")]
			except ValueError as exc:
				raise ValueError(f"Invalid number in {item!r}") from exc
			spec[key.strip()] = values[0] if len(values) == 1 else values
		return spec

	@staticmethod
	def parse_radius(text: str) -> Union[float, str]:
		if text.strip().lower() == "auto":
			return "auto"
		try:
			value = float(text)
		except ValueError as exc:
			raise ValueError("Radius must be a number or `auto`") from exc
		if not value > 0:
			raise ValueError("Radius must be positive")
		return value

	@staticmethod
	def parse_level(text: str) -> int:
		try:
			value = int(text)
		except ValueError as exc:
			raise ValueError(f"Invalid level {text!r}") from exc
		if value < 1:
			raise ValueError("Level must be at least 1")
		return value

	@staticmethod
	def parse_points(text: str) -> List[List[float]]:
		"""Inline grid ``x1;x2;...`` with ``a,b`` coordinates per point."""
		try:
			return [[float(v) for v in point.split(",")] for point in text.split(";") if point.strip()]
		except ValueError as exc:
			raise ValueError(f"Invalid inline grid {text!r}") from exc


class ArgumentParser(argparse.ArgumentParser):
	"""argparse parser whose usage errors raise ConfigurationError instead of exiting."""

	def error(self, message: str):
		raise ConfigurationError(f"{self.prog}: {message}", code="bad_argument", details={"usage": self.format_usage().strip()})


def _common_flags() -> argparse.ArgumentParser:
	common = argparse.ArgumentParser(add_help=False)
	add = common.add_argument
	add("--config", help="JSON config file; flags override its fields")
	add("--dist", help="distribution family, optionally NAME:key=value,...")
	add("--data", help="CSV of points (x1..xd[,weight]) for an empirical law")
	add("--N", dest="N", help="quantization level")
	add("--Nmax", dest="N_max", help="top level of a splitting ladder")
	add("--backend", help="exact1d | mc | atoms | quad2d")
	add("--samples", type=int, help="Monte Carlo sample count")
	add("--seed", type=int, help="seed (required for the mc backend)")
	add("--max-iter", dest="max_iter", type=int)
	add("--tol-gap", dest="tol_gap", type=float)
	add("--tol-move", dest="tol_move", type=float)
	add("--radius", help="ball radius for the bounded variant, or `auto`")
	add("--pullback", help="segment | freeze | sphere")
	add("--restarts", type=int, help="multi-start restarts")
	add("--init", help="grid file (.json/.csv) or inline `x1;x2;...` points")
	add("--c", dest="c", type=float, help="error level c for the radius bound")
	add("--e-prev", dest="e_prev", type=float, help="e_{N-1} for the radius bound")
	add("--quad-points", dest="quad_points", type=int)
	add("--out", help="output directory (default $OPTIQUANT_OUT or ./out)")
	add("--plot", action="store_true", default=None, help="also write trace.png")
	return common


def build_parser() -> argparse.ArgumentParser:
	parser = ArgumentParser(
		prog="optiquant",
		description="Optimal quantizer grids with the batch Lloyd algorithm.",
	)
	sub = parser.add_subparsers(dest="mode", required=True)
	common = _common_flags()
	helps = {
		"run": "Lloyd iteration from given or random points",
		"ladder": "splitting ladder from one point up to --Nmax",
		"bounded": "Lloyd iteration confined to a ball",
		"radius": "a-priori radius bound",
		"hessian": "Hessian and stability label of a grid",
		"optimal-error": "multi-start estimate of e_N",
	}
	for mode in MODES:
		sub.add_parser(mode, parents=[common], help=helps[mode])
	return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
	"""Turn parsed flags into RunConfig overrides; raises ValueError on bad values."""
	overrides: Dict[str, Any] = {
		"mode": args.mode,
		"data": args.data,
		"backend": args.backend,
		"samples": args.samples,
		"seed": args.seed,
		"max_iter": args.max_iter,
		"tol_gap": args.tol_gap,
		"tol_move": args.tol_move,
		"pullback": args.pullback,
		"restarts": args.restarts,
		"c": args.c,
		"e_prev": args.e_prev,
		"quad_points": args.quad_points,
		"out": args.out,
		"plot": args.plot,
	}
	if args.dist is not None:
		overrides["distribution"] = ValueParser.parse_distribution(args.dist)
	if args.N is not None:
		overrides["N"] = ValueParser.parse_level(args.N)
	if args.N_max is not None:
		overrides["N_max"] = ValueParser.parse_level(args.N_max)
	if args.radius is not None:
		overrides["radius"] = ValueParser.parse_radius(args.radius)
	if args.init is not None:
		overrides["init"] = _parse_init(args.init)
	return overrides


def _parse_init(text: str) -> Union[str, List[List[float]]]:
	if text.lower().endswith((".json", ".csv")):
		return text
	return ValueParser.parse_points(text)


__all__ = ["ArgumentParser", "ValueParser", "build_parser", "flag_overrides"]
