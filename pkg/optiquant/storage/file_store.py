"""Local JSON/CSV persistence for grids, traces and reports."""

import csv
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Union

from optiquant.errors import ConfigurationError
from optiquant.lloyd import TRACE_FIELDS as TRACE_HEADER
from optiquant.voronoi import Grid

PathLike = Union[str, Path]


def default_out_dir() -> Path:
	return Path(os.getenv("OPTIQUANT_OUT", "out"))


def ensure_dir(path: PathLike) -> Path:
	out = Path(path)
	out.mkdir(parents=True, exist_ok=True)
	return out


def _require(path: PathLike) -> Path:
	p = Path(path)
	if not p.exists():
		raise ConfigurationError(f"file not found: {p}", code="config_not_found", details={"path": str(p)})
	return p


def _jsonable(value: Any) -> Any:
	"""numpy scalars and arrays as plain JSON values."""
	if hasattr(value, "tolist"):
		return value.tolist()
	if isinstance(value, Path):
		return str(value)
	raise TypeError(f"cannot serialize {type(value).__name__}")


def save_report(data: Mapping[str, Any], path: PathLike) -> Path:
	p = Path(path)
	p.parent.mkdir(parents=True, exist_ok=True)
	with p.open("w", encoding="utf-8") as f:
		json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True, default=_jsonable)
		f.write("\n")
	return p


def load_report(path: PathLike) -> Dict[str, Any]:
	p = _require(path)
	try:
		with p.open("r", encoding="utf-8") as f:
			return json.load(f)
	except json.JSONDecodeError as exc:
		raise ConfigurationError(f"{p} is not valid JSON: {exc}") from exc


def save_grid_json(grid: Grid, path: PathLike) -> Path:
	return save_report(grid.to_dict(), path)


def save_grid_csv(grid: Grid, path: PathLike) -> Path:
	p = Path(path)
	p.parent.mkdir(parents=True, exist_ok=True)
	with p.open("w", encoding="utf-8", newline="") as f:
		writer = csv.writer(f)
		for row in grid.points.tolist():
			writer.writerow([repr(v) for v in row])
	return p


def load_grid(path: PathLike) -> Grid:
	"""Read a grid from ``.json`` ({"level", "dim", "points"}) or headerless CSV."""
	p = _require(path)
	if p.suffix.lower() == ".json":
		return Grid.from_dict(load_report(p))
	rows: List[List[float]] = []
	with p.open("r", encoding="utf-8", newline="") as f:
		for lineno, row in enumerate(csv.reader(f), start=1):
			if not row:
				continue
			try:
				rows.append([float(v) for v in row])
			except ValueError as exc:
				raise ConfigurationError(f"{p}:{lineno}: not a numeric grid row") from exc
	return Grid(rows)


def save_trace_csv(rows: Iterable[Mapping[str, Any]], path: PathLike) -> Path:
	p = Path(path)
	p.parent.mkdir(parents=True, exist_ok=True)
	with p.open("w", encoding="utf-8", newline="") as f:
		writer = csv.writer(f)
		writer.writerow(TRACE_HEADER)
		for row in rows:
			writer.writerow([repr(row[name]) if isinstance(row[name], float) else row[name] for name in TRACE_HEADER])
	return p


def load_trace_csv(path: PathLike) -> List[Dict[str, float]]:
	p = _require(path)
	with p.open("r", encoding="utf-8", newline="") as f:
		reader = csv.DictReader(f)
		return [{key: float(value) for key, value in row.items()} for row in reader]


__all__ = [
	"TRACE_HEADER",
	"default_out_dir",
	"ensure_dir",
	"save_report",
	"load_report",
	"save_grid_json",
	"save_grid_csv",
	"load_grid",
	"save_trace_csv",
	"load_trace_csv",
]
