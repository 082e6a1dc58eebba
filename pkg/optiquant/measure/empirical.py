"""Weighted empirical measures and their CSV ingestion."""

import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from optiquant.errors import ConfigurationError
from optiquant.measure.model import DistributionModel, SupportSpec

logger = logging.getLogger(__name__)

WEIGHT_COLUMNS = ("weight", "w")


def empirical(points, weights: Optional[Sequence[float]] = None, name: str = "empirical") -> DistributionModel:
    """Discrete law putting ``weights[m]`` on ``points[m]``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or len(pts) == 0:
        raise ConfigurationError("empirical law needs a non-empty (M, d) array of points")
    if not np.all(np.isfinite(pts)):
        raise ConfigurationError("empirical points must be finite")
    if weights is None:
        w = np.full(len(pts), 1.0 / len(pts))
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != (len(pts),):
            raise ConfigurationError(f"expected {len(pts)} weights, got {w.size}")
        if not np.all(w > 0):
            raise ConfigurationError("empirical weights must be strictly positive")
        w = w / w.sum()
    if abs(w.sum() - 1.0) > 1e-12:
        raise ConfigurationError("empirical weights do not sum to one")

    dim = pts.shape[1]
    mean = w @ pts
    scale = np.sqrt(np.maximum(w @ (pts - mean) ** 2, 0.0))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    support = SupportSpec.box(lo, hi) if np.all(lo < hi) else SupportSpec.everywhere()
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        idx = np.searchsorted(cumulative, rng.uniform(0.0, 1.0, size=n), side="right")
        return pts[np.minimum(idx, len(pts) - 1)]

    return DistributionModel(
        kind="empirical",
        dim=dim,
        mean=mean,
        support=support,
        draw=draw,
        name=name,
        params={"atoms": int(len(pts))},
        scale=np.where(scale > 0, scale, 1.0),
        points=pts,
        weights=w,
    )


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path: Union[str, Path]) -> DistributionModel:
    """Read ``x1..xd[,weight]`` rows; a header row is optional.

    A weight column is recognised only through a ``weight`` (or ``w``) header.
    """
    csv_path = Path(path)
    if not csv_path.exists():
        raise ConfigurationError(f"data file not found: {csv_path}", code="config_not_found", details={"path": str(csv_path)})

    with csv_path.open("r", encoding="utf-8", newline="") as f:
        rows: List[List[str]] = [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ConfigurationError(f"data file is empty: {csv_path}")

    weight_col = None
    if not all(_is_number(cell) for cell in rows[0]):
        header = [cell.strip().lower() for cell in rows[0]]
        rows = rows[1:]
        for col, label in enumerate(header):
            if label in WEIGHT_COLUMNS:
                weight_col = col

    values = []
    for line_no, row in enumerate(rows, start=1):
        try:
            values.append([float(cell) for cell in row])
        except ValueError as exc:
            raise ConfigurationError(f"{csv_path}: non-numeric value in data row {line_no}") from exc
    widths = {len(v) for v in values}
    if len(widths) != 1:
        raise ConfigurationError(f"{csv_path}: rows have inconsistent column counts {sorted(widths)}")

    table = np.asarray(values, dtype=float)
    if weight_col is None:
        points, weights = table, None
    else:
        points = np.delete(table, weight_col, axis=1)
        weights = table[:, weight_col]
    logger.info("Loaded %d atoms in dimension %d from %s", len(points), points.shape[1], csv_path)
    return empirical(points, weights, name=f"empirical:{csv_path.name}")


__all__ = ["empirical", "load_csv"]
