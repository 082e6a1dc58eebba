"""Distortion G, its gradient, the Lloyd energy gap and multi-start e_N estimates."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from optiquant.constants import FD_GRADIENT_REL_STEP
from optiquant.errors import InvariantViolation, PreconditionError, SeedingError
from optiquant.measure import DistributionModel, derive_seed, stream
from optiquant.voronoi import Backend, CellStats, Grid, cell_stats, duplicate_pairs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyReport:
    """G(x) with the quantization error e = sqrt(G)."""

    value: float
    std_err: float = 0.0
    quant_error: float = field(init=False)

    def __post_init__(self):
        if self.value < 0 or not math.isfinite(self.value):
            raise InvariantViolation(f"distortion must be finite and non-negative, got {self.value}")
        object.__setattr__(self, "quant_error", math.sqrt(self.value))


def energy_from_stats(stats: Sequence[CellStats]) -> EnergyReport:
    value = math.fsum(s.second_moment for s in stats)
    err = math.sqrt(math.fsum(s.second_moment_err ** 2 for s in stats))
    return EnergyReport(value, err)


def distortion(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None) -> EnergyReport:
    """G(x) = E min_i |X - x_i|^2."""
    return energy_from_stats(cell_stats(grid, dist, backend))


def gradient_from_stats(grid: Grid, stats: Sequence[CellStats]) -> np.ndarray:
    """Rows 2 (M_i x_i - ∫_{C_i} ξ dμ); empty cells give zero rows."""
    if len(stats) != grid.level:
        raise InvariantViolation("one CellStats per grid point is required")
    masses = np.array([s.mass for s in stats])
    firsts = np.stack([np.asarray(s.first_moment, dtype=float).reshape(grid.dim) for s in stats])
    return 2.0 * (masses[:, None] * grid.points - firsts)


def gradient(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None) -> np.ndarray:
    return gradient_from_stats(grid, cell_stats(grid, dist, backend))


def energy_gap(stats_k: Sequence[CellStats], grid_k: Grid, grid_k1: Grid) -> float:
    """Σ_j M_j |x_j^(k) - x_j^(k+1)|^2 for a consistently indexed pair of grids."""
    if not (len(stats_k) == grid_k.level == grid_k1.level):
        raise InvariantViolation(
            "energy_gap needs matching lengths",
            details={"stats": len(stats_k), "grid_k": grid_k.level, "grid_k1": grid_k1.level},
        )
    masses = np.array([s.mass for s in stats_k])
    moves = np.sum((grid_k.points - grid_k1.points) ** 2, axis=1)
    return float(masses @ moves)


def partition_error(grid: Grid, anchors, dist: DistributionModel, backend: Optional[Backend] = None) -> EnergyReport:
    """Σ_j ∫_{C_j(grid)} |ξ - anchors_j|^2 μ(dξ): cells of ``grid``, points ``anchors``."""
    return energy_from_stats(cell_stats(grid, dist, backend, anchors=anchors))


def finite_difference_gradient(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None,
                               rel_step: float = FD_GRADIENT_REL_STEP) -> np.ndarray:
    """Central differences of the distortion, step rel_step * (1 + |x|)."""
    base = np.array(grid.points)
    out = np.zeros_like(base)
    for i in range(grid.level):
        for c in range(grid.dim):
            h = rel_step * (1.0 + abs(base[i, c]))
            plus, minus = base.copy(), base.copy()
            plus[i, c] += h
            minus[i, c] -= h
            g_plus = distortion(Grid(plus), dist, backend).value
            g_minus = distortion(Grid(minus), dist, backend).value
            out[i, c] = (g_plus - g_minus) / (2.0 * h)
    return out


def _distinct_atom_count(dist: DistributionModel) -> int:
    return len(np.unique(dist.points, axis=0))


def random_start(dist: DistributionModel, N: int, seed, tag: str = "init", max_draws: int = 32) -> Grid:
    """N pairwise distinct points drawn from μ on the ``(seed, tag)`` stream."""
    rng = stream(seed, tag)
    if dist.kind == "empirical":
        atoms = np.unique(dist.points, axis=0)
        if N > len(atoms):
            raise PreconditionError(f"level {N} exceeds the {len(atoms)} distinct atoms of {dist.name}")
        masses = np.zeros(len(atoms))
        index = {row.tobytes(): k for k, row in enumerate(atoms)}
        for row, w in zip(np.ascontiguousarray(dist.points), dist.weights):
            masses[index[row.tobytes()]] += w
        picks = rng.choice(len(atoms), size=N, replace=False, p=masses / masses.sum())
        return Grid(atoms[picks])
    for _ in range(max_draws):
        points = np.asarray(dist.draw(rng, N), dtype=float).reshape(N, dist.dim)
        if not duplicate_pairs(points):
            return Grid(points)
    raise SeedingError(f"could not draw {N} distinct starting points", details={"level": N})


def estimate_optimal_error(dist: DistributionModel, N: int, restarts: int, seed, config=None,
                           workers: int = 1) -> Tuple[float, Grid]:
    """Best final error over ``restarts`` Lloyd runs; an upper bound on e_N."""
    from optiquant.lloyd import LloydConfig, run

    if N < 1:
        raise PreconditionError(f"level must be at least 1, got {N}")
    if restarts < 1:
        raise PreconditionError(f"at least one restart is required, got {restarts}")
    if dist.kind == "empirical" and N > _distinct_atom_count(dist):
        raise PreconditionError(f"level {N} exceeds the number of support atoms")
    config = config or LloydConfig()

    def _one(r: int):
        child = derive_seed(seed, r)
        start = random_start(dist, N, child)
        final, trace = run(start, dist, config, seed=child)
        logger.debug("restart %d: energy %.12g after %d iterations (%s)", r, trace.final_energy, len(trace.rows), trace.status)
        return final, trace

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: List = list(pool.map(_one, range(restarts)))
    else:
        results = [_one(r) for r in range(restarts)]

    best_grid, best_trace = results[0]
    for grid, trace in results[1:]:
        if trace.final_energy < best_trace.final_energy:
            best_grid, best_trace = grid, trace
    logger.info("e_%d estimate %.10g from %d restarts", N, math.sqrt(best_trace.final_energy), restarts)
    return math.sqrt(best_trace.final_energy), best_grid


__all__ = [
    "EnergyReport",
    "energy_from_stats",
    "distortion",
    "gradient",
    "gradient_from_stats",
    "energy_gap",
    "partition_error",
    "finite_difference_gradient",
    "random_start",
    "estimate_optimal_error",
]
