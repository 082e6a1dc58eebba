"""Batch Lloyd iteration, splitting initialization and the radius-bounded variant.

One iteration has two phases: every generator moves to the μ-centroid of its
cell, then the cells are re-allocated. A cell of zero mass keeps its
generator; that convention lives in ``_centroid_update`` and nowhere else.

With ``LloydConfig.radius_bound`` set, centroids that leave the ball
B(center, R) are pulled back by one of three rules:

* ``segment``: the point where [x_j, c_j] meets the sphere;
* ``freeze``: x_j stays where it is;
* ``sphere``: a random point of ∂B(c_j, |x_j - c_j|) inside the ball.

Each rule moves no farther from the centroid than x_j was, so the energy still
decreases.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from statistics import median
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from optiquant.constants import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL_GAP_REL,
    DEFAULT_TOL_MOVE,
    DESCENT_ABS_TOL,
    MC_SLACK_SIGMAS,
    NO_MERGE_WINDOW,
    QUAD_DESCENT_REL,
    SPHERE_PULLBACK_TRIES,
    SPLIT_MAX_RETRIES,
    progress_bar,
)
from optiquant.distortion import EnergyReport, distortion, energy_from_stats, gradient_from_stats
from optiquant.errors import (
    ConfigurationError,
    InvariantViolation,
    MergeError,
    PreconditionError,
    QuantizerError,
    SeedingError,
)
from optiquant.measure import DistributionModel, derive_seed, splitting_sampler, stream
from optiquant.measure.rng import SeedLike
from optiquant.voronoi import Backend, CellStats, Grid, cell_stats, default_backend, duplicate_pairs, min_pairwise_distance

logger = logging.getLogger(__name__)

PULLBACKS = ("segment", "freeze", "sphere")
STATUSES = ("converged_gap", "converged_move", "max_iter")
TRACE_FIELDS = ["k", "energy", "gap", "grad_norm", "min_pair_dist", "max_disp", "radius", "pullbacks"]


@dataclass
class LloydConfig:
    """Stopping rule, backend and optional ball constraint for a run."""

    backend: Optional[Backend] = None
    max_iter: int = DEFAULT_MAX_ITER
    tol_gap: Optional[float] = None
    tol_move: float = DEFAULT_TOL_MOVE
    radius_bound: Optional[float] = None
    pullback: str = "segment"
    center: Optional[Sequence[float]] = None
    check_descent: bool = True

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ConfigurationError(f"max_iter must be at least 1, got {self.max_iter}")
        self.max_iter = int(self.max_iter)
        for name in ("tol_gap", "tol_move"):
            value = getattr(self, name)
            if value is not None and (math.isnan(value) or value < 0):
                raise ConfigurationError(f"{name} must be non-negative, got {value}")
        if self.tol_gap is not None and math.isinf(self.tol_gap) and math.isinf(self.tol_move):
            raise ConfigurationError("at least one of tol_gap and tol_move must be finite")
        if self.radius_bound is not None and not (self.radius_bound > 0 and math.isfinite(self.radius_bound)):
            raise ConfigurationError(f"radius_bound must be a positive number, got {self.radius_bound}")
        if self.pullback not in PULLBACKS:
            raise ConfigurationError(f"unknown pullback rule {self.pullback!r}; expected one of {PULLBACKS}")

    def resolve_backend(self, dist: DistributionModel) -> Backend:
        return self.backend or default_backend(dist)

    def resolve_center(self, dist: DistributionModel) -> np.ndarray:
        if self.center is None:
            return np.array(dist.mean, dtype=float)
        return np.asarray(self.center, dtype=float).reshape(dist.dim)

    def with_changes(self, **changes) -> "LloydConfig":
        return replace(self, **changes)


@dataclass
class TraceRow:
    k: int
    energy: float
    gap: float
    grad_norm: float
    min_pair_dist: float
    max_disp: float
    radius: float
    pullbacks: int = 0
    min_mass: float = math.inf
    energy_err: float = 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in TRACE_FIELDS}


@dataclass
class LloydTrace:
    """Per-iteration record of a run plus its terminal state.

    Row ``k`` describes grid k and the step that leaves it. ``final_energy`` and
    ``final_grad_norm`` belong to the grid the run returns.
    """

    rows: List[TraceRow] = field(default_factory=list)
    status: str = "max_iter"
    degenerate_cell_seen: bool = False
    final_energy: float = math.nan
    final_grad_norm: float = math.nan
    final_energy_err: float = 0.0
    tol_gap: float = math.nan

    def __post_init__(self):
        if self.status not in STATUSES:
            raise InvariantViolation(f"unknown run status {self.status!r}; expected one of {STATUSES}")

    def __len__(self) -> int:
        return len(self.rows)

    def energies(self) -> np.ndarray:
        """Energies of grids 0..K, the returned grid last."""
        return np.array([row.energy for row in self.rows] + [self.final_energy])

    @property
    def min_cell_mass(self) -> float:
        return min((row.min_mass for row in self.rows), default=math.inf)

    def descent_ok(self, slack: float = DESCENT_ABS_TOL) -> bool:
        energies = self.energies()
        return bool(np.all(energies[1:] <= energies[:-1] + slack * (1.0 + energies[:-1])))

    def displacement_budget(self) -> Tuple[float, float]:
        """(Σ_k max_disp², energy(0) / m*): the first never exceeds the second in exact mode."""
        total = math.fsum(row.max_disp ** 2 for row in self.rows)
        m_star = self.min_cell_mass
        if not self.rows or m_star <= 0:
            return total, math.inf
        return total, self.rows[0].energy / m_star

    def no_merge_ok(self, window: int = NO_MERGE_WINDOW) -> bool:
        """Finite-trace reading of liminf min |x_i - x_j| > 0."""
        dists = [row.min_pair_dist for row in self.rows]
        if not dists or math.isinf(dists[0]):
            return True
        if min(dists) <= 0:
            return False
        return min(dists[-window:]) >= 0.5 * median(dists)

    def to_rows(self) -> List[Dict[str, Any]]:
        return [row.as_dict() for row in self.rows]


@dataclass
class StepResult:
    new_grid: Grid
    stats: List[CellStats]
    gap: float
    pullbacks: Tuple[int, ...] = ()
    max_disp: float = 0.0


@dataclass
class LadderLevel:
    level: int
    grid: Grid
    trace: LloydTrace
    tilted: bool = False


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def _targets(grid: Grid, stats: Sequence[CellStats]) -> Tuple[np.ndarray, np.ndarray]:
    """Centroids with the keep-point convention applied, plus cell masses."""
    targets = np.array(grid.points)
    masses = np.zeros(grid.level)
    for i, s in enumerate(stats):
        masses[i] = s.mass
        if s.centroid is not None:
            targets[i] = s.centroid
    return targets, masses


def _checked_grid(points: np.ndarray) -> Grid:
    pairs = duplicate_pairs(points)
    if pairs:
        raise MergeError("two generators moved onto the same point", details={"pairs": pairs})
    return Grid(points)


def _finish_step(grid: Grid, stats, new_points: np.ndarray, gap: float, pullbacks=()) -> StepResult:
    max_disp = float(np.max(np.linalg.norm(new_points - grid.points, axis=1)))
    return StepResult(_checked_grid(new_points), list(stats), float(gap), tuple(pullbacks), max_disp)


def _centroid_update(grid: Grid, stats: Sequence[CellStats]) -> StepResult:
    targets, masses = _targets(grid, stats)
    gap = float(masses @ np.sum((targets - grid.points) ** 2, axis=1))
    return _finish_step(grid, stats, targets, gap)


def lloyd_step(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None) -> StepResult:
    """One Lloyd iteration: every generator moves to its cell centroid."""
    return _centroid_update(grid, cell_stats(grid, dist, backend))


def segment_exit(start: np.ndarray, end: np.ndarray, center: np.ndarray, R: float) -> np.ndarray:
    """Point where the segment [start, end] leaves the closed ball B(center, R).

    ``start`` must lie in the ball and ``end`` outside it.
    """
    p = start - center
    v = end - start
    a = float(v @ v)
    b = 2.0 * float(p @ v)
    c = float(p @ p) - R * R
    disc = max(b * b - 4.0 * a * c, 0.0)
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        t = 0.0
    elif b >= 0:
        t = c / q
    else:
        t = q / a
    return start + min(max(t, 0.0), 1.0) * v


def _sphere_point(old: np.ndarray, target: np.ndarray, center: np.ndarray, R: float,
                  rng: np.random.Generator) -> Optional[np.ndarray]:
    radius = float(np.linalg.norm(old - target))
    for _ in range(SPHERE_PULLBACK_TRIES):
        direction = rng.standard_normal(len(old))
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            continue
        candidate = target + radius * direction / norm
        if np.linalg.norm(candidate - center) <= R:
            return candidate
    return None


def _bounded_update(grid: Grid, stats: Sequence[CellStats], R: float, pullback: str,
                    center: np.ndarray, rng: np.random.Generator) -> StepResult:
    if pullback not in PULLBACKS:
        raise ConfigurationError(f"unknown pullback rule {pullback!r}")
    targets, masses = _targets(grid, stats)
    new_points = targets.copy()
    pulled = []
    for j in range(grid.level):
        if np.linalg.norm(targets[j] - center) <= R:
            continue
        old = grid.points[j]
        if pullback == "segment":
            new_points[j] = segment_exit(old, targets[j], center, R)
        elif pullback == "sphere":
            candidate = _sphere_point(old, targets[j], center, R, rng)
            if candidate is None:
                logger.debug("sphere pull-back for point %d fell back to freeze", j)
                candidate = old
            new_points[j] = candidate
        else:
            new_points[j] = old
        pulled.append(j)

    before = np.sum((grid.points - targets) ** 2, axis=1)
    after = np.sum((new_points - targets) ** 2, axis=1)
    deltas = masses * (before - after)
    for j in pulled:
        if deltas[j] < -DESCENT_ABS_TOL * (1.0 + masses[j] * before[j]):
            raise InvariantViolation(
                "pull-back moved a generator away from its centroid",
                details={"index": j, "delta": float(deltas[j]), "rule": pullback},
            )
    return _finish_step(grid, stats, new_points, math.fsum(deltas), pulled)


def _require_inside(grid: Grid, center: np.ndarray, R: float) -> None:
    dists = np.linalg.norm(grid.points - center, axis=1)
    outside = np.flatnonzero(dists > R * (1.0 + DESCENT_ABS_TOL))
    if outside.size:
        raise PreconditionError(
            f"grid points lie outside the ball of radius {R}",
            details={"indices": outside.tolist(), "radius": R, "max_distance": float(dists.max())},
        )


def bounded_step(grid: Grid, dist: DistributionModel, R: float, backend: Optional[Backend] = None,
                 pullback: str = "segment", center=None, rng: Optional[np.random.Generator] = None) -> StepResult:
    """Radius-bounded Lloyd iteration.

    ``gap`` is Σ_j M_j (|x_j - c_j|² - |x'_j - c_j|²), the decrease of the
    centroid phase; it equals the ordinary gap when nothing is pulled back.
    """
    center = np.asarray(dist.mean if center is None else center, dtype=float).reshape(dist.dim)
    _require_inside(grid, center, R)
    rng = rng if rng is not None else stream(0, "pullback")
    return _bounded_update(grid, cell_stats(grid, dist, backend), R, pullback, center, rng)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _descent_slack(backend: Backend, current: EnergyReport, nxt: EnergyReport) -> float:
    if backend.kind == "mc":
        return MC_SLACK_SIGMAS * math.hypot(current.std_err, nxt.std_err)
    if backend.kind == "quad2d":
        return QUAD_DESCENT_REL * (1.0 + current.value)
    return DESCENT_ABS_TOL * (1.0 + current.value)


def run(grid0: Grid, dist: DistributionModel, config: Optional[LloydConfig] = None,
        seed: SeedLike = 0) -> Tuple[Grid, LloydTrace]:
    """Iterate Lloyd (or bounded Lloyd) steps until the run converges or hits ``max_iter``.

    Convergence needs both gap <= tol_gap and max_disp < tol_move. Set one
    tolerance to ``math.inf`` to stop on the other alone.
    """
    config = config or LloydConfig()
    backend = config.resolve_backend(dist)
    center = config.resolve_center(dist)
    R = config.radius_bound
    if R is not None:
        _require_inside(grid0, center, R)
    rng = stream(seed, "pullback")

    grid = grid0
    stats = cell_stats(grid, dist, backend)
    energy = energy_from_stats(stats)
    tol_gap = config.tol_gap if config.tol_gap is not None else DEFAULT_TOL_GAP_REL * energy.value
    trace = LloydTrace(tol_gap=tol_gap)
    gap_met_before = False
    logger.info("lloyd run: N=%d d=%d backend=%s energy(0)=%.10g", grid.level, grid.dim, backend.kind, energy.value)

    for k in range(config.max_iter):
        if R is None:
            step = _centroid_update(grid, stats)
        else:
            step = _bounded_update(grid, stats, R, config.pullback, center, rng)

        masses = [s.mass for s in stats]
        if any(s.is_empty for s in stats) and not trace.degenerate_cell_seen:
            trace.degenerate_cell_seen = True
            logger.warning("iteration %d: empty cell(s) %s keep their generator", k,
                           [i for i, s in enumerate(stats) if s.is_empty])
        row = TraceRow(
            k=k,
            energy=energy.value,
            gap=step.gap,
            grad_norm=float(np.linalg.norm(gradient_from_stats(grid, stats))),
            min_pair_dist=min_pairwise_distance(grid),
            max_disp=step.max_disp,
            radius=float(np.max(np.linalg.norm(grid.points - center, axis=1))),
            pullbacks=len(step.pullbacks),
            min_mass=min((m for m in masses if m > 0), default=0.0),
            energy_err=energy.std_err,
        )
        trace.rows.append(row)
        logger.debug("k=%d energy=%.15g gap=%.3e max_disp=%.3e pullbacks=%d", k, row.energy, row.gap, row.max_disp, row.pullbacks)

        next_stats = cell_stats(step.new_grid, dist, backend)
        next_energy = energy_from_stats(next_stats)
        if config.check_descent:
            slack = _descent_slack(backend, energy, next_energy)
            if next_energy.value > energy.value - step.gap + slack:
                details = {"k": k, "energy": energy.value, "next_energy": next_energy.value, "gap": step.gap}
                if backend.is_exact:
                    raise InvariantViolation("energy did not decrease by the energy gap", details=details)
                logger.warning("descent slack exceeded at iteration %d: %s", k, details)

        grid, stats, energy = step.new_grid, next_stats, next_energy
        gap_ok = step.gap <= tol_gap
        if gap_ok and step.max_disp < config.tol_move:
            # the status names the criterion that was met last
            trace.status = "converged_move" if gap_met_before else "converged_gap"
            break
        gap_met_before = gap_ok

    trace.final_energy = energy.value
    trace.final_energy_err = energy.std_err
    trace.final_grad_norm = float(np.linalg.norm(gradient_from_stats(grid, stats)))
    logger.info("lloyd run stopped (%s) after %d iterations: energy=%.12g grad_norm=%.3e",
                trace.status, len(trace.rows), trace.final_energy, trace.final_grad_norm)
    return grid, trace


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def shrink_into_ball(grid: Grid, center, R: float) -> Grid:
    """Scale the grid toward ``center`` until it fits in the closed ball B(center, R).

    A uniform contraction keeps the points pairwise distinct.
    """
    center = np.asarray(center, dtype=float).reshape(grid.dim)
    offsets = grid.points - center
    reach = float(np.max(np.linalg.norm(offsets, axis=1)))
    if reach <= R:
        return grid
    return Grid(center + offsets * (R / reach))


def _split(prev_grid: Grid, dist: DistributionModel, seed: SeedLike, backend: Backend,
           max_retries: int, ball: Optional[Tuple[np.ndarray, float]] = None) -> Tuple[Grid, bool]:
    prev = distortion(prev_grid, dist, backend)
    draws = []
    for attempt in range(max_retries):
        point, tilted = splitting_sampler(dist, derive_seed(seed, attempt))
        draws.append(point.tolist())
        if ball is not None and np.linalg.norm(point - ball[0]) > ball[1]:
            logger.debug("split draw %d lies outside the ball; redrawing", attempt)
            continue
        if np.any(np.all(prev_grid.points == point, axis=1)):
            logger.debug("split draw %d coincides with a grid point; redrawing", attempt)
            continue
        candidate = Grid(np.vstack([prev_grid.points, point]))
        energy = distortion(candidate, dist, backend)
        slack = 0.0 if backend.is_deterministic else MC_SLACK_SIGMAS * math.hypot(prev.std_err, energy.std_err)
        if energy.value < prev.value - slack:
            return candidate, tilted
        logger.debug("split draw %d did not certify a strict decrease (%.6g vs %.6g)", attempt, energy.value, prev.value)
    raise SeedingError(
        f"no admissible split point after {max_retries} draws",
        details={"draws": draws, "level": prev_grid.level + 1},
    )


def split_init(prev_grid: Grid, dist: DistributionModel, seed: SeedLike, backend: Optional[Backend] = None,
               max_retries: int = SPLIT_MAX_RETRIES, ball: Optional[Tuple[Sequence[float], float]] = None) -> Grid:
    """Level-N start: the level N-1 grid plus one new support point.

    The new grid's distortion is strictly below the previous one. With
    ``ball=(center, R)`` only draws inside B(center, R) are accepted.
    """
    if ball is not None:
        ball = (np.asarray(ball[0], dtype=float).reshape(dist.dim), float(ball[1]))
    return _split(prev_grid, dist, seed, backend or default_backend(dist), max_retries, ball)[0]


def ladder(dist: DistributionModel, N_max: int, config: Optional[LloydConfig] = None,
           seed: SeedLike = 0) -> List[LadderLevel]:
    """Level-by-level splitting runs from {m_X} up to ``N_max`` points."""
    if N_max < 1:
        raise PreconditionError(f"N_max must be at least 1, got {N_max}")
    config = config or LloydConfig()
    backend = config.resolve_backend(dist)
    levels: List[LadderLevel] = []

    start = Grid(np.asarray(dist.mean, dtype=float)[None, :])
    for level in range(1, N_max + 1):
        child = derive_seed(seed, level)
        try:
            tilted = False
            if levels:
                start, tilted = _split(levels[-1].grid, dist, child, backend, SPLIT_MAX_RETRIES)
            final, trace = run(start, dist, config, seed=child)
        except QuantizerError as exc:
            exc.details.setdefault("level", level)
            raise
        if levels and backend.is_exact and not trace.final_energy < levels[-1].trace.final_energy:
            raise InvariantViolation(
                "ladder energies must strictly decrease",
                details={"level": level, "energy": trace.final_energy, "previous": levels[-1].trace.final_energy},
            )
        levels.append(LadderLevel(level, final, trace, tilted))
        logger.info("ladder %s level %d/%d: energy=%.12g (%s)", progress_bar(level, N_max), level, N_max,
                    trace.final_energy, trace.status)
    return levels


def splitting_bracket_ok(trace: LloydTrace, e_lower: float, e_upper: float, tol: float = DESCENT_ABS_TOL) -> bool:
    """Every iterate's error lies in [e_lower, e_upper)."""
    errors = np.sqrt(np.maximum(trace.energies(), 0.0))
    return bool(np.all(errors >= e_lower - tol) and np.all(errors < e_upper))


__all__ = [
    "PULLBACKS",
    "STATUSES",
    "TRACE_FIELDS",
    "LloydConfig",
    "TraceRow",
    "LloydTrace",
    "StepResult",
    "LadderLevel",
    "lloyd_step",
    "bounded_step",
    "segment_exit",
    "run",
    "shrink_into_ball",
    "split_init",
    "ladder",
    "splitting_bracket_ok",
]
