import json
import logging
import math
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from optiquant.cli.config import RunConfig
from optiquant.cli.parsers import build_parser, flag_overrides
from optiquant.cli.visualization import ChartService
from optiquant.constants import RADIUS_GUARD_FACTOR
from optiquant.distortion import distortion, estimate_optimal_error, gradient, random_start
from optiquant.errors import ConfigurationError, InfeasibleRadiusError, QuantizerError
from optiquant.hessian import hessian_report
from optiquant.lloyd import LadderLevel, LloydConfig, LloydTrace, ladder, run, shrink_into_ball, split_init
from optiquant.measure import DistributionModel, build_distribution, derive_seed
from optiquant.radius import level_gap_profile, measured_radius, solve_radius
from optiquant.storage import default_out_dir, ensure_dir, load_grid, save_grid_csv, save_grid_json, save_report, save_trace_csv
from optiquant.voronoi import Backend, Grid, cell_stats, default_backend


load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    """Root logger setup from LOG_LEVEL / LOG_FILE; safe to call repeatedly."""
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    log_file = os.getenv("LOG_FILE", "")

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level, logging.INFO))
    formatter = logging.Formatter(LOG_FORMAT)

    if not any(type(h) is logging.StreamHandler for h in root_logger.handlers):
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)
        root_logger.addHandler(stream_handler)

    if log_file:
        log_path = Path(log_file).expanduser().resolve()
        log_path.parent.mkdir(parents=True, exist_ok=True)
        if not any(isinstance(h, RotatingFileHandler) and getattr(h, 'baseFilename', None) == str(log_path) for h in root_logger.handlers):
            file_handler = RotatingFileHandler(log_path, maxBytes=1_000_000, backupCount=3)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

class RunContext:
    """Resolved law, backend and Lloyd settings for one invocation."""

    def __init__(self, config: RunConfig, out_dir: Path):
        self.config = config
        self.out_dir = out_dir
        self.dist: DistributionModel = build_distribution(config.distribution_spec())
        if config.backend is None:
            self.backend = default_backend(self.dist)
        else:
            self.backend = Backend.parse(config.backend, config.samples, config.seed, config.quad_points)
        self.lloyd = LloydConfig(
            backend=self.backend,
            max_iter=config.max_iter,
            tol_gap=config.tol_gap,
            tol_move=config.tol_move,
            pullback=config.pullback,
        )
        self.seed = config.effective_seed

    def initial_grid(self, level: Optional[int]) -> Grid:
        init = self.config.init
        if init is None:
            return random_start(self.dist, int(level), self.seed)
        grid = load_grid(init) if isinstance(init, str) else Grid(init)
        if level is not None and grid.level != int(level):
            raise ConfigurationError(f"--init has {grid.level} points but --N is {level}")
        if grid.dim != self.dist.dim:
            raise ConfigurationError(f"--init points are {grid.dim}-dimensional, the law is {self.dist.dim}-dimensional")
        return grid

    def write_grid(self, grid: Grid) -> None:
        save_grid_json(grid, self.out_dir / "grid.json")
        save_grid_csv(grid, self.out_dir / "grid.csv")
        if self.config.plot:
            masses = [s.mass for s in cell_stats(grid, self.dist, self.backend)]
            chart = ChartService.grid_chart(grid.points, f"{self.dist.name}, N={grid.level}", masses)
            if chart:
                (self.out_dir / "grid.png").write_bytes(chart.read())

    def write_trace(self, trace: Optional[LloydTrace], name: str = "trace.csv") -> None:
        rows = trace.to_rows() if trace is not None else []
        save_trace_csv(rows, self.out_dir / name)
        if self.config.plot and name == "trace.csv" and rows:
            chart = ChartService.trace_chart(rows, f"{self.config.mode}: {self.dist.name}")
            if chart:
                (self.out_dir / "trace.png").write_bytes(chart.read())

    def summary(self, status: str, grid: Optional[Grid], energy: Optional[float], grad_norm: Optional[float],
                **extra: Any) -> Dict[str, Any]:
        config = self.config.to_dict()
        config["seed"] = self.seed
        config["backend"] = self.backend.kind
        tol_gap = extra.pop("tol_gap", None)
        if tol_gap is not None:
            config["tol_gap"] = tol_gap
        out = {
            "mode": self.config.mode,
            "status": status,
            "level": grid.level if grid is not None else None,
            "dim": self.dist.dim,
            "energy": energy,
            "quant_error": math.sqrt(energy) if energy is not None else None,
            "grad_norm": grad_norm,
            "radius": measured_radius(grid, self.dist) if grid is not None else None,
            "config": config,
            "distribution": {"name": self.dist.name, "kind": self.dist.kind, "dim": self.dist.dim,
                             "params": self.dist.params},
            "backend": self.backend.describe(),
        }
        out.update(extra)
        return out


def _trace_summary(trace: LloydTrace) -> Dict[str, Any]:
    return {
        "iterations": len(trace.rows),
        "degenerate_cell_seen": trace.degenerate_cell_seen,
        "descent_ok": trace.descent_ok(),
        "no_merge_ok": trace.no_merge_ok(),
        "tol_gap": trace.tol_gap,
    }


def _ladder(ctx: RunContext, top: int, lloyd: Optional[LloydConfig] = None) -> List[LadderLevel]:
    return ladder(ctx.dist, top, lloyd or ctx.lloyd, seed=ctx.seed)


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

def _mode_run(ctx: RunContext) -> Dict[str, Any]:
    grid0 = ctx.initial_grid(ctx.config.N)
    final, trace = run(grid0, ctx.dist, ctx.lloyd, seed=ctx.seed)
    ctx.write_grid(final)
    ctx.write_trace(trace)
    return ctx.summary(trace.status, final, trace.final_energy, trace.final_grad_norm, **_trace_summary(trace))


def _mode_ladder(ctx: RunContext) -> Dict[str, Any]:
    levels = _ladder(ctx, int(ctx.config.N_max))
    for level in levels:
        ctx.write_trace(level.trace, f"trace_level_{level.level}.csv")
    top = levels[-1]
    ctx.write_grid(top.grid)
    ctx.write_trace(top.trace)
    errors = [math.sqrt(level.trace.final_energy) for level in levels]
    per_level = [
        {
            "level": level.level,
            "energy": level.trace.final_energy,
            "quant_error": err,
            "status": level.trace.status,
            "iterations": len(level.trace.rows),
            "radius": measured_radius(level.grid, ctx.dist),
            "tilted": level.tilted,
            "tol_gap": level.trace.tol_gap,
        }
        for level, err in zip(levels, errors)
    ]
    return ctx.summary(
        top.trace.status, top.grid, top.trace.final_energy, top.trace.final_grad_norm,
        levels=per_level,
        level_gap_profile=level_gap_profile(errors, ctx.dist.dim).tolist(),
        **_trace_summary(top.trace),
    )


def _auto_radius(ctx: RunContext, N: int) -> Tuple[float, Optional[Dict[str, Any]], List[LadderLevel]]:
    if N < 2:
        raise ConfigurationError("--radius auto needs N >= 2")
    levels = _ladder(ctx, N)
    e_N = math.sqrt(levels[-1].trace.final_energy)
    e_prev = math.sqrt(levels[-2].trace.final_energy)
    guard = RADIUS_GUARD_FACTOR * measured_radius(levels[-2].grid, ctx.dist)
    bound = None
    try:
        bound = solve_radius(ctx.dist, e_N, e_prev, samples=ctx.config.samples, seed=ctx.seed)
        radius = max(bound.R, guard)
    except InfeasibleRadiusError as exc:
        logger.warning("radius solve infeasible (%s); using the guard radius %.6g", exc.details.get("binding"), guard)
        if not guard > 0:
            raise
        radius = guard
    report = bound.to_dict() if bound is not None else None
    if report is not None:
        save_report(report, ctx.out_dir / "radius.json")
    return radius, report, levels


def _mode_bounded(ctx: RunContext) -> Dict[str, Any]:
    config = ctx.config
    N = config.N if config.N is not None else ctx.initial_grid(None).level
    prev_levels: List[LadderLevel] = []
    solved = None
    if config.radius == "auto":
        radius, solved, prev_levels = _auto_radius(ctx, int(N))
    else:
        radius = float(config.radius)

    if config.init is not None:
        start = ctx.initial_grid(N)
    else:
        if not prev_levels:
            prev_levels = _ladder(ctx, int(N) - 1) if N > 1 else []
        start = Grid(np.asarray(ctx.dist.mean)[None, :])
        if prev_levels:
            prev = shrink_into_ball(prev_levels[int(N) - 2].grid, ctx.dist.mean, radius)
            start = split_init(prev, ctx.dist, derive_seed(ctx.seed, int(N)), ctx.backend,
                               ball=(ctx.dist.mean, radius))

    final, trace = run(start, ctx.dist, ctx.lloyd.with_changes(radius_bound=radius), seed=ctx.seed)
    ctx.write_grid(final)
    ctx.write_trace(trace)
    extra = dict(_trace_summary(trace))
    extra["radius_bound"] = radius
    extra["pullbacks_total"] = sum(row.pullbacks for row in trace.rows)
    if solved is not None:
        extra["radius_solution"] = solved
    return ctx.summary(trace.status, final, trace.final_energy, trace.final_grad_norm, **extra)


def _mode_radius(ctx: RunContext) -> Dict[str, Any]:
    config = ctx.config
    grid = None
    energy = grad_norm = None
    if config.c is not None and config.e_prev is not None:
        c, e_prev = float(config.c), float(config.e_prev)
    else:
        levels = _ladder(ctx, int(config.N))
        if len(levels) < 2:
            raise ConfigurationError("radius mode needs N >= 2 when --c/--e-prev are not given")
        grid = levels[-1].grid
        energy, grad_norm = levels[-1].trace.final_energy, levels[-1].trace.final_grad_norm
        c, e_prev = math.sqrt(energy), math.sqrt(levels[-2].trace.final_energy)
    bound = solve_radius(ctx.dist, c, e_prev, samples=config.samples, seed=ctx.seed)
    save_report(bound.to_dict(), ctx.out_dir / "radius.json")
    if grid is not None:
        ctx.write_grid(grid)
    ctx.write_trace(None)
    return ctx.summary("solved", grid, energy, grad_norm, radius_bound=bound.R, radius_solution=bound.to_dict())


def _mode_hessian(ctx: RunContext) -> Dict[str, Any]:
    config = ctx.config
    trace = None
    if config.init is not None:
        grid = ctx.initial_grid(config.N)
    else:
        grid, trace = run(ctx.initial_grid(config.N), ctx.dist, ctx.lloyd, seed=ctx.seed)
    report = hessian_report(grid, ctx.dist, quad_points=config.quad_points, backend=ctx.backend)
    save_report(report.to_dict(), ctx.out_dir / "hessian.json")
    ctx.write_grid(grid)
    ctx.write_trace(trace)
    if trace is not None:
        energy, grad_norm, status = trace.final_energy, trace.final_grad_norm, trace.status
    else:
        energy = distortion(grid, ctx.dist, ctx.backend).value
        grad_norm = float(np.linalg.norm(gradient(grid, ctx.dist, ctx.backend)))
        status = "evaluated"
    return ctx.summary(status, grid, energy, grad_norm, hessian_label=report.label,
                       fd_discrepancy=report.fd_discrepancy)


def _mode_optimal_error(ctx: RunContext) -> Dict[str, Any]:
    config = ctx.config
    error, grid = estimate_optimal_error(ctx.dist, int(config.N), config.restarts, ctx.seed, ctx.lloyd)
    ctx.write_grid(grid)
    ctx.write_trace(None)
    grad_norm = float(np.linalg.norm(gradient(grid, ctx.dist, ctx.backend)))
    return ctx.summary("estimated", grid, error * error, grad_norm, restarts=config.restarts)


MODE_HANDLERS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "run": _mode_run,
    "ladder": _mode_ladder,
    "bounded": _mode_bounded,
    "radius": _mode_radius,
    "hessian": _mode_hessian,
    "optimal-error": _mode_optimal_error,
}


# ---------------------------------------------------------------------------
# Entry
# ---------------------------------------------------------------------------

def resolve_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Parse ``argv`` and merge defaults, the ``--config`` file and flags."""
    args = build_parser().parse_args(argv)
    try:
        overrides = flag_overrides(args)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    base = RunConfig.from_file(args.config) if args.config else RunConfig()
    try:
        return base.merged(overrides).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from exc


def _fail(exc: QuantizerError, out_dir: Path) -> int:
    payload = exc.to_dict()
    try:
        save_report(payload, ensure_dir(out_dir) / "error.json")
    except OSError:
        logger.exception("could not write error.json to %s", out_dir)
    print(json.dumps(payload, indent=2, sort_keys=True, default=str), file=sys.stderr)
    return exc.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = default_out_dir()
    if "--out" in argv[:-1]:
        out_dir = Path(argv[argv.index("--out") + 1])

    try:
        config = resolve_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except QuantizerError as exc:
        logger.error("configuration failed: %s", exc)
        return _fail(exc, out_dir)

    out_dir = Path(config.out) if config.out else out_dir
    try:
        ensure_dir(out_dir)
        ctx = RunContext(config, out_dir)
        logger.info("%s: %s with %s backend, output in %s", config.mode, ctx.dist.name, ctx.backend.kind, out_dir)
        summary = MODE_HANDLERS[config.mode](ctx)
        path = save_report(summary, out_dir / "summary.json")
        logger.info("%s finished (%s); summary at %s", config.mode, summary["status"], path)
        return 0
    except QuantizerError as exc:
        logger.error("%s failed: %s", config.mode, exc)
        return _fail(exc, out_dir)


__all__ = ["configure_logging", "main", "resolve_config", "RunContext", "MODE_HANDLERS"]
