import math
from dataclasses import replace

import numpy as np
import pytest

import optiquant.lloyd as lloyd_module
from conftest import random_cases
from optiquant.distortion import distortion, gradient, random_start
from optiquant.errors import ConfigurationError, InvariantViolation, MergeError, PreconditionError, SeedingError
from optiquant.lloyd import (
    LloydConfig,
    LloydTrace,
    bounded_step,
    ladder,
    lloyd_step,
    run,
    segment_exit,
    shrink_into_ball,
    split_init,
    splitting_bracket_ok,
)
from optiquant.radius import measured_radius
from optiquant.voronoi import Grid

TIGHT = LloydConfig(tol_move=1e-12)


class TestLloydStep:
    def test_gaussian_pair(self, normal, exact):
        step = lloyd_step(Grid([-1.0, 2.0]), normal, exact)
        assert step.new_grid.points[:, 0] == pytest.approx([-0.5092, 1.1411], abs=1e-4)
        assert [s.mass for s in step.stats] == pytest.approx([0.6915, 0.3085], abs=1e-4)
        assert step.gap == pytest.approx(0.3942, abs=1e-4)
        assert step.pullbacks == ()

    def test_fixed_point(self, unif):
        step = lloyd_step(Grid([0.25, 0.75]), unif)
        assert step.new_grid == Grid([0.25, 0.75])
        assert step.gap == 0.0
        assert step.max_disp == 0.0

    def test_empty_cell_keeps_point(self, unif):
        step = lloyd_step(Grid([0.1, 5.0]), unif)
        assert step.stats[1].is_empty
        assert step.new_grid.points[:, 0].tolist() == pytest.approx([0.5, 5.0])
        assert step.new_grid.points[1, 0] == 5.0


class TestRun:
    def test_two_points_reach_quarters(self, unif):
        final, trace = run(Grid([0.05, 0.2]), unif, TIGHT)
        assert np.sort(final.points[:, 0]) == pytest.approx([0.25, 0.75], abs=1e-10)
        assert trace.status in ("converged_gap", "converged_move")

    def test_stationary_input(self, unif):
        final, trace = run(Grid([0.25, 0.75]), unif)
        assert trace.status == "converged_gap"
        assert len(trace.rows) == 1
        assert final == Grid([0.25, 0.75])
        assert trace.final_energy == pytest.approx(1.0 / 48.0)

    def test_uniform_five_from_random_starts(self, unif):
        expected = [0.1, 0.3, 0.5, 0.7, 0.9]
        for seed in range(20):
            final, trace = run(random_start(unif, 5, seed), unif, TIGHT, seed=seed)
            assert np.sort(final.points[:, 0]) == pytest.approx(expected, abs=1e-8)
            assert trace.final_energy == pytest.approx(1.0 / 300.0, abs=1e-10)
            assert trace.final_grad_norm < 1e-6
            assert trace.descent_ok()

    def test_default_tolerances_reach_uniform_five(self, unif):
        for seed in range(20):
            final, trace = run(random_start(unif, 5, seed), unif, seed=seed)
            assert trace.status == "converged_move"
            assert np.sort(final.points[:, 0]) == pytest.approx([0.1, 0.3, 0.5, 0.7, 0.9], abs=1e-8)
            assert trace.final_energy == pytest.approx(1.0 / 300.0, abs=1e-10)

    def test_default_gap_tolerance_scales_with_start_energy(self, unif):
        grid0 = Grid([0.05, 0.2])
        _, trace = run(grid0, unif)
        assert trace.tol_gap == pytest.approx(1e-12 * distortion(grid0, unif).value, rel=1e-12)
        assert trace.rows[0].energy == pytest.approx(distortion(grid0, unif).value, rel=1e-12)

    def test_small_gap_alone_does_not_stop(self, unif):
        config = LloydConfig(tol_gap=1.0, tol_move=1e-9)
        final, trace = run(Grid([0.05, 0.2]), unif, config)
        assert trace.status == "converged_move"
        assert trace.rows[-1].max_disp < 1e-9
        assert np.sort(final.points[:, 0]) == pytest.approx([0.25, 0.75], abs=1e-8)

    def test_infinite_move_tolerance_stops_on_gap(self, unif):
        config = LloydConfig(tol_gap=1e-6, tol_move=math.inf)
        _, trace = run(Grid([0.05, 0.2]), unif, config)
        assert trace.status == "converged_gap"
        assert trace.rows[-1].gap <= 1e-6
        assert all(row.gap > 1e-6 for row in trace.rows[:-1])

    def test_generators_meeting_raise_merge(self, normal, monkeypatch):
        real = lloyd_module.cell_stats

        def collapsed(grid, dist, backend=None):
            stats = list(real(grid, dist, backend))
            stats[1] = replace(stats[1], centroid=stats[0].centroid.copy())
            return stats

        monkeypatch.setattr(lloyd_module, "cell_stats", collapsed)
        with pytest.raises(MergeError) as exc_info:
            run(Grid([-1.0, 0.5, 2.0]), normal)
        assert exc_info.value.details["pairs"] == [(0, 1)]

    def test_gaussian_three(self, normal):
        final, trace = run(Grid([-3.0, 0.1, 3.0]), normal, TIGHT)
        assert final.points[:, 0] == pytest.approx([-1.2240, 0.0, 1.2240], abs=1e-3)
        assert trace.final_energy == pytest.approx(0.1902, abs=1e-3)

    def test_degenerate_cell_flag(self, unif):
        final, trace = run(Grid([0.1, 5.0]), unif)
        assert trace.degenerate_cell_seen
        assert final.points[1, 0] == 5.0
        assert final.points[0, 0] == pytest.approx(0.5)

    def test_max_iter_is_a_status(self, normal):
        config = LloydConfig(max_iter=3, tol_gap=0.0, tol_move=0.0)
        _, trace = run(Grid([-2.0, -1.9, 3.0]), normal, config)
        assert trace.status == "max_iter"
        assert len(trace.rows) == 3

    def test_trace_rows(self, normal):
        _, trace = run(Grid([-2.0, 0.3, 1.0]), normal)
        rows = trace.to_rows()
        assert list(rows[0]) == lloyd_module.TRACE_FIELDS
        assert [row["k"] for row in rows] == list(range(len(rows)))
        assert trace.no_merge_ok()
        total, bound = trace.displacement_budget()
        assert total <= bound

    def test_descent_and_gap_on_random_cases(self):
        for dist, grid in random_cases(200, seed=8):
            energy = distortion(grid, dist).value
            for _ in range(15):
                step = lloyd_step(grid, dist)
                nxt = distortion(step.new_grid, dist).value
                assert nxt <= energy - step.gap + 1e-12 * (1.0 + energy)
                if step.gap > 1e-12 * (1.0 + energy):
                    assert nxt < energy
                grid, energy = step.new_grid, nxt

    def test_gradient_vanishes_at_fixed_point(self, normal):
        final, trace = run(Grid([-0.5, 0.7]), normal, TIGHT)
        assert np.max(np.abs(gradient(final, normal))) < 1e-8
        assert trace.final_grad_norm < 1e-6

    def test_runs_repeat_exactly(self, normal):
        a = run(Grid([-2.0, 0.3, 1.0]), normal, seed=4)
        b = run(Grid([-2.0, 0.3, 1.0]), normal, seed=4)
        assert a[0] == b[0]
        assert a[1].to_rows() == b[1].to_rows()


class TestConfig:
    def test_bad_pullback(self):
        with pytest.raises(ConfigurationError):
            LloydConfig(pullback="teleport")

    def test_bad_radius(self):
        with pytest.raises(ConfigurationError):
            LloydConfig(radius_bound=-1.0)

    def test_both_tolerances_infinite(self):
        with pytest.raises(ConfigurationError):
            LloydConfig(tol_gap=math.inf, tol_move=math.inf)

    def test_unknown_status(self):
        with pytest.raises(InvariantViolation):
            LloydTrace(status="stalled")

    def test_with_changes(self):
        config = LloydConfig().with_changes(radius_bound=2.0)
        assert config.radius_bound == 2.0


class TestBounded:
    def test_segment_exit_1d(self):
        point = segment_exit(np.array([0.8]), np.array([1.5]), np.array([0.0]), 1.0)
        assert point == pytest.approx([1.0])
        assert abs(point[0] - 1.5) < abs(0.8 - 1.5)

    def test_segment_exit_2d(self):
        point = segment_exit(np.array([0.6, 0.0]), np.array([1.5, 0.0]), np.array([0.0, 0.0]), 1.0)
        assert point == pytest.approx([1.0, 0.0])

    def test_inside_ball_matches_plain_step(self, normal):
        grid = Grid([-1.0, 0.3, 1.2])
        plain = lloyd_step(grid, normal)
        bounded = bounded_step(grid, normal, R=10.0)
        assert bounded.pullbacks == ()
        assert bounded.new_grid == plain.new_grid
        assert bounded.gap == pytest.approx(plain.gap, abs=1e-15)

    def test_start_outside_ball(self, normal):
        with pytest.raises(PreconditionError):
            bounded_step(Grid([-2.0, 0.5]), normal, R=1.0)

    @pytest.mark.parametrize("rule", ["segment", "freeze", "sphere"])
    def test_run_stays_in_ball(self, normal, rule):
        config = LloydConfig(radius_bound=1.0, pullback=rule)
        final, trace = run(Grid([-0.99, -0.5, 0.5, 0.99]), normal, config, seed=3)
        assert sum(row.pullbacks for row in trace.rows) >= 1
        assert all(row.radius <= 1.0 + 1e-12 for row in trace.rows)
        assert measured_radius(final, normal) <= 1.0 + 1e-12
        assert trace.descent_ok()

    def test_segment_rule_parks_on_sphere(self, normal):
        final, _ = run(Grid([-0.99, -0.5, 0.5, 0.99]), normal, LloydConfig(radius_bound=1.0))
        assert np.sort(final.points[:, 0])[[0, -1]] == pytest.approx([-1.0, 1.0], abs=1e-9)

    def test_shrink_keeps_one_sided_points_distinct(self):
        grid = Grid([1.5, 2.0, 3.0])
        shrunk = shrink_into_ball(grid, [0.0], 1.0)
        assert shrunk.points[:, 0] == pytest.approx([0.5, 2.0 / 3.0, 1.0])
        assert len(set(shrunk.points[:, 0].tolist())) == 3

    def test_shrink_leaves_fitting_grid_alone(self):
        grid = Grid([-0.4, 0.9])
        assert shrink_into_ball(grid, [0.0], 1.0) is grid

    def test_shrink_planar(self):
        grid = Grid([[3.0, 4.0], [0.0, 1.0]])
        shrunk = shrink_into_ball(grid, [0.0, 0.0], 2.0)
        assert np.linalg.norm(shrunk.points, axis=1) == pytest.approx([2.0, 0.4])

    @pytest.mark.parametrize("seed", range(8))
    def test_split_inside_ball(self, normal, seed):
        prev = shrink_into_ball(Grid([-0.2, 0.6, 1.4]), [0.0], 1.0)
        grid = split_init(prev, normal, seed=seed, ball=([0.0], 1.0))
        assert grid.level == 4
        assert measured_radius(grid, normal) <= 1.0
        assert distortion(grid, normal).value < distortion(prev, normal).value


class TestSplitting:
    def test_split_lowers_energy(self, unif):
        grid = split_init(Grid([0.5]), unif, seed=3)
        assert grid.level == 2
        assert grid.points[0, 0] == 0.5
        assert distortion(grid, unif).value < 1.0 / 12.0

    def test_gaussian_split_oracle(self, normal):
        assert distortion(Grid([0.0, 1.0]), normal).value < 1.0

    def test_coinciding_draw_is_redrawn(self, unif, monkeypatch):
        draws = iter([np.array([0.5]), np.array([0.2])])
        monkeypatch.setattr(lloyd_module, "splitting_sampler", lambda dist, seed: (next(draws), True))
        grid = split_init(Grid([0.5]), unif, seed=0)
        assert grid.points[:, 0].tolist() == [0.5, 0.2]

    def test_exhausted_retries(self, unif, monkeypatch):
        monkeypatch.setattr(lloyd_module, "splitting_sampler", lambda dist, seed: (np.array([0.5]), True))
        with pytest.raises(SeedingError) as exc_info:
            split_init(Grid([0.5]), unif, seed=0, max_retries=4)
        assert exc_info.value.details["draws"] == [[0.5]] * 4
        assert exc_info.value.details["level"] == 2


class TestLadder:
    def test_single_level(self, normal):
        (level,) = ladder(normal, 1)
        assert level.grid == Grid([0.0])
        assert level.trace.final_energy == pytest.approx(1.0, abs=1e-12)

    def test_uniform_to_five(self, unif):
        levels = ladder(unif, 5, TIGHT, seed=0)
        assert [lv.level for lv in levels] == [1, 2, 3, 4, 5]
        assert levels[-1].trace.final_energy == pytest.approx(1.0 / 300.0, abs=1e-8)
        energies = [lv.trace.final_energy for lv in levels]
        assert all(b < a for a, b in zip(energies, energies[1:]))

    def test_gaussian_pair(self, normal):
        levels = ladder(normal, 2, TIGHT, seed=0)
        half_mean = math.sqrt(2.0 / math.pi)
        assert np.sort(levels[-1].grid.points[:, 0]) == pytest.approx([-half_mean, half_mean], abs=1e-4)
        assert levels[-1].trace.final_energy == pytest.approx(1.0 - 2.0 / math.pi, abs=1e-6)
        assert levels[-1].trace.final_grad_norm < 1e-6

    def test_uniform_bracket(self, unif):
        levels = ladder(unif, 8, seed=1)
        for lv in levels[1:]:
            N = lv.level
            lower = 1.0 / math.sqrt(12.0 * N * N)
            upper = 1.0 / math.sqrt(12.0 * (N - 1) ** 2)
            assert splitting_bracket_ok(lv.trace, lower, upper)
            assert max(row.radius for row in lv.trace.rows) <= 0.5

    def test_seeding_error_carries_level(self, unif, monkeypatch):
        monkeypatch.setattr(lloyd_module, "splitting_sampler", lambda dist, seed: (np.array([0.5]), True))
        with pytest.raises(SeedingError) as exc_info:
            ladder(unif, 3)
        assert exc_info.value.details["level"] == 2
