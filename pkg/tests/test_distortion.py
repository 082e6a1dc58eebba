import math

import numpy as np
import pytest

from conftest import random_cases
from optiquant.distortion import (
    EnergyReport,
    distortion,
    energy_gap,
    estimate_optimal_error,
    finite_difference_gradient,
    gradient,
    partition_error,
    random_start,
)
from optiquant.errors import InvariantViolation, PreconditionError
from optiquant.lloyd import LloydConfig, lloyd_step
from optiquant.measure import empirical
from optiquant.voronoi import Backend, Grid, cell_stats


TIGHT = LloydConfig(tol_move=1e-12)


class TestDistortion:
    def test_single_point_is_variance(self, normal, unif):
        assert distortion(Grid([0.0]), normal).value == pytest.approx(1.0, abs=1e-12)
        assert distortion(Grid([0.5]), unif).value == pytest.approx(1.0 / 12.0, abs=1e-15)

    def test_symmetric_pair(self, unif, exact):
        report = distortion(Grid([0.25, 0.75]), unif, exact)
        assert report.value == pytest.approx(1.0 / 48.0, abs=1e-15)
        assert report.quant_error == pytest.approx(math.sqrt(1.0 / 48.0))

    @pytest.mark.parametrize("N", [1, 2, 3, 5, 8])
    def test_uniform_midpoint_grid(self, unif, N):
        grid = Grid([(2 * i - 1) / (2 * N) for i in range(1, N + 1)])
        assert distortion(grid, unif).value == pytest.approx(1.0 / (12 * N * N), abs=1e-14)

    def test_permutation_invariance(self, normal):
        grid = Grid([-1.3, 0.2, 0.9, 2.0])
        perm = [2, 0, 3, 1]
        shuffled = Grid(grid.points[perm])
        assert distortion(shuffled, normal).value == pytest.approx(distortion(grid, normal).value, abs=1e-15)
        assert np.allclose(gradient(shuffled, normal), gradient(grid, normal)[perm], atol=1e-15)

    def test_orthogonal_invariance_mc(self, normal2d):
        backend = Backend.mc(100_000, 21)
        grid = Grid([[-1.0, 0.2], [0.8, 0.5], [0.1, -1.1]])
        angle = 0.7
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        a = distortion(grid, normal2d, backend)
        b = distortion(Grid(grid.points @ rot.T), normal2d, backend)
        assert abs(a.value - b.value) < 4 * math.hypot(a.std_err, b.std_err)

    def test_energy_report_rejects_negative(self):
        with pytest.raises(InvariantViolation):
            EnergyReport(-1e-3)


class TestGradient:
    def test_stationary_pair(self, unif):
        assert np.allclose(gradient(Grid([0.25, 0.75]), unif), 0.0, atol=1e-15)

    @pytest.mark.parametrize("a", [0.0, 0.5, -1.7])
    def test_single_gaussian_point(self, normal, a):
        assert gradient(Grid([a]), normal)[0, 0] == pytest.approx(2.0 * a, abs=1e-12)

    def test_matches_finite_differences(self):
        for dist, grid in random_cases(100, seed=6):
            g = gradient(grid, dist)
            fd = finite_difference_gradient(grid, dist)
            assert np.max(np.abs(g - fd)) < 1e-6
            assert float(np.sum(g * g)) <= 4.0 * distortion(grid, dist).value + 1e-12

    def test_empty_cell_has_zero_row(self, unif):
        g = gradient(Grid([0.5, 7.0]), unif)
        assert g[1].tolist() == [0.0]


class TestEnergyGap:
    def test_stationary_gap_is_zero(self, unif):
        grid = Grid([0.25, 0.75])
        stats = cell_stats(grid, unif)
        assert energy_gap(stats, grid, grid) == 0.0

    def test_gaussian_pair_gap(self, normal):
        grid = Grid([-1.0, 2.0])
        step = lloyd_step(grid, normal)
        assert energy_gap(step.stats, grid, step.new_grid) == pytest.approx(0.3942, abs=1e-4)
        assert step.gap == pytest.approx(energy_gap(step.stats, grid, step.new_grid), abs=1e-15)

    def test_length_mismatch(self, unif):
        grid = Grid([0.25, 0.75])
        with pytest.raises(InvariantViolation):
            energy_gap(cell_stats(grid, unif), grid, Grid([0.5]))

    def test_two_sided_identity(self):
        for dist, grid in random_cases(200, seed=4):
            step = lloyd_step(grid, dist)
            before = distortion(grid, dist).value
            after = partition_error(grid, step.new_grid.points, dist).value
            assert step.gap == pytest.approx(before - after, abs=1e-8)


class TestRandomStart:
    def test_distinct_points(self, normal):
        grid = random_start(normal, 6, seed=2)
        assert grid.level == 6
        assert random_start(normal, 6, seed=2) == grid

    def test_empirical_uses_atoms(self):
        dist = empirical([[0.0], [1.0], [2.0], [2.0]])
        grid = random_start(dist, 3, seed=1)
        assert sorted(grid.points[:, 0].tolist()) == [0.0, 1.0, 2.0]
        with pytest.raises(PreconditionError):
            random_start(dist, 4, seed=1)


class TestOptimalError:
    def test_uniform_five(self, unif):
        e, grid = estimate_optimal_error(unif, 5, restarts=3, seed=0, config=TIGHT)
        assert e * e == pytest.approx(1.0 / 300.0, abs=1e-8)
        assert np.sort(grid.points[:, 0]) == pytest.approx([0.1, 0.3, 0.5, 0.7, 0.9], abs=1e-6)

    def test_gaussian_one_and_two(self, normal):
        e1, _ = estimate_optimal_error(normal, 1, restarts=1, seed=0, config=TIGHT)
        assert e1 * e1 == pytest.approx(1.0, abs=1e-12)
        e2, grid = estimate_optimal_error(normal, 2, restarts=3, seed=0, config=TIGHT)
        assert e2 * e2 == pytest.approx(1.0 - 2.0 / math.pi, abs=1e-6)
        assert np.sort(grid.points[:, 0]) == pytest.approx([-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)], abs=1e-4)

    def test_gaussian_three(self, normal):
        e3, grid = estimate_optimal_error(normal, 3, restarts=4, seed=1, config=TIGHT)
        assert e3 * e3 == pytest.approx(0.1902, abs=1e-3)
        assert np.sort(grid.points[:, 0]) == pytest.approx([-1.2240, 0.0, 1.2240], abs=1e-3)

    def test_monotone_in_level(self, normal):
        errors = [estimate_optimal_error(normal, N, restarts=2, seed=3)[0] for N in (1, 2, 3, 4)]
        assert all(b < a for a, b in zip(errors, errors[1:]))

    def test_workers_give_same_answer(self, normal):
        serial = estimate_optimal_error(normal, 3, restarts=3, seed=5)
        threaded = estimate_optimal_error(normal, 3, restarts=3, seed=5, workers=3)
        assert serial[0] == threaded[0]
        assert serial[1] == threaded[1]

    def test_bad_restarts(self, normal):
        with pytest.raises(PreconditionError):
            estimate_optimal_error(normal, 2, restarts=0, seed=0)
