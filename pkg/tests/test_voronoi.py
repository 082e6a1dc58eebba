import math

import numpy as np
import pytest

from conftest import Phi, phi, random_cases
from optiquant.errors import ConfigurationError, InvariantViolation, PreconditionError, UnsupportedBackendError
from optiquant.measure import empirical, stream
from optiquant.voronoi import (
    Backend,
    Grid,
    boundary_faces,
    cell_stats,
    default_backend,
    face_segment,
    gauss_legendre_panels,
    kink_heights,
    min_pairwise_distance,
    nearest_index,
    slice_intervals,
)


class TestGrid:
    def test_vector_becomes_column(self):
        grid = Grid([0.0, 1.0, 3.0])
        assert grid.points.shape == (3, 1)
        assert grid.level == 3 and grid.dim == 1

    def test_points_are_read_only(self):
        grid = Grid([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ValueError):
            grid.points[0, 0] = 5.0

    def test_duplicates_rejected(self):
        with pytest.raises(InvariantViolation) as exc_info:
            Grid([[0.0], [1.0], [0.0]])
        assert exc_info.value.details["duplicates"] == [(0, 2)]

    def test_empty_and_non_finite(self):
        with pytest.raises(PreconditionError):
            Grid(np.zeros((0, 1)))
        with pytest.raises(PreconditionError):
            Grid([0.0, math.nan])

    def test_from_dict(self):
        grid = Grid.from_dict({"level": 2, "dim": 1, "points": [[0.25], [0.75]]})
        assert grid == Grid([0.25, 0.75])
        with pytest.raises(ConfigurationError) as exc_info:
            Grid.from_dict({"level": 2})
        assert exc_info.value.code == "missing_field"
        with pytest.raises(ConfigurationError):
            Grid.from_dict({"level": 3, "points": [[0.0], [1.0]]})


class TestNearest:
    def test_exact_hit(self):
        grid = Grid([0.0, 1.0, 2.0, 3.0])
        assert nearest_index([2.0], grid) == 2

    def test_tie_goes_to_lowest_index(self):
        assert nearest_index([0.5], Grid([0.0, 1.0])) == 0
        assert nearest_index([0.5], Grid([1.0, 0.0])) == 0

    def test_planar(self):
        grid = Grid([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert nearest_index([0.9, 0.1], grid) == 1


class TestBackends:
    def test_default_backend(self, unif, normal2d):
        assert default_backend(unif).kind == "exact1d"
        assert default_backend(empirical([[0.0], [1.0]])).kind == "atoms"
        assert default_backend(normal2d).kind == "quad2d"

    def test_mc_needs_seed(self):
        with pytest.raises(ConfigurationError) as exc_info:
            Backend.parse("mc", samples=100)
        assert exc_info.value.code == "missing_field"
        assert Backend.parse("mc", samples=100, seed=1) == Backend.mc(100, 1)

    def test_unknown_backend(self):
        with pytest.raises(ConfigurationError):
            Backend("gpu")

    def test_flags(self):
        assert Backend.exact1d().is_exact
        assert Backend.atoms().is_exact
        assert not Backend.quad2d().is_exact and Backend.quad2d().is_deterministic
        assert not Backend.mc(10, 0).is_deterministic


class TestCellStats:
    def test_uniform_symmetric_pair(self, unif, exact):
        stats = cell_stats(Grid([0.25, 0.75]), unif, exact)
        assert [s.mass for s in stats] == pytest.approx([0.5, 0.5])
        assert [float(s.centroid[0]) for s in stats] == pytest.approx([0.25, 0.75])

    def test_gaussian_pair(self, normal, exact):
        stats = cell_stats(Grid([-1.0, 2.0]), normal, exact)
        left, right = Phi(0.5), 1.0 - Phi(0.5)
        assert stats[0].mass == pytest.approx(left, abs=1e-12)
        assert stats[1].mass == pytest.approx(right, abs=1e-12)
        assert stats[0].centroid[0] == pytest.approx(-phi(0.5) / left, abs=1e-12)
        assert stats[1].centroid[0] == pytest.approx(phi(0.5) / right, abs=1e-12)
        assert stats[0].centroid[0] == pytest.approx(-0.5092, abs=1e-4)
        assert stats[1].centroid[0] == pytest.approx(1.1411, abs=1e-4)

    def test_empty_cell_marker(self, unif, exact):
        stats = cell_stats(Grid([5.0, 6.0]), unif, exact)
        assert stats[0].mass == pytest.approx(1.0)
        assert stats[1].mass == 0.0
        assert stats[1].is_empty and stats[1].centroid is None

    def test_unsorted_grid_keeps_indices(self, unif, exact):
        stats = cell_stats(Grid([0.75, 0.25]), unif, exact)
        assert stats[0].centroid[0] == pytest.approx(0.75)
        assert stats[1].centroid[0] == pytest.approx(0.25)

    def test_exact1d_rejects_planar(self, unif2d):
        with pytest.raises(UnsupportedBackendError):
            cell_stats(Grid([[0.2, 0.2], [0.8, 0.8]]), unif2d, Backend.exact1d())

    def test_dimension_mismatch(self, unif):
        with pytest.raises(PreconditionError):
            cell_stats(Grid([[0.2, 0.2], [0.8, 0.8]]), unif)

    def test_atoms(self):
        dist = empirical([[0.0], [1.0], [4.0]], [0.25, 0.25, 0.5])
        stats = cell_stats(Grid([0.0, 3.0]), dist, Backend.atoms())
        assert stats[0].mass == pytest.approx(0.5)
        assert stats[0].centroid[0] == pytest.approx(0.5)
        assert stats[1].centroid[0] == pytest.approx(4.0)
        assert stats[1].second_moment == pytest.approx(0.5)

    def test_mc_agrees_with_exact(self, unif):
        stats = cell_stats(Grid([0.25, 0.75]), unif, Backend.mc(100_000, 5))
        for s, expected in zip(stats, (0.25, 0.75)):
            assert abs(s.mass - 0.5) < 4 * s.mass_err
            assert abs(s.centroid[0] - expected) < 4 * s.centroid_err

    def test_mc_is_reproducible(self, normal):
        grid = Grid([-1.0, 0.5])
        a = cell_stats(grid, normal, Backend.mc(20_000, 3))
        b = cell_stats(grid, normal, Backend.mc(20_000, 3))
        assert [s.second_moment for s in a] == [s.second_moment for s in b]

    def test_mc_masses_sum_to_one(self, normal2d):
        grid = Grid([[-1.0, 0.0], [0.5, 0.8], [0.3, -1.2], [2.0, 2.0]])
        n = 50_000
        stats = cell_stats(grid, normal2d, Backend.mc(n, 11))
        masses = [s.mass for s in stats]
        assert math.fsum(masses) == pytest.approx(1.0, abs=1e-12)
        assert sum(round(m * n) for m in masses) == n

    def test_quad2d_product_grid(self, unif2d):
        grid = Grid([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        stats = cell_stats(grid, unif2d, Backend.quad2d(256))
        for s, point in zip(stats, grid):
            assert s.mass == pytest.approx(0.25, abs=1e-12)
            assert np.allclose(s.centroid, point, atol=1e-12)
            assert s.second_moment == pytest.approx(0.25 / 24.0, abs=1e-12)

    def test_quad2d_gaussian_halves(self, normal2d):
        stats = cell_stats(Grid([[-1.0, 0.0], [1.0, 0.0]]), normal2d, Backend.quad2d(512))
        half_mean = math.sqrt(2.0 / math.pi)
        assert stats[0].mass == pytest.approx(0.5, abs=1e-7)
        assert np.allclose(stats[0].centroid, [-half_mean, 0.0], atol=1e-6)
        assert np.allclose(stats[1].centroid, [half_mean, 0.0], atol=1e-6)


class TestCentroidContainment:
    def test_exact_centroids_fall_in_their_cells(self):
        for dist, grid in random_cases(200, seed=12):
            for i, s in enumerate(cell_stats(grid, dist)):
                if not s.is_empty:
                    assert nearest_index(s.centroid, grid) == i

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_mc_centroids_fall_in_their_cells(self, normal2d, seed):
        grid = Grid(stream(seed, "grid").normal(size=(6, 2)))
        for i, s in enumerate(cell_stats(grid, normal2d, Backend.mc(20_000, seed))):
            if not s.is_empty:
                assert nearest_index(s.centroid, grid) == i

    def test_quad2d_centroids_fall_in_their_cells(self, normal2d):
        grid = Grid([[-1.0, 0.2], [0.4, 1.1], [0.9, -0.7], [-0.2, -1.5]])
        for i, s in enumerate(cell_stats(grid, normal2d, Backend.quad2d(256))):
            assert nearest_index(s.centroid, grid) == i


class TestQuadratureHelpers:
    def test_panels_respect_breaks(self):
        nodes, weights = gauss_legendre_panels([0.0, 0.3, 1.0], 64)
        assert weights.sum() == pytest.approx(1.0)
        assert np.sum(weights * nodes ** 2) == pytest.approx(1.0 / 3.0, abs=1e-14)
        # |x - 0.3| has its kink on a break, so the rule stays exact
        assert np.sum(weights * np.abs(nodes - 0.3)) == pytest.approx(0.045 + 0.245, abs=1e-14)

    def test_kink_heights_include_vertex(self):
        grid = Grid([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        heights = kink_heights(grid, np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        assert heights.tolist() == pytest.approx([0.0, 0.5, 1.0])

    def test_slice_intervals(self):
        grid = Grid([[0.0, 0.0], [2.0, 0.0]])
        lo, hi = slice_intervals(grid, 0, np.array([-1.0, 0.0, 1.0]), -5.0, 5.0)
        assert lo.tolist() == [-5.0, -5.0, -5.0]
        assert hi.tolist() == pytest.approx([1.0, 1.0, 1.0])


class TestGeometry:
    def test_min_pairwise_distance(self):
        assert min_pairwise_distance(Grid([0.0, 1.0, 3.0])) == pytest.approx(1.0)
        assert min_pairwise_distance(Grid([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)
        assert math.isinf(min_pairwise_distance(Grid([0.5])))

    def test_min_pairwise_distance_brute_force(self):
        pts = stream(1, "grid").uniform(-1.0, 1.0, size=(12, 3))
        brute = min(np.linalg.norm(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
        assert min_pairwise_distance(Grid(pts)) == pytest.approx(brute)

    def test_faces_1d(self):
        (face,) = boundary_faces(Grid([0.0, 1.0]))
        assert (face.i, face.j) == (0, 1)
        assert face.anchor.tolist() == [0.5]
        assert face.normal.tolist() == [1.0]
        assert face.active

    def test_faces_2d(self):
        (face,) = boundary_faces(Grid([[0.0, 0.0], [2.0, 0.0]]))
        assert face.anchor.tolist() == [1.0, 0.0]
        assert face.normal.tolist() == pytest.approx([1.0, 0.0])
        assert face.active

    def test_collinear_outer_pair_inactive(self):
        faces = {(f.i, f.j): f.active for f in boundary_faces(Grid([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))}
        assert faces == {(0, 1): True, (0, 2): False, (1, 2): True}

    def test_face_segment(self):
        grid = Grid([[0.25, 0.25], [0.75, 0.25], [0.5, 0.9]])
        start, end = face_segment(grid, 0, 1, np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        assert sorted([start[1], end[1]]) == pytest.approx([0.0, _vertex_height(grid)], abs=1e-12)
        assert start[0] == pytest.approx(0.5) and end[0] == pytest.approx(0.5)
        assert face_segment(Grid([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 0, 2,
                            np.array([-5.0, -5.0]), np.array([5.0, 5.0])) is None


def _vertex_height(grid: Grid) -> float:
    """Height on x = 0.5 equidistant from points 0 and 2."""
    a, c = grid.points[0], grid.points[2]
    # |(0.5, y) - a|^2 = |(0.5, y) - c|^2
    return float((c @ c - a @ a - 2 * 0.5 * (c[0] - a[0])) / (2 * (c[1] - a[1])))
