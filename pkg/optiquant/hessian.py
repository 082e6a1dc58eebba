"""Hessian of the distortion and stability labels for stationary grids.

With ∂G/∂x_i = 2 ∫_{C_i} (x_i - ξ) μ(dξ) and δ_ij = |x_i - x_j| the blocks are

    H_ij = (2/δ_ij) ∫_{F_ij} (x_i - ξ) ⊗ (x_j - ξ) ρ(ξ) dσ(ξ)                (i ≠ j)
    H_ii = 2 μ(C_i) I - Σ_{j≠i} (2/δ_ij) ∫_{F_ij} (x_i - ξ) ⊗ (x_i - ξ) ρ(ξ) dσ(ξ)

where F_ij = C̄_i ∩ C̄_j. In one dimension the faces are midpoints and the
matrix is tridiagonal. Finite differences of the gradient certify both forms.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from optiquant.constants import (
    DEFAULT_QUAD_NODES,
    DIVERGENCE_DENSITY_RATIO,
    FD_HESSIAN_STEP,
    SYMMETRY_TOL,
    TOL_EIG_REL,
    UNBOUNDED_INFLATE_SIGMAS,
)
from optiquant.distortion import gradient
from optiquant.errors import InvariantViolation, PreconditionError, QuadratureDivergenceError, UnsupportedBackendError
from optiquant.measure import DistributionModel
from optiquant.voronoi import (
    Backend,
    Grid,
    boundary_faces,
    cell_stats,
    default_backend,
    face_segment,
    gauss_legendre_panels,
)

logger = logging.getLogger(__name__)

LABELS = ("local_min", "saddle", "degenerate")


@dataclass
class HessianReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    label: str
    fd_discrepancy: Optional[float] = None
    asymmetry: float = 0.0
    tol_eig: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matrix": np.asarray(self.matrix).tolist(),
            "eigenvalues": np.asarray(self.eigenvalues).tolist(),
            "label": self.label,
            "fd_discrepancy": self.fd_discrepancy,
            "asymmetry": self.asymmetry,
            "tol_eig": self.tol_eig,
        }


def _require_density(dist: DistributionModel) -> None:
    if not dist.covers_hyperplanes or dist.density is None:
        raise UnsupportedBackendError(f"a Hessian needs a continuous density; {dist.name} has none",
                                      details={"kind": dist.kind})


def _symmetrize(matrix: np.ndarray):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise PreconditionError(f"a square matrix is required, got shape {matrix.shape}")
    asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    return 0.5 * (matrix + matrix.T), asymmetry


def eigen_label(matrix, tol_eig: Optional[float] = None):
    """``(label, eigenvalues, tol_eig)`` for a symmetric matrix."""
    sym, asymmetry = _symmetrize(matrix)
    if asymmetry > SYMMETRY_TOL:
        raise InvariantViolation(f"matrix is not symmetric (max deviation {asymmetry:.3e})",
                                 details={"asymmetry": asymmetry})
    eigenvalues = np.linalg.eigvalsh(sym)
    if tol_eig is None:
        tol_eig = TOL_EIG_REL * (1.0 + float(np.max(np.abs(eigenvalues))))
    if eigenvalues[0] > tol_eig:
        label = "local_min"
    elif eigenvalues[0] < -tol_eig and eigenvalues[-1] > tol_eig:
        label = "saddle"
    else:
        label = "degenerate"
    return label, eigenvalues, tol_eig


def classify(report_or_matrix: Union[HessianReport, np.ndarray], tol_eig: Optional[float] = None) -> str:
    if isinstance(report_or_matrix, HessianReport):
        return eigen_label(report_or_matrix.matrix, tol_eig if tol_eig is not None else report_or_matrix.tol_eig)[0]
    return eigen_label(report_or_matrix, tol_eig)[0]


def hessian_fd(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None,
               h: float = FD_HESSIAN_STEP) -> np.ndarray:
    """Central differences of the gradient, symmetrized."""
    backend = backend or default_backend(dist)
    if backend.kind == "mc":
        logger.warning("finite-difference Hessian on the mc backend carries sampling noise of order std_err/h")
    base = np.array(grid.points)
    n = base.size
    matrix = np.zeros((n, n))
    for a in range(n):
        plus, minus = base.copy().reshape(-1), base.copy().reshape(-1)
        plus[a] += h
        minus[a] -= h
        g_plus = gradient(Grid(plus.reshape(base.shape)), dist, backend).reshape(-1)
        g_minus = gradient(Grid(minus.reshape(base.shape)), dist, backend).reshape(-1)
        matrix[:, a] = (g_plus - g_minus) / (2.0 * h)
    return 0.5 * (matrix + matrix.T)


def _report(raw: np.ndarray, grid: Grid, dist: DistributionModel, backend: Backend,
            fd_step: float, check: bool) -> HessianReport:
    matrix, asymmetry = _symmetrize(raw)
    if asymmetry > SYMMETRY_TOL:
        logger.warning("raw Hessian asymmetry %.3e before symmetrization", asymmetry)
    label, eigenvalues, tol_eig = eigen_label(matrix)
    discrepancy = None
    if check:
        discrepancy = float(np.max(np.abs(matrix - hessian_fd(grid, dist, backend, fd_step))))
        logger.info("Hessian vs finite differences: max deviation %.3e", discrepancy)
    return HessianReport(matrix, eigenvalues, label, discrepancy, asymmetry, tol_eig)


def hessian_1d(grid: Grid, dist: DistributionModel, fd_step: float = FD_HESSIAN_STEP,
               check: bool = True) -> HessianReport:
    """Tridiagonal Hessian for a one-dimensional law with a continuous density."""
    if grid.dim != 1:
        raise PreconditionError(f"hessian_1d needs a one-dimensional grid, got d={grid.dim}")
    _require_density(dist)
    backend = default_backend(dist)
    stats = cell_stats(grid, dist, backend)

    x = grid.points[:, 0]
    order = np.argsort(x, kind="stable")
    matrix = np.diag([2.0 * s.mass for s in stats])
    for i, j in zip(order[:-1], order[1:]):
        width = x[j] - x[i]
        mid = 0.5 * (x[i] + x[j])
        weight = float(dist.evaluate_density(np.array([[mid]]))[0]) * width / 2.0
        matrix[i, i] -= weight
        matrix[j, j] -= weight
        matrix[i, j] -= weight
        matrix[j, i] -= weight
    return _report(matrix, grid, dist, backend, fd_step, check)


def _truncated_end(point: np.ndarray, dist: DistributionModel, box_lo: np.ndarray, box_hi: np.ndarray) -> bool:
    """True when ``point`` sits on a box side that stands in for an unbounded support side."""
    sup_lo, sup_hi = dist.support.bounding_box(dist.dim)
    scale = 1e-9 * (1.0 + float(np.max(np.abs(box_hi - box_lo))))
    on_lo = (np.abs(point - box_lo) <= scale) & ~np.isfinite(sup_lo)
    on_hi = (np.abs(point - box_hi) <= scale) & ~np.isfinite(sup_hi)
    return bool(np.any(on_lo | on_hi))


def hessian_2d(grid: Grid, dist: DistributionModel, quad_points: int = DEFAULT_QUAD_NODES,
               fd_step: float = FD_HESSIAN_STEP, check: bool = True) -> HessianReport:
    """Block Hessian in the plane from face integrals on the exact face segments."""
    if grid.dim != 2:
        raise PreconditionError(f"hessian_2d needs a planar grid, got d={grid.dim}")
    _require_density(dist)
    backend = Backend.quad2d(quad_points)
    stats = cell_stats(grid, dist, backend)
    box_lo, box_hi = dist.box(UNBOUNDED_INFLATE_SIGMAS)
    peak = float(dist.evaluate_density(dist.mean[None, :])[0])

    n = grid.level
    pts = grid.points
    blocks = np.zeros((n, n, 2, 2))
    for i in range(n):
        blocks[i, i] = 2.0 * stats[i].mass * np.eye(2)

    for face in boundary_faces(grid):
        if not face.active:
            continue
        i, j = face.i, face.j
        segment = face_segment(grid, i, j, box_lo, box_hi)
        if segment is None:
            continue
        start, end = segment
        length = float(np.linalg.norm(end - start))
        for endpoint in (start, end):
            if _truncated_end(endpoint, dist, box_lo, box_hi):
                ratio = float(dist.evaluate_density(endpoint[None, :])[0]) / peak if peak > 0 else math.inf
                if ratio > DIVERGENCE_DENSITY_RATIO:
                    raise QuadratureDivergenceError(
                        f"density does not decay along the unbounded face ({i}, {j})",
                        details={"face": [i, j], "endpoint": endpoint.tolist(), "density_ratio": ratio},
                    )
        s, w = gauss_legendre_panels([0.0, length], quad_points)
        nodes = start + np.outer(s / length, end - start)
        wrho = w * dist.evaluate_density(nodes)
        u = pts[i] - nodes
        v = pts[j] - nodes
        scale = 2.0 / float(np.linalg.norm(pts[i] - pts[j]))
        cross = scale * np.einsum("k,ka,kb->ab", wrho, u, v)
        blocks[i, j] += cross
        blocks[j, i] += cross.T
        blocks[i, i] -= scale * np.einsum("k,ka,kb->ab", wrho, u, u)
        blocks[j, j] -= scale * np.einsum("k,ka,kb->ab", wrho, v, v)

    matrix = blocks.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)
    return _report(matrix, grid, dist, backend, fd_step, check)


def hessian_report(grid: Grid, dist: DistributionModel, quad_points: int = DEFAULT_QUAD_NODES,
                   fd_step: float = FD_HESSIAN_STEP, check: bool = True,
                   backend: Optional[Backend] = None) -> HessianReport:
    """Closed-form Hessian in d = 1, 2; finite differences alone above."""
    if grid.dim == 1:
        return hessian_1d(grid, dist, fd_step, check)
    if grid.dim == 2:
        return hessian_2d(grid, dist, quad_points, fd_step, check)
    logger.info("d=%d: face quadrature unavailable, using finite differences only", grid.dim)
    matrix = hessian_fd(grid, dist, backend or default_backend(dist), fd_step)
    label, eigenvalues, tol_eig = eigen_label(matrix)
    return HessianReport(matrix, eigenvalues, label, None, 0.0, tol_eig)


__all__ = [
    "LABELS",
    "HessianReport",
    "hessian_1d",
    "hessian_2d",
    "hessian_fd",
    "hessian_report",
    "eigen_label",
    "classify",
]
