"""Nearest-neighbour projection and Voronoi cell statistics.

Four backends compute per-cell mass, first moment and second moment:

* ``exact1d``: closed-form interval integrals for one-dimensional analytic laws;
* ``atoms``: exact sums over the atoms of an empirical law (batch k-means);
* ``mc``: Monte Carlo with standard errors, any dimension;
* ``quad2d``: line-slice Gauss–Legendre quadrature for planar laws with a density.

Ties on median hyperplanes go to the lowest index.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.spatial.distance import cdist, pdist

from optiquant.constants import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_QUAD_NODES,
    FACE_PROBES,
    MC_CHUNK,
    QUAD_LINE_NODES,
    QUAD_PANEL,
    UNBOUNDED_INFLATE_SIGMAS,
)
from optiquant.errors import ConfigurationError, InvariantViolation, PreconditionError, UnsupportedBackendError
from optiquant.measure import DistributionModel, interval_second_moment, interval_stats, sample
from optiquant.measure.rng import SeedLike

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("exact1d", "mc", "atoms", "quad2d")


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

def duplicate_pairs(points: np.ndarray) -> List[Tuple[int, int]]:
    """Index pairs of exactly coinciding rows."""
    seen: Dict[bytes, int] = {}
    pairs = []
    for idx, row in enumerate(np.ascontiguousarray(points)):
        key = row.tobytes()
        if key in seen:
            pairs.append((seen[key], idx))
        else:
            seen[key] = idx
    return pairs


class Grid:
    """Ordered N-tuple of pairwise distinct points in R^d.

    The order is the consistent representation across Lloyd iterations:
    index ``i`` always names the same generator.
    """

    __slots__ = ("_points",)

    def __init__(self, points):
        arr = np.array(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise PreconditionError(f"a grid needs a non-empty (N, d) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("grid points must be finite")
        pairs = duplicate_pairs(arr)
        if pairs:
            raise InvariantViolation("grid points must be pairwise distinct", details={"duplicates": pairs})
        arr.flags.writeable = False
        self._points = arr

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def level(self) -> int:
        return self._points.shape[0]

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self.level

    def __getitem__(self, idx) -> np.ndarray:
        return self._points[idx]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self._points)

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self._points, other._points)

    def __repr__(self) -> str:
        return f"Grid(level={self.level}, dim={self.dim}, points={self._points.tolist()!r})"

    def to_dict(self) -> Dict[str, Any]:
        return {"level": self.level, "dim": self.dim, "points": self._points.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Grid":
        try:
            grid = cls(data["points"])
        except KeyError as exc:
            raise ConfigurationError("grid document needs a 'points' field", code="missing_field") from exc
        if "level" in data and int(data["level"]) != grid.level:
            raise ConfigurationError(f"grid document says level {data['level']} but has {grid.level} points")
        return grid


# ---------------------------------------------------------------------------
# Backends and cell statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Backend:
    """Integration backend for cell statistics."""

    kind: str
    samples: int = 0
    seed: SeedLike = 0
    nodes: int = 0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"unknown backend {self.kind!r}; expected one of {BACKEND_KINDS}")
        if self.kind == "mc" and self.samples < 1:
            raise ConfigurationError("the mc backend needs a positive sample count")
        if self.kind == "quad2d" and self.nodes < 1:
            raise ConfigurationError("the quad2d backend needs a positive node count")

    @classmethod
    def exact1d(cls) -> "Backend":
        return cls("exact1d")

    @classmethod
    def mc(cls, n: int = DEFAULT_MC_SAMPLES, seed: SeedLike = 0) -> "Backend":
        return cls("mc", samples=int(n), seed=seed)

    @classmethod
    def atoms(cls) -> "Backend":
        return cls("atoms")

    @classmethod
    def quad2d(cls, nodes: int = DEFAULT_QUAD_NODES) -> "Backend":
        return cls("quad2d", nodes=int(nodes))

    @classmethod
    def parse(cls, text: str, samples: int = DEFAULT_MC_SAMPLES, seed: Optional[int] = None,
              nodes: int = DEFAULT_QUAD_NODES) -> "Backend":
        kind = text.strip().lower()
        if kind == "mc":
            if seed is None:
                raise ConfigurationError("the mc backend needs an explicit seed", code="missing_field")
            return cls.mc(samples, seed)
        if kind == "quad2d":
            return cls.quad2d(nodes)
        return cls(kind)

    @property
    def is_exact(self) -> bool:
        """Closed-form or finite-sum statistics (no quadrature or sampling error)."""
        return self.kind in ("exact1d", "atoms")

    @property
    def is_deterministic(self) -> bool:
        return self.kind != "mc"

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "mc":
            out.update(samples=self.samples, seed=self.seed)
        if self.kind == "quad2d":
            out.update(nodes=self.nodes)
        return out


def default_backend(dist: DistributionModel) -> Backend:
    """Most accurate deterministic backend the law supports."""
    if dist.is_1d_analytic:
        return Backend.exact1d()
    if dist.kind == "empirical":
        return Backend.atoms()
    if dist.dim == 2 and dist.density is not None:
        return Backend.quad2d()
    return Backend.mc(DEFAULT_MC_SAMPLES, 0)


@dataclass
class CellStats:
    """Voronoi cell statistics; ``centroid is None`` marks an empty cell."""

    mass: float
    centroid: Optional[np.ndarray]
    first_moment: np.ndarray
    second_moment: float
    mass_err: float = 0.0
    centroid_err: float = 0.0
    second_moment_err: float = 0.0

    @property
    def is_empty(self) -> bool:
        return self.centroid is None


def assign(points, grid: Grid) -> np.ndarray:
    """Nearest grid index for each row of ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, grid.dim)
    out = np.empty(len(pts), dtype=np.int64)
    for start in range(0, len(pts), MC_CHUNK):
        block = pts[start:start + MC_CHUNK]
        out[start:start + len(block)] = np.argmin(cdist(block, grid.points, "sqeuclidean"), axis=1)
    return out


def nearest_index(xi, grid: Grid) -> int:
    """Index of the nearest grid point, lowest index on ties."""
    if grid.level == 0:
        raise PreconditionError("nearest_index needs a non-empty grid")
    return int(assign(np.asarray(xi, dtype=float).reshape(1, grid.dim), grid)[0])


def _resolve_anchors(grid: Grid, anchors) -> np.ndarray:
    if anchors is None:
        return grid.points
    arr = np.asarray(anchors, dtype=float).reshape(-1, grid.dim) if np.ndim(anchors) else None
    if arr is None or arr.shape != grid.points.shape:
        raise InvariantViolation("anchors must match the grid shape")
    return arr


def _finish(mass, first, second, errs=None) -> List[CellStats]:
    stats = []
    for i in range(len(mass)):
        m = float(mass[i])
        centroid = (first[i] / m) if m > 0 else None
        mass_err, centroid_err, second_err = errs[i] if errs is not None else (0.0, 0.0, 0.0)
        stats.append(CellStats(
            mass=m,
            centroid=centroid,
            first_moment=np.asarray(first[i], dtype=float),
            second_moment=float(max(second[i], 0.0)),
            mass_err=mass_err,
            centroid_err=centroid_err,
            second_moment_err=second_err,
        ))
    return stats


def _stats_exact1d(grid: Grid, dist: DistributionModel, anchors: np.ndarray) -> List[CellStats]:
    if grid.dim != 1 or not dist.is_1d_analytic:
        raise UnsupportedBackendError("exact1d needs a one-dimensional grid and analytic law",
                                      details={"dim": grid.dim, "kind": dist.kind})
    x = grid.points[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    bounds = np.concatenate(([-math.inf], 0.5 * (xs[:-1] + xs[1:]), [math.inf]))
    n = grid.level
    mass, first, second = np.zeros(n), np.zeros((n, 1)), np.zeros(n)
    for pos, i in enumerate(order):
        a, b = float(bounds[pos]), float(bounds[pos + 1])
        m, s1 = interval_stats(dist, a, b)
        s2 = interval_second_moment(dist, a, b)
        y = float(anchors[i, 0])
        mass[i], first[i, 0] = m, s1
        second[i] = s2 - 2.0 * y * s1 + y * y * m
    return _finish(mass, first, second)


def _stats_atoms(grid: Grid, dist: DistributionModel, anchors: np.ndarray) -> List[CellStats]:
    if dist.kind != "empirical":
        raise UnsupportedBackendError("the atoms backend needs an empirical law", details={"kind": dist.kind})
    n = grid.level
    idx = assign(dist.points, grid)
    w = dist.weights
    mass = np.bincount(idx, weights=w, minlength=n)
    first = np.stack([np.bincount(idx, weights=w * dist.points[:, c], minlength=n) for c in range(grid.dim)], axis=1)
    sq = np.sum((dist.points - anchors[idx]) ** 2, axis=1)
    second = np.bincount(idx, weights=w * sq, minlength=n)
    return _finish(mass, first, second)


def _stats_mc(grid: Grid, dist: DistributionModel, anchors: np.ndarray, backend: Backend) -> List[CellStats]:
    n, d = grid.level, grid.dim
    pts = sample(dist, backend.samples, backend.seed, tag="cells")
    count = np.zeros(n)
    s1, s1sq = np.zeros((n, d)), np.zeros((n, d))
    q1, q2 = np.zeros(n), np.zeros(n)
    # fixed shard order keeps the sums bit-reproducible
    for start in range(0, len(pts), MC_CHUNK):
        block = pts[start:start + MC_CHUNK]
        idx = assign(block, grid)
        count += np.bincount(idx, minlength=n)
        for c in range(d):
            s1[:, c] += np.bincount(idx, weights=block[:, c], minlength=n)
            s1sq[:, c] += np.bincount(idx, weights=block[:, c] ** 2, minlength=n)
        sq = np.sum((block - anchors[idx]) ** 2, axis=1)
        q1 += np.bincount(idx, weights=sq, minlength=n)
        q2 += np.bincount(idx, weights=sq * sq, minlength=n)

    total = float(len(pts))
    mass = count / total
    errs = []
    for i in range(n):
        p = mass[i]
        mass_err = math.sqrt(max(p * (1.0 - p), 0.0) / total)
        if count[i] > 1:
            within = s1sq[i] / count[i] - (s1[i] / count[i]) ** 2
            centroid_err = math.sqrt(max(float(np.sum(within)), 0.0) / count[i])
        else:
            centroid_err = math.inf if count[i] == 1 else 0.0
        second_err = math.sqrt(max(q2[i] / total - (q1[i] / total) ** 2, 0.0) / total)
        errs.append((mass_err, centroid_err, second_err))
    return _finish(mass, s1 / total, q1 / total, errs)


def gauss_legendre_panels(breaks, total_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss–Legendre rule over the sorted ``breaks``.

    Panels never straddle a break; roughly ``total_nodes`` nodes are spread in
    proportion to segment length, at least one panel per segment.
    """
    base_x, base_w = np.polynomial.legendre.leggauss(QUAD_PANEL)
    breaks = np.asarray(breaks, dtype=float)
    span = breaks[-1] - breaks[0]
    budget = max(1, total_nodes // QUAD_PANEL)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        count = max(1, int(round(budget * (b - a) / span)))
        edges = np.linspace(a, b, count + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * base_x[None, :]).reshape(-1))
        weights.append((half[:, None] * base_w[None, :]).reshape(-1))
    return np.concatenate(nodes), np.concatenate(weights)


def kink_heights(grid: Grid, box_lo, box_hi) -> np.ndarray:
    """Heights where a cell's horizontal extent changes slope (2D).

    These are the Voronoi vertices plus the points where a cell boundary meets
    a vertical side of the box, together with the box's own bottom and top.
    """
    pts = grid.points
    n = grid.level
    y_lo, y_hi = float(box_lo[1]), float(box_hi[1])
    heights = [y_lo, y_hi]
    scale = 1.0 + float(np.max(np.abs(pts)))
    tol = 1e-9 * scale * scale

    if n >= 3:
        triples = np.array(list(itertools.combinations(range(n), 3)))
        a, b, c = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]
        lhs = np.stack([2.0 * (b - a), 2.0 * (c - a)], axis=1)
        rhs = np.stack([np.sum(b * b - a * a, axis=1), np.sum(c * c - a * a, axis=1)], axis=1)
        ok = np.abs(np.linalg.det(lhs)) > 1e-14 * scale * scale
        if np.any(ok):
            centers = np.linalg.solve(lhs[ok], rhs[ok][..., None])[..., 0]
            radius2 = np.sum((centers - a[ok]) ** 2, axis=1)
            nearest = cdist(centers, pts, "sqeuclidean").min(axis=1)
            heights.extend(centers[nearest >= radius2 - tol, 1].tolist())

    for i, k in itertools.combinations(range(n), 2):
        dy = pts[k, 1] - pts[i, 1]
        if dy == 0.0:
            continue
        rhs = float(pts[k] @ pts[k] - pts[i] @ pts[i])
        for x in (float(box_lo[0]), float(box_hi[0])):
            y = (rhs - 2.0 * x * (pts[k, 0] - pts[i, 0])) / (2.0 * dy)
            own = float(np.sum((np.array([x, y]) - pts[i]) ** 2))
            nearest = float(cdist(np.array([[x, y]]), pts, "sqeuclidean").min())
            if nearest >= own - tol:
                heights.append(y)

    heights = np.unique(np.clip(heights, y_lo, y_hi))
    keep = np.concatenate(([True], np.diff(heights) > 1e-12 * scale))
    heights = heights[keep]
    heights[-1] = y_hi
    return heights


def slice_intervals(grid: Grid, i: int, ys: np.ndarray, x_lo: float, x_hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """x-extent of cell ``i`` along each horizontal line ``y = ys[k]`` (2D)."""
    pts = grid.points
    others = np.delete(np.arange(grid.level), i)
    lo = np.full(len(ys), x_lo)
    hi = np.full(len(ys), x_hi)
    xi = pts[i]
    for k in others:
        xk = pts[k]
        a = 2.0 * (xk[0] - xi[0])
        c = (xk @ xk - xi @ xi) - 2.0 * ys * (xk[1] - xi[1])
        if a > 0:
            hi = np.minimum(hi, c / a)
        elif a < 0:
            lo = np.maximum(lo, c / a)
        else:
            dead = c < 0
            hi = np.where(dead, lo, hi)
    return lo, hi


def _stats_quad2d(grid: Grid, dist: DistributionModel, anchors: np.ndarray, backend: Backend) -> List[CellStats]:
    if grid.dim != 2 or dist.dim != 2 or dist.density is None or dist.kind == "empirical":
        raise UnsupportedBackendError("quad2d needs a planar grid and a law with a density",
                                      details={"dim": grid.dim, "kind": dist.kind})
    box_lo, box_hi = dist.box(UNBOUNDED_INFLATE_SIGMAS)
    ys, wy = gauss_legendre_panels(kink_heights(grid, box_lo, box_hi), backend.nodes)
    line_x, line_w = np.polynomial.legendre.leggauss(QUAD_LINE_NODES)
    n = grid.level
    mass, first, second = np.zeros(n), np.zeros((n, 2)), np.zeros(n)
    for i in range(n):
        lo, hi = slice_intervals(grid, i, ys, float(box_lo[0]), float(box_hi[0]))
        keep = hi > lo
        if not np.any(keep):
            continue
        y_k, w_k, lo_k, hi_k = ys[keep], wy[keep], lo[keep], hi[keep]
        half = 0.5 * (hi_k - lo_k)
        xs = 0.5 * (hi_k + lo_k)[:, None] + half[:, None] * line_x[None, :]
        weights = (w_k * half)[:, None] * line_w[None, :]
        yy = np.broadcast_to(y_k[:, None], xs.shape)
        nodes = np.stack([xs.reshape(-1), yy.reshape(-1)], axis=1)
        wrho = weights.reshape(-1) * dist.evaluate_density(nodes)
        mass[i] = wrho.sum()
        first[i] = wrho @ nodes
        second[i] = wrho @ np.sum((nodes - anchors[i]) ** 2, axis=1)
    return _finish(mass, first, second)


def cell_stats(grid: Grid, dist: DistributionModel, backend: Optional[Backend] = None, anchors=None) -> List[CellStats]:
    """Per-cell mass, first moment, centroid and second moment about ``anchors``."""
    backend = backend or default_backend(dist)
    if grid.dim != dist.dim:
        raise PreconditionError(f"grid dimension {grid.dim} does not match law dimension {dist.dim}")
    anchor_arr = _resolve_anchors(grid, anchors)
    if backend.kind == "exact1d":
        return _stats_exact1d(grid, dist, anchor_arr)
    if backend.kind == "atoms":
        return _stats_atoms(grid, dist, anchor_arr)
    if backend.kind == "quad2d":
        return _stats_quad2d(grid, dist, anchor_arr, backend)
    return _stats_mc(grid, dist, anchor_arr, backend)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def min_pairwise_distance(grid: Grid) -> float:
    """Smallest distance between two grid points (``inf`` below two points)."""
    if grid.level < 2:
        return math.inf
    return float(pdist(grid.points).min())


class Face(NamedTuple):
    """Median hyperplane between generators ``i < j``."""

    i: int
    j: int
    anchor: np.ndarray
    normal: np.ndarray
    active: bool


def _probe_lattice(count: int, dims: int, half_width: float) -> np.ndarray:
    per_axis = max(1, math.ceil(count ** (1.0 / dims)))
    ticks = ((np.arange(per_axis) + 0.5) / per_axis * 2.0 - 1.0) * half_width
    mesh = np.meshgrid(*([ticks] * dims), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def boundary_faces(grid: Grid, probes: int = FACE_PROBES) -> List[Face]:
    """All median hyperplanes with an ``active`` flag for shared boundaries.

    In 1D the flag is exact. In higher dimension the hyperplane is probed on a
    stratified lattice inside the grid's inflated bounding box.
    """
    pts = grid.points
    if duplicate_pairs(pts):
        raise InvariantViolation("boundary_faces needs pairwise distinct points")
    n, d = grid.level, grid.dim
    extent = float(np.max(np.ptp(pts, axis=0))) if n > 1 else 1.0
    faces = []
    for i in range(n):
        for j in range(i + 1, n):
            diff = pts[j] - pts[i]
            length = float(np.linalg.norm(diff))
            normal = diff / length
            anchor = 0.5 * (pts[i] + pts[j])
            tol = 1e-12 * (1.0 + extent) ** 2
            if d == 1:
                probe = anchor[None, :]
            else:
                basis = null_space(normal[None, :])
                lattice = _probe_lattice(probes, d - 1, 1.5 * max(extent, length))
                probe = anchor + lattice @ basis.T
            sq = cdist(probe, pts, "sqeuclidean")
            own = sq[:, i]
            rest = np.delete(sq, [i, j], axis=1)
            if rest.shape[1] == 0:
                active = True
            else:
                active = bool(np.any(own <= rest.min(axis=1) + tol))
            faces.append(Face(i, j, anchor, normal, active))
    return faces


def face_segment(grid: Grid, i: int, j: int, box_lo, box_hi) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Endpoints of the closed planar face C̄_i ∩ C̄_j clipped to a box.

    The face is an interval of the median line cut by one linear constraint
    per remaining generator; returns ``None`` when it is empty.
    """
    if grid.dim != 2:
        raise UnsupportedBackendError("face_segment is planar only", details={"dim": grid.dim})
    pts = grid.points
    xi, xj = pts[i], pts[j]
    normal = (xj - xi) / np.linalg.norm(xj - xi)
    tangent = np.array([-normal[1], normal[0]])
    anchor = 0.5 * (xi + xj)
    t_lo, t_hi = -math.inf, math.inf

    def _cut(a: float, c: float):
        # keep t with a*t <= c
        nonlocal t_lo, t_hi
        if a > 0:
            t_hi = min(t_hi, c / a)
        elif a < 0:
            t_lo = max(t_lo, c / a)
        elif c < 0:
            t_hi, t_lo = -math.inf, math.inf

    for k in range(grid.level):
        if k in (i, j):
            continue
        delta = pts[k] - xi
        _cut(2.0 * float(tangent @ delta), float(pts[k] @ pts[k] - xi @ xi - 2.0 * anchor @ delta))
    for c in range(2):
        _cut(float(tangent[c]), float(box_hi[c] - anchor[c]))
        _cut(float(-tangent[c]), float(anchor[c] - box_lo[c]))

    scale = 1.0 + float(np.linalg.norm(anchor))
    if not (t_hi - t_lo > 1e-14 * scale):
        return None
    return anchor + t_lo * tangent, anchor + t_hi * tangent


__all__ = [
    "Grid",
    "Backend",
    "CellStats",
    "Face",
    "default_backend",
    "assign",
    "nearest_index",
    "cell_stats",
    "slice_intervals",
    "kink_heights",
    "gauss_legendre_panels",
    "min_pairwise_distance",
    "boundary_faces",
    "face_segment",
    "duplicate_pairs",
]
