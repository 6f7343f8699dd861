"""Convex functions and their Legendre / subgradient calculus.

Three representations are used across the services:

* ``PLConvexFunction`` - finite max of affine pieces, the exact representation
  (solutions of the transport problem with atomic targets are of this form).
* ``SampledFunction`` - samples on a uniform rectangular grid, with ``inf``
  marking nodes outside the effective domain.
* ``SmoothConvexFunction`` - value / gradient / Hessian callables working on
  batches of points, used for toric potentials and smooth approximations.

Conjugates of PL functions are computed exactly from the lower convex
envelope of the lifted slopes; conjugates of samples are discrete
(factorized over axes); conjugates of smooth functions are numerical.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, optimize, special
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull, QhullError

from utils import settings
from utils.error_handling import InvalidInputError, UnsupportedError

logger = logging.getLogger("toricma")

MAX_EXACT_DIM = 3


def _as_points(x: Any, dim: int) -> np.ndarray:
    """Coerce a point or a batch of points to shape (N, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size == dim else arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidInputError(
            f"expected points of dimension {dim}, got shape {np.shape(x)}",
            {"expected_dim": dim},
        )
    return arr


def tie_tolerance(value: float) -> float:
    return settings.TIE_REL_TOL * (1.0 + abs(value))


# ---------------------------------------------------------------------------
# PL convex functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PLConvexFunction:
    """f(x) = max_i <slopes[i], x> + intercepts[i].

    Pieces with equal slopes are merged on construction (the larger intercept
    wins), so no two pieces are identical.
    """

    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self) -> None:
        slopes = np.asarray(self.slopes, dtype=float)
        if slopes.ndim == 1:
            slopes = slopes.reshape(-1, 1)
        intercepts = np.asarray(self.intercepts, dtype=float).reshape(-1)
        if slopes.ndim != 2 or slopes.shape[0] == 0 or slopes.shape[1] == 0:
            raise InvalidInputError("a PL convex function needs at least one piece")
        if slopes.shape[0] != intercepts.shape[0]:
            raise InvalidInputError(
                "slopes and intercepts differ in length",
                {"slopes": slopes.shape[0], "intercepts": intercepts.shape[0]},
            )
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(intercepts))):
            raise InvalidInputError("PL pieces must be finite")

        unique, inverse = np.unique(slopes, axis=0, return_inverse=True)
        merged = np.full(unique.shape[0], -np.inf)
        np.maximum.at(merged, inverse.reshape(-1), intercepts)
        object.__setattr__(self, "slopes", unique)
        object.__setattr__(self, "intercepts", merged)

    @classmethod
    def from_pieces(cls, pieces: Sequence[Tuple[Sequence[float], float]]) -> "PLConvexFunction":
        slopes = [np.atleast_1d(np.asarray(s, dtype=float)) for s, _ in pieces]
        return cls(np.vstack(slopes), np.array([c for _, c in pieces], dtype=float))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PLConvexFunction":
        dim = int(data["dim"])
        pieces = data.get("pieces") or []
        slopes = np.array([p["slope"] for p in pieces], dtype=float).reshape(-1, dim)
        intercepts = np.array([p["intercept"] for p in pieces], dtype=float)
        return cls(slopes, intercepts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "pieces": [
                {"slope": [float(v) for v in s], "intercept": float(c)}
                for s, c in zip(self.slopes, self.intercepts)
            ],
        }

    @property
    def dim(self) -> int:
        return int(self.slopes.shape[1])

    @property
    def n_pieces(self) -> int:
        return int(self.slopes.shape[0])

    def piece_values(self, x: Any) -> np.ndarray:
        pts = _as_points(x, self.dim)
        return pts @ self.slopes.T + self.intercepts

    def values(self, x: Any) -> np.ndarray:
        return self.piece_values(x).max(axis=1)

    def __call__(self, x: Any) -> Any:
        vals = self.values(x)
        return float(vals[0]) if np.ndim(x) <= 1 and vals.size == 1 else vals

    def active_pieces(self, x: Any) -> np.ndarray:
        """Indices of the pieces within the tie tolerance of the max at a point."""
        vals = self.piece_values(x)[0]
        top = vals.max()
        return np.flatnonzero(vals >= top - tie_tolerance(top))

    def is_differentiable_at(self, x: Any) -> bool:
        return self.active_pieces(x).size == 1

    def scaled(self, factor: float) -> "PLConvexFunction":
        return PLConvexFunction(self.slopes * factor, self.intercepts * factor)

    def shifted(self, constant: float) -> "PLConvexFunction":
        return PLConvexFunction(self.slopes, self.intercepts + constant)

    def with_piece(self, slope: Sequence[float], intercept: float) -> "PLConvexFunction":
        return PLConvexFunction(
            np.vstack([self.slopes, np.asarray(slope, dtype=float).reshape(1, -1)]),
            np.append(self.intercepts, intercept),
        )


def evaluate(f: PLConvexFunction, x: Sequence[float]) -> float:
    """Value of a PL convex function at a single point."""
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != f.dim:
        raise InvalidInputError(
            f"point has dimension {point.size}, function has dimension {f.dim}",
            {"point_dim": int(point.size), "function_dim": f.dim},
        )
    return float(f.values(point.reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# Lower convex envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HullCell:
    """A cell of a lower convex envelope: envelope(p) = <gradient, p> + offset
    on conv(points[vertex_ids])."""

    gradient: np.ndarray
    offset: float
    vertex_ids: np.ndarray


def _lower_chain(x: np.ndarray, h: np.ndarray) -> List[int]:
    order = np.argsort(x, kind="stable")
    chain: List[int] = []
    for i in order:
        while len(chain) >= 2:
            a, b = chain[-2], chain[-1]
            # drop b when it lies on or above the chord a -> i
            if (h[b] - h[a]) * (x[i] - x[a]) >= (h[i] - h[a]) * (x[b] - x[a]):
                chain.pop()
            else:
                break
        chain.append(int(i))
    return chain


def lower_hull_cells(points: np.ndarray, heights: np.ndarray) -> List[HullCell]:
    """Cells of the lower convex envelope of the lifted points (points[i], heights[i]).

    ``points`` must affinely span their space; in dimension one the envelope
    is built with a monotone chain, otherwise from Qhull facets whose outward
    normal points down, grouped by supporting plane.
    """
    pts = np.asarray(points, dtype=float)
    hts = np.asarray(heights, dtype=float).reshape(-1)
    n = pts.shape[1]

    if n == 1:
        x = pts[:, 0]
        chain = _lower_chain(x, hts)
        cells: List[HullCell] = []
        for a, b in zip(chain[:-1], chain[1:]):
            grad = (hts[b] - hts[a]) / (x[b] - x[a])
            if cells and abs(cells[-1].gradient[0] - grad) <= tie_tolerance(grad):
                prev = cells.pop()
                a = int(prev.vertex_ids[0])
                grad = (hts[b] - hts[a]) / (x[b] - x[a])
            cells.append(HullCell(np.array([grad]), float(hts[a] - grad * x[a]), np.array([a, b])))
        return cells

    spread = float(hts.max() - hts.min())
    apex = np.append(pts.mean(axis=0), hts.max() + spread + 1.0)
    lifted = np.vstack([np.column_stack([pts, hts]), apex])
    try:
        hull = ConvexHull(lifted)
    except QhullError as exc:
        raise InvalidInputError("slopes do not span their space", {"qhull": str(exc)}) from exc

    apex_id = lifted.shape[0] - 1
    scale = 1.0 + float(np.abs(hts).max()) + float(np.abs(pts).max())
    groups: List[Tuple[np.ndarray, float, set]] = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        if eq[n] > -1e-10:
            continue
        grad = -eq[:n] / eq[n]
        off = float(-eq[n + 1] / eq[n])
        for g_grad, g_off, ids in groups:
            if np.allclose(g_grad, grad, atol=1e-9 * scale) and abs(g_off - off) <= 1e-9 * scale:
                ids.update(int(v) for v in simplex if v != apex_id)
                break
        else:
            groups.append((grad, off, {int(v) for v in simplex if v != apex_id}))

    return [HullCell(grad, off, np.array(sorted(ids))) for grad, off, ids in groups]


# ---------------------------------------------------------------------------
# PL functions with polyhedral domain (conjugates of PL functions)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainPLFunction:
    """PL convex function finite on a polyhedron, +inf outside.

    The domain is {p : normals @ p <= offsets, eq_normals @ p == eq_offsets};
    ``generators`` are points whose convex hull is the domain.
    """

    pieces: PLConvexFunction
    normals: np.ndarray
    offsets: np.ndarray
    eq_normals: np.ndarray
    eq_offsets: np.ndarray
    generators: np.ndarray
    tol: float = 1e-9

    @property
    def dim(self) -> int:
        return self.pieces.dim

    def in_domain(self, p: Any) -> np.ndarray:
        pts = _as_points(p, self.dim)
        inside = np.ones(pts.shape[0], dtype=bool)
        if self.normals.size:
            inside &= np.all(pts @ self.normals.T - self.offsets <= self.tol, axis=1)
        if self.eq_normals.size:
            inside &= np.all(np.abs(pts @ self.eq_normals.T - self.eq_offsets) <= self.tol, axis=1)
        return inside

    def values(self, p: Any) -> np.ndarray:
        pts = _as_points(p, self.dim)
        vals = self.pieces.values(pts)
        vals[~self.in_domain(pts)] = np.inf
        return vals

    def __call__(self, p: Any) -> Any:
        vals = self.values(p)
        return float(vals[0]) if np.ndim(p) <= 1 and vals.size == 1 else vals

    def gradient(self, p: Sequence[float]) -> Optional[np.ndarray]:
        """Gradient at an interior point of a cell, None on cell boundaries."""
        point = np.asarray(p, dtype=float).reshape(1, -1)
        if not self.in_domain(point)[0]:
            return None
        active = self.pieces.active_pieces(point)
        return self.pieces.slopes[active[0]].copy() if active.size == 1 else None

    def conjugate(self) -> PLConvexFunction:
        """(f*)* where this function is f*: max_i <x, g_i> - f*(g_i) over generators."""
        return PLConvexFunction(self.generators, -self.values(self.generators))

    @classmethod
    def on_halfspaces(
        cls,
        pieces: PLConvexFunction,
        normals: np.ndarray,
        offsets: np.ndarray,
        generators: np.ndarray,
        tol: float = 1e-9,
    ) -> "DomainPLFunction":
        dim = pieces.dim
        return cls(
            pieces=pieces,
            normals=np.asarray(normals, dtype=float).reshape(-1, dim),
            offsets=np.asarray(offsets, dtype=float).reshape(-1),
            eq_normals=np.zeros((0, dim)),
            eq_offsets=np.zeros(0),
            generators=np.asarray(generators, dtype=float).reshape(-1, dim),
            tol=tol,
        )


def legendre_pl(f: PLConvexFunction) -> DomainPLFunction:
    """Exact conjugate f* of a PL convex function.

    f* is the lower convex envelope of the lifted points (slope_i, -intercept_i)
    on conv(slopes), +inf outside. Slopes spanning a lower-dimensional affine
    subspace are handled in coordinates of that subspace.
    """
    if f.dim > MAX_EXACT_DIM:
        raise UnsupportedError(f"exact PL conjugates are limited to dimension {MAX_EXACT_DIM}")

    slopes = f.slopes
    heights = -f.intercepts
    dim = f.dim
    scale = 1.0 + float(np.abs(slopes).max())
    tol = settings.LEGENDRE_TOL * scale

    if slopes.shape[0] == 1:
        pieces = PLConvexFunction(np.zeros((1, dim)), heights)
        return DomainPLFunction(
            pieces=pieces,
            normals=np.zeros((0, dim)),
            offsets=np.zeros(0),
            eq_normals=np.eye(dim),
            eq_offsets=slopes[0].copy(),
            generators=slopes.copy(),
            tol=tol,
        )

    origin = slopes.mean(axis=0)
    _, sing, vt = np.linalg.svd(slopes - origin)
    rank = int(np.sum(sing > 1e-12 * max(1.0, float(sing[0]))))
    basis = vt[:rank].T
    complement = vt[rank:]
    coords = (slopes - origin) @ basis

    cells = lower_hull_cells(coords, heights)
    amb_slopes = np.array([basis @ c.gradient for c in cells])
    amb_intercepts = np.array([c.offset - float((basis @ c.gradient) @ origin) for c in cells])

    if rank == 1:
        z = coords[:, 0]
        h_norm = np.array([[-1.0], [1.0]])
        h_off = np.array([-z.min(), z.max()])
    else:
        eqs = ConvexHull(coords).equations
        h_norm, h_off = eqs[:, :rank], -eqs[:, rank]
    normals = h_norm @ basis.T
    offsets = h_off + normals @ origin

    return DomainPLFunction(
        pieces=PLConvexFunction(amb_slopes, amb_intercepts),
        normals=normals,
        offsets=offsets,
        eq_normals=complement,
        eq_offsets=complement @ origin,
        generators=slopes.copy(),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Subgradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubgradientSet:
    """Convex polytope in slope space, given by a generating point set."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise InvalidInputError("a subgradient set is never empty")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def vertices(self) -> np.ndarray:
        pts = np.unique(self.points, axis=0)
        if pts.shape[0] <= 2:
            return pts
        if self.dim == 1:
            return np.array([[pts[:, 0].min()], [pts[:, 0].max()]])
        try:
            return pts[ConvexHull(pts).vertices]
        except QhullError:
            # Flat set: keep the two extreme points along its principal axis
            centered = pts - pts.mean(axis=0)
            axis = np.linalg.svd(centered)[2][0]
            proj = centered @ axis
            return pts[[int(np.argmin(proj)), int(np.argmax(proj))]]

    def is_singleton(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.points - self.points[0]) <= tol))

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.points, axis=1).max())

    def distance(self, p: Sequence[float]) -> float:
        """L1 distance from p to the set, by an LP over convex combinations."""
        target = np.asarray(p, dtype=float).reshape(-1)
        k, n = self.points.shape
        cost = np.concatenate([np.zeros(k), np.ones(2 * n)])
        a_eq = np.zeros((n + 1, k + 2 * n))
        a_eq[:n, :k] = self.points.T
        a_eq[:n, k:k + n] = np.eye(n)
        a_eq[:n, k + n:] = -np.eye(n)
        a_eq[n, :k] = 1.0
        b_eq = np.append(target, 1.0)
        res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        return float(res.fun) if res.status == 0 else np.inf

    def contains(self, p: Sequence[float], tol: float = 1e-9) -> bool:
        return self.distance(p) <= tol


def subgradient_pl(f: PLConvexFunction, x: Sequence[float]) -> SubgradientSet:
    """Subgradient of a PL convex function: hull of the active slopes."""
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != f.dim:
        raise InvalidInputError(
            f"point has dimension {point.size}, function has dimension {f.dim}",
        )
    return SubgradientSet(f.slopes[f.active_pieces(point)])


# ---------------------------------------------------------------------------
# Grids and sampled functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformGrid:
    origin: np.ndarray
    spacing: np.ndarray
    counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).reshape(-1)
        spacing = np.asarray(self.spacing, dtype=float).reshape(-1)
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (origin.size == spacing.size == len(counts)):
            raise InvalidInputError("grid origin, spacing and counts differ in dimension")
        if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise InvalidInputError("grid spacing must be positive on every axis")
        if any(c < 1 for c in counts):
            raise InvalidInputError("grid counts must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], counts: Any) -> "UniformGrid":
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        cnt = np.broadcast_to(np.asarray(counts, dtype=int), lo.shape)
        if np.any(cnt < 2) or np.any(hi <= lo):
            raise InvalidInputError("a grid box needs upper > lower and at least 2 nodes per axis")
        return cls(lo, (hi - lo) / (cnt - 1), tuple(int(c) for c in cnt))

    @classmethod
    def centered(cls, radius: float, counts: int, dim: int) -> "UniformGrid":
        return cls.box([-radius] * dim, [radius] * dim, [counts] * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.asarray(self.counts) - 1)

    @property
    def axes(self) -> List[np.ndarray]:
        return [o + h * np.arange(c) for o, h, c in zip(self.origin, self.spacing, self.counts)]

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.reshape(-1) for m in mesh])

    def contains(self, points: Any, tol: float = 1e-12) -> np.ndarray:
        pts = _as_points(points, self.dim)
        return np.all((pts >= self.origin - tol) & (pts <= self.upper + tol), axis=1)

    def padded(self, nodes: int) -> "UniformGrid":
        return UniformGrid(
            self.origin - nodes * self.spacing,
            self.spacing,
            tuple(c + 2 * nodes for c in self.counts),
        )

    def refined(self, factor: int) -> "UniformGrid":
        return UniformGrid(
            self.origin,
            self.spacing / factor,
            tuple((c - 1) * factor + 1 for c in self.counts),
        )


@dataclass(frozen=True)
class SampledFunction:
    """Samples on a uniform grid; ``inf`` marks nodes outside the effective domain.

    When ``convex`` is set, discrete midpoint convexity along every axis is
    verified on construction.
    """

    grid: UniformGrid
    values: np.ndarray
    convex: bool = False

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise InvalidInputError(
                "sample count does not match the grid",
                {"values": int(vals.size), "grid": self.grid.size},
            )
        if np.any(np.isnan(vals)) or np.any(vals == -np.inf):
            raise InvalidInputError("samples must be finite or +inf")
        object.__setattr__(self, "values", vals.reshape(self.grid.shape))
        if self.convex and not self.is_discretely_convex():
            raise InvalidInputError("samples tagged convex fail the discrete convexity check")

    @classmethod
    def from_callable(
        cls, grid: UniformGrid, fn: Callable[[np.ndarray], np.ndarray], convex: bool = False
    ) -> "SampledFunction":
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float), convex=convex)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def is_discretely_convex(self, tol: float = settings.CONVEX_TOL) -> bool:
        vals = self.values
        for axis in range(vals.ndim):
            if vals.shape[axis] < 3:
                continue
            v = np.moveaxis(vals, axis, 0)
            left, mid, right = v[:-2], v[1:-1], v[2:]
            ok = np.isfinite(left) & np.isfinite(mid) & np.isfinite(right)
            if not ok.any():
                continue
            second = (left - 2.0 * mid + right)[ok]
            if np.any(second < -tol * (1.0 + np.abs(mid[ok]))):
                return False
        return True

    def interpolate(self, points: Any) -> np.ndarray:
        """Multilinear interpolation; inf outside the window or the effective domain."""
        pts = _as_points(points, self.dim)
        interp = RegularGridInterpolator(
            self.grid.axes, self.values, method="linear", bounds_error=False, fill_value=np.inf
        )
        with np.errstate(invalid="ignore"):
            out = interp(pts)
        out[np.isnan(out)] = np.inf
        return out

    def cropped(self, grid: UniformGrid) -> "SampledFunction":
        """Restriction to a sub-grid sharing this grid's spacing."""
        start = np.rint((grid.origin - self.grid.origin) / self.grid.spacing).astype(int)
        if np.any(start < 0) or np.any(start + np.asarray(grid.counts) > np.asarray(self.grid.counts)):
            raise InvalidInputError("crop window lies outside the sample grid")
        index = tuple(slice(s, s + c) for s, c in zip(start, grid.counts))
        return SampledFunction(grid, self.values[index].copy(), convex=False)


def grid_gradient(s: SampledFunction) -> np.ndarray:
    """Central-difference gradient, shape grid.shape + (dim,); nan next to inf nodes."""
    with np.errstate(invalid="ignore"):
        parts = np.gradient(s.values, *s.grid.spacing)
    if s.dim == 1:
        parts = [parts]
    grad = np.stack(parts, axis=-1)
    grad[~np.isfinite(grad)] = np.nan
    return grad


# ---------------------------------------------------------------------------
# Discrete Legendre transforms
# ---------------------------------------------------------------------------


def _conjugate_1d(x: np.ndarray, f: np.ndarray, p: np.ndarray) -> np.ndarray:
    """max_i p*x_i - f_i, via the lower hull of the finite samples.

    Each dual slope is located among the sorted hull slopes by binary search,
    so a row costs O((n + m) log n).
    """
    finite = np.isfinite(f)
    if not finite.any():
        return np.full(p.shape, -np.inf)
    xs, fs = x[finite], f[finite]
    chain = _lower_chain(xs, fs)
    hx, hf = xs[chain], fs[chain]
    if hx.size == 1:
        return p * hx[0] - hf[0]
    slopes = np.diff(hf) / np.diff(hx)
    idx = np.searchsorted(slopes, p, side="left")
    return p * hx[idx] - hf[idx]


def _conjugate_along_axis(values: np.ndarray, x: np.ndarray, p: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, -1)
    rows = moved.reshape(-1, moved.shape[-1])
    out = np.empty((rows.shape[0], p.size))
    for r in range(rows.shape[0]):
        out[r] = _conjugate_1d(x, rows[r], p)
    return np.moveaxis(out.reshape(moved.shape[:-1] + (p.size,)), -1, axis)


def _discrete_conjugate(values: np.ndarray, grid: UniformGrid, dual: UniformGrid) -> np.ndarray:
    """max over finite nodes x of <p, x> - f(x) at every dual node, factorized over axes."""
    work = values
    for axis in range(grid.dim - 1, -1, -1):
        work = -_conjugate_along_axis(work, grid.axes[axis], dual.axes[axis], axis)
    return -work


def default_dual_grid(s: SampledFunction, inflation: float = settings.DUAL_GRID_INFLATION) -> UniformGrid:
    """Box spanning the range of finite forward differences, inflated on each side."""
    lower, upper = [], []
    for axis in range(s.dim):
        with np.errstate(invalid="ignore"):
            diffs = np.diff(s.values, axis=axis) / s.grid.spacing[axis]
        diffs = diffs[np.isfinite(diffs)]
        if diffs.size == 0:
            raise InvalidInputError("samples have no finite differences along an axis")
        lo, hi = float(diffs.min()), float(diffs.max())
        pad = inflation * max(hi - lo, 1e-12)
        lower.append(lo - pad)
        upper.append(hi + pad)
    return UniformGrid.box(lower, upper, [max(c, 2) for c in s.grid.counts])


def legendre_grid(
    s: SampledFunction,
    dual: Optional[UniformGrid] = None,
    outside: str = "inf",
    margin: int = 1,
) -> SampledFunction:
    """Discrete conjugate of convex samples on a dual grid.

    Agrees with the brute-force sup over all grid nodes. With ``outside="inf"``
    dual nodes whose sup still grows when the primal window is enlarged (the
    value over the window exceeds the value over the window minus ``margin``
    boundary nodes) are set to +inf.
    """
    if not s.is_discretely_convex():
        raise InvalidInputError("legendre_grid needs convex samples; the discrete conjugate would convexify")
    if outside not in ("inf", "extend"):
        raise InvalidInputError(f"unknown outside policy {outside!r}")
    if dual is None:
        dual = default_dual_grid(s)
    if dual.dim != s.dim:
        raise InvalidInputError("dual grid dimension differs from the samples")

    values = _discrete_conjugate(s.values, s.grid, dual)
    if outside == "inf" and all(c > 2 * margin for c in s.grid.counts):
        inner = np.full(s.values.shape, np.inf)
        core = tuple(slice(margin, c - margin) for c in s.grid.counts)
        inner[core] = s.values[core]
        inner_vals = _discrete_conjugate(inner, s.grid, dual)
        with np.errstate(invalid="ignore"):
            grows = values - inner_vals > settings.LEGENDRE_TOL * (1.0 + np.abs(values))
        values = np.where(grows | ~np.isfinite(inner_vals), np.inf, values)
    return SampledFunction(dual, values)


def llt_1d(
    s: SampledFunction,
    dual: Optional[UniformGrid] = None,
    outside: str = "inf",
) -> SampledFunction:
    """Sorted-slope Legendre transform of 1D convex samples.

    Exact for the conjugate of the piecewise-linear interpolant. The lower
    hull is built in one pass; dual nodes are then placed among its sorted
    edge slopes by binary search, O((n + m) log n) overall. With
    ``outside="inf"`` a second transform over the inner window flags dual
    nodes whose value depends on the window edge.
    """
    if s.dim != 1:
        raise InvalidInputError("llt_1d takes one-dimensional samples")
    finite = np.flatnonzero(s.finite_mask)
    if finite.size == 0:
        raise InvalidInputError("samples have an empty effective domain")
    if finite[-1] - finite[0] + 1 != finite.size:
        raise InvalidInputError("effective domain of 1D samples must be an interval")
    return legendre_grid(s, dual=dual, outside=outside)


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------


def _bump_kernel(spacing: np.ndarray, eps: float) -> np.ndarray:
    radius = np.floor(eps / spacing + 1e-12).astype(int)
    offsets = np.meshgrid(*[np.arange(-r, r + 1) * h for r, h in zip(radius, spacing)], indexing="ij")
    u2 = sum(o ** 2 for o in offsets) / eps ** 2
    kernel = np.zeros(u2.shape)
    inside = u2 < 1.0
    kernel[inside] = np.exp(-1.0 / (1.0 - u2[inside]))
    total = kernel.sum()
    if total <= 0.0:
        kernel = np.zeros(u2.shape)
        kernel[tuple(r for r in radius)] = 1.0
        return kernel
    return kernel / total


def mollify(s: SampledFunction, eps: float) -> SampledFunction:
    """Convolution with the standard bump mollifier of radius eps.

    The result lives on the eroded domain {x : dist(x, boundary) > eps}; nodes
    whose stencil touches +inf samples or leaves the window become +inf.
    """
    if eps <= 0:
        raise InvalidInputError("mollifier radius must be positive")
    kernel = _bump_kernel(s.grid.spacing, eps)
    finite = s.finite_mask
    base = np.where(finite, s.values, 0.0)
    smoothed = ndimage.correlate(base, kernel, mode="constant", cval=0.0)
    footprint = kernel > 0
    valid = ndimage.binary_erosion(finite, structure=footprint, border_value=0)
    if not valid.any():
        raise InvalidInputError(
            f"mollifier radius {eps} is too large for the sampled domain",
            {"eps": eps},
        )
    return SampledFunction(s.grid, np.where(valid, smoothed, np.inf), convex=s.convex)


# ---------------------------------------------------------------------------
# Smooth convex functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothConvexFunction:
    """Smooth convex function given by batched value/gradient/Hessian callables."""

    dim: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    hessian_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "smooth"

    def values(self, x: Any) -> np.ndarray:
        return self.value_fn(_as_points(x, self.dim))

    def gradient(self, x: Any) -> np.ndarray:
        return self.gradient_fn(_as_points(x, self.dim))

    def hessian(self, x: Any) -> np.ndarray:
        return self.hessian_fn(_as_points(x, self.dim))

    def __call__(self, x: Any) -> Any:
        vals = self.values(x)
        return float(vals[0]) if np.ndim(x) <= 1 and vals.size == 1 else vals

    def plus(self, other: "SmoothConvexFunction", weight: float = 1.0) -> "SmoothConvexFunction":
        if other.dim != self.dim:
            raise InvalidInputError("cannot add smooth functions of different dimension")
        return SmoothConvexFunction(
            self.dim,
            lambda x: self.value_fn(x) + weight * other.value_fn(x),
            lambda x: self.gradient_fn(x) + weight * other.gradient_fn(x),
            lambda x: self.hessian_fn(x) + weight * other.hessian_fn(x),
            name=f"{self.name}+{weight:g}*{other.name}",
        )

    def shifted(self, constant: float) -> "SmoothConvexFunction":
        if constant == 0.0:
            return self
        return SmoothConvexFunction(
            self.dim,
            lambda x: self.value_fn(x) + constant,
            self.gradient_fn,
            self.hessian_fn,
            name=f"{self.name}{constant:+g}",
        )


def softplus() -> SmoothConvexFunction:
    """log(1 + e^x) in one dimension; gradient range (0, 1)."""

    def hess(x: np.ndarray) -> np.ndarray:
        s = special.expit(x[:, 0])
        return (s * (1.0 - s)).reshape(-1, 1, 1)

    return SmoothConvexFunction(
        1,
        lambda x: np.logaddexp(0.0, x[:, 0]),
        lambda x: special.expit(x),
        hess,
        name="softplus",
    )


def quadratic(dim: int) -> SmoothConvexFunction:
    return SmoothConvexFunction(
        dim,
        lambda x: 0.5 * np.sum(x * x, axis=1),
        lambda x: x.copy(),
        lambda x: np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy(),
        name="quadratic",
    )


def sqrt_tilt(dim: int) -> SmoothConvexFunction:
    """sqrt(1 + |x|^2): strictly convex with gradient inside the unit ball."""

    def value(x: np.ndarray) -> np.ndarray:
        return np.sqrt(1.0 + np.sum(x * x, axis=1))

    def hess(x: np.ndarray) -> np.ndarray:
        s = value(x)
        outer = np.einsum("ni,nj->nij", x, x)
        return (np.eye(dim)[None] - outer / (s ** 2)[:, None, None]) / s[:, None, None]

    return SmoothConvexFunction(dim, value, lambda x: x / value(x)[:, None], hess, name="sqrt_tilt")


def log_sum_exp(slopes: np.ndarray, intercepts: np.ndarray, eps: float = 1.0) -> SmoothConvexFunction:
    """eps * log sum_i exp((<a_i, x> + b_i) / eps).

    Lies between max_i(<a_i,x> + b_i) and that max plus eps*log(m); the gradient
    is a convex combination of the slopes.
    """
    a = np.asarray(slopes, dtype=float)
    b = np.asarray(intercepts, dtype=float).reshape(-1)
    if eps <= 0:
        raise InvalidInputError("smoothing scale must be positive")

    def weights(x: np.ndarray) -> np.ndarray:
        return special.softmax((x @ a.T + b) / eps, axis=1)

    def hess(x: np.ndarray) -> np.ndarray:
        lam = weights(x)
        mean = lam @ a
        second = np.einsum("nk,ki,kj->nij", lam, a, a)
        return (second - np.einsum("ni,nj->nij", mean, mean)) / eps

    return SmoothConvexFunction(
        a.shape[1],
        lambda x: eps * special.logsumexp((x @ a.T + b) / eps, axis=1),
        lambda x: weights(x) @ a,
        hess,
        name=f"lse[eps={eps:g}]",
    )


def softmax_smoothing(f: PLConvexFunction, eps: float) -> SmoothConvexFunction:
    return log_sum_exp(f.slopes, f.intercepts, eps)


def toric_log_sum_exp(vertices: np.ndarray) -> SmoothConvexFunction:
    """log sum_v exp<v, x>: smooth, strictly convex on the span, gradient image int conv(vertices)."""
    verts = np.asarray(vertices, dtype=float)
    pot = log_sum_exp(verts, np.zeros(verts.shape[0]), 1.0)
    return SmoothConvexFunction(pot.dim, pot.value_fn, pot.gradient_fn, pot.hessian_fn, name="toric_lse")


def legendre_smooth(
    F: SmoothConvexFunction,
    points: Any,
    x0: Optional[np.ndarray] = None,
    gtol: float = 1e-12,
    max_iter: int = 200,
) -> Tuple[np.ndarray, np.ndarray]:
    """Numerical conjugate F*(p) = -min_x F(x) - <x, p>, one trust-region solve per point.

    Returns (values, maximizers); the maximizer is grad F*(p). Points where the
    minimization diverges (p outside the gradient range) get value +inf.
    """
    pts = _as_points(points, F.dim)
    starts = np.zeros_like(pts) if x0 is None else _as_points(x0, F.dim)
    values = np.empty(pts.shape[0])
    argmax = np.empty_like(pts)
    for i, p in enumerate(pts):
        res = optimize.minimize(
            lambda x: float(F.value_fn(x[None])[0] - x @ p),
            starts[i],
            jac=lambda x: F.gradient_fn(x[None])[0] - p,
            hess=lambda x: F.hessian_fn(x[None])[0],
            method="trust-exact",
            options={"gtol": gtol, "maxiter": max_iter},
        )
        residual = float(np.linalg.norm(res.jac)) if np.all(np.isfinite(res.jac)) else np.inf
        if not np.all(np.isfinite(res.x)) or np.linalg.norm(res.x) > 1e8 or residual > 1e-6 * (1.0 + float(np.linalg.norm(p))):
            # no stationary point: p lies outside the gradient range
            values[i] = np.inf
            argmax[i] = np.nan
            continue
        if not res.success and residual > math.sqrt(gtol):
            logger.debug(f"conjugate solve stalled at p={p.tolist()}: {res.message}")
        values[i] = -res.fun
        argmax[i] = res.x
    return values, argmax


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def biconjugate_check(f: PLConvexFunction, grid: Optional[UniformGrid] = None) -> float:
    """sup over a test grid of |f - (f*)*|."""
    if grid is None:
        radius = 2.0 * (1.0 + float(np.abs(f.intercepts).max()))
        grid = UniformGrid.centered(radius, 41 if f.dim <= 2 else 17, f.dim)
    nodes = grid.nodes()
    fss = legendre_pl(f).conjugate()
    return float(np.max(np.abs(f.values(nodes) - fss.values(nodes))))
