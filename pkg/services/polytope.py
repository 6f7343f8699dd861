"""Geometry of the moment polytope P.

Exact geometry lives in dimensions one and two (intervals and convex
polygons); higher-dimensional polytopes are boxes only and serve grid
operations. Densities g on P are uniform, low-degree polynomials or grid
samples, always normalized to integrate to one over P.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import optimize
from scipy.spatial import HalfspaceIntersection

from services.convex_core import PLConvexFunction, SampledFunction
from utils import settings
from utils.error_handling import InvalidInputError, NotCheckableError, UnsupportedError

logger = logging.getLogger("toricma")

Integrand = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Exact clipping kernel
# ---------------------------------------------------------------------------


def _cross(o: Sequence[Any], a: Sequence[Any], b: Sequence[Any]) -> Any:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(coords: Sequence[Sequence[Any]]) -> Any:
    """Signed shoelace area in the number type of the coordinates."""
    total = 0
    k = len(coords)
    for i in range(k):
        x0, y0 = coords[i]
        x1, y1 = coords[(i + 1) % k]
        total += x0 * y1 - x1 * y0
    return total / 2


def clip_polygon_exact(
    coords: Sequence[Tuple[Any, Any]],
    normal: Tuple[Any, Any],
    offset: Any,
    tol: Any = 0,
) -> List[Tuple[Any, Any]]:
    """Intersection of a convex CCW polygon with {<normal, p> <= offset}.

    Works on any number type; with Fractions and ``tol=0`` the result is
    exact. Returns [] when the intersection has no area.
    """
    out: List[Tuple[Any, Any]] = []
    k = len(coords)
    for i in range(k):
        cur, nxt = coords[i], coords[(i + 1) % k]
        dc = normal[0] * cur[0] + normal[1] * cur[1] - offset
        dn = normal[0] * nxt[0] + normal[1] * nxt[1] - offset
        if dc <= tol:
            out.append((cur[0], cur[1]))
        if (dc < -tol and dn > tol) or (dc > tol and dn < -tol):
            t = dc / (dc - dn)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))

    # merge duplicates and drop collinear vertices
    changed = True
    while changed and len(out) >= 3:
        changed = False
        for i in range(len(out)):
            prev, cur, nxt = out[i - 1], out[i], out[(i + 1) % len(out)]
            same = abs(cur[0] - prev[0]) <= tol and abs(cur[1] - prev[1]) <= tol
            if same or abs(_cross(prev, cur, nxt)) <= tol:
                del out[i]
                changed = True
                break
    if len(out) < 3 or polygon_area(out) <= tol:
        return []
    return out


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, CCW, collinear points removed."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)
    lower: List[Tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


# ---------------------------------------------------------------------------
# Polytope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polytope:
    """Bounded convex polytope with nonempty interior.

    ``vertices`` are CCW in 2D, (lo, hi) in 1D and the box corners in higher
    dimensions; ``normals``/``offsets`` give the halfspaces <normal, p> <= offset
    with unit outward normals.
    """

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    # -- constructors -------------------------------------------------------

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Polytope":
        if not hi > lo:
            raise InvalidInputError("interval needs hi > lo", {"lo": lo, "hi": hi})
        return cls(np.array([[lo], [hi]], dtype=float), np.array([[-1.0], [1.0]]), np.array([-lo, hi], dtype=float))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polytope":
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        if lo.size != hi.size or np.any(hi <= lo):
            raise InvalidInputError("box needs upper > lower on every axis")
        if lo.size == 1:
            return cls.interval(float(lo[0]), float(hi[0]))
        if lo.size == 2:
            return cls.polygon([(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])])
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(lo.size, -1).T
        eye = np.eye(lo.size)
        return cls(corners, np.vstack([-eye, eye]), np.concatenate([-lo, hi]))

    @classmethod
    def polygon(cls, ccw_vertices: Sequence[Sequence[float]]) -> "Polytope":
        """Polygon from vertices already in strictly convex CCW order."""
        verts = np.asarray(ccw_vertices, dtype=float).reshape(-1, 2)
        if verts.shape[0] < 3 or polygon_area([tuple(v) for v in verts]) <= settings.CLIP_TOL:
            raise InvalidInputError("polygon has no interior", {"vertices": verts.tolist()})
        edges = np.roll(verts, -1, axis=0) - verts
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return cls(verts, normals, np.einsum("ij,ij->i", normals, verts))

    @classmethod
    def from_vertices(cls, vertices: Sequence[Sequence[float]]) -> "Polytope":
        pts = np.asarray(vertices, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.size == 0 or not np.all(np.isfinite(pts)):
            raise InvalidInputError("polytope vertices must be finite and nonempty")
        dim = pts.shape[1]
        if dim == 1:
            return cls.interval(float(pts.min()), float(pts.max()))
        if dim == 2:
            return cls.polygon(convex_hull_2d(pts))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        corners = cls.box(lo, hi).vertices
        if len({tuple(p) for p in pts}) != corners.shape[0] or not all(
            np.any(np.all(np.isclose(pts, c), axis=1)) for c in corners
        ):
            raise UnsupportedError("polytopes in dimension >= 3 must be boxes")
        return cls.box(lo, hi)

    @classmethod
    def from_halfspaces(cls, normals: Sequence[Sequence[float]], offsets: Sequence[float]) -> "Polytope":
        a = np.asarray(normals, dtype=float)
        b = np.asarray(offsets, dtype=float).reshape(-1)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        if a.shape[0] != b.size:
            raise InvalidInputError("halfspace normals and offsets differ in length")
        center, radius = _chebyshev(a, b)
        if a.shape[1] == 1:
            lo = max((b[i] / a[i, 0] for i in range(b.size) if a[i, 0] < 0), default=-np.inf)
            hi = min((b[i] / a[i, 0] for i in range(b.size) if a[i, 0] > 0), default=np.inf)
            return cls.interval(float(lo), float(hi))
        hs = HalfspaceIntersection(np.column_stack([a, -b]), center)
        return cls.from_vertices(hs.intersections)

    # -- basic queries ------------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[1])

    @property
    def halfspaces(self) -> List[Tuple[np.ndarray, float]]:
        return [(n.copy(), float(c)) for n, c in zip(self.normals, self.offsets)]

    @property
    def lower(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    def contains(self, points: Any, tol: float = 1e-9) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all(pts @ self.normals.T - self.offsets <= tol, axis=1)

    def max_violation(self, points: Any) -> float:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return float(max(0.0, np.max(pts @ self.normals.T - self.offsets)))

    def volume(self) -> float:
        if self.dim == 2:
            return float(polygon_area([tuple(v) for v in self.vertices]))
        return float(np.prod(self.upper - self.lower))

    def centroid(self) -> np.ndarray:
        if self.dim != 2:
            return 0.5 * (self.lower + self.upper)
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        area = cross.sum() / 2.0
        return np.array([((v[:, 0] + w[:, 0]) * cross).sum(), ((v[:, 1] + w[:, 1]) * cross).sum()]) / (6.0 * area)

    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=-1)).max())

    def chebyshev_center(self) -> Tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball."""
        return _chebyshev(self.normals, self.offsets)

    def support(self, x: Any) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return (pts @ self.vertices.T).max(axis=1)

    def support_pl(self) -> PLConvexFunction:
        """phi_P as a PL convex function: one zero-intercept piece per vertex."""
        return PLConvexFunction(self.vertices, np.zeros(self.vertices.shape[0]))

    def triangles(self) -> List[np.ndarray]:
        if self.dim != 2:
            raise UnsupportedError("triangulation is only defined for polygons")
        v = self.vertices
        return [np.array([v[0], v[i], v[i + 1]]) for i in range(1, v.shape[0] - 1)]

    def scaled(self, factor: float, about: Optional[Sequence[float]] = None) -> "Polytope":
        """Homothety p -> c + factor (p - c)."""
        if factor <= 0:
            raise InvalidInputError("homothety factor must be positive")
        c = self.centroid() if about is None else np.asarray(about, dtype=float)
        verts = c + factor * (self.vertices - c)
        if self.dim == 2:
            return Polytope.polygon(verts)
        return Polytope.box(verts.min(axis=0), verts.max(axis=0))

    def translated(self, shift: Sequence[float]) -> "Polytope":
        s = np.asarray(shift, dtype=float).reshape(-1)
        return Polytope(self.vertices + s, self.normals.copy(), self.offsets + self.normals @ s)

    def to_dict(self) -> Dict[str, Any]:
        return {"vertices": self.vertices.tolist()}


def _chebyshev(normals: np.ndarray, offsets: np.ndarray) -> Tuple[np.ndarray, float]:
    n = normals.shape[1]
    norms = np.linalg.norm(normals, axis=1)
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    res = optimize.linprog(
        cost,
        A_ub=np.column_stack([normals, norms]),
        b_ub=offsets,
        bounds=[(None, None)] * n + [(0, None)],
        method="highs",
    )
    if res.status == 3:
        raise InvalidInputError("halfspaces describe an unbounded region")
    if res.status != 0 or res.x[-1] <= settings.CLIP_TOL:
        raise InvalidInputError("halfspaces describe a region with empty interior")
    return res.x[:n], float(res.x[-1])


def support_function(P: Polytope, x: Sequence[float]) -> float:
    """phi_P(x) = max over vertices of <x, v>."""
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != P.dim:
        raise InvalidInputError(f"point has dimension {point.size}, polytope has dimension {P.dim}")
    return float(P.support(point)[0])


def clip_halfplane(
    poly: Optional[Polytope], normal: Sequence[float], offset: float, tol: float = settings.CLIP_TOL
) -> Optional[Polytope]:
    """poly intersected with {<normal, p> <= offset}; None when empty."""
    if poly is None:
        return None
    a = np.asarray(normal, dtype=float).reshape(-1)
    if poly.dim == 1:
        lo, hi = float(poly.vertices[0, 0]), float(poly.vertices[1, 0])
        if a[0] > 0:
            hi = min(hi, offset / a[0])
        elif a[0] < 0:
            lo = max(lo, offset / a[0])
        elif offset < -tol:
            return None
        return Polytope.interval(lo, hi) if hi - lo > tol else None
    if poly.dim != 2:
        raise UnsupportedError("clipping is only implemented for intervals and polygons")
    coords = [tuple(v) for v in poly.vertices]
    clipped = clip_polygon_exact(coords, (a[0], a[1]), offset, tol)
    return Polytope.polygon(clipped) if clipped else None


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_S15 = math.sqrt(15.0)
_A1, _A2 = (6.0 - _S15) / 21.0, (6.0 + _S15) / 21.0
_W1, _W2 = (155.0 - _S15) / 1200.0, (155.0 + _S15) / 1200.0

# Degree-5 symmetric rule on the reference triangle, barycentric coordinates
TRIANGLE_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [_A1, _A1, 1.0 - 2.0 * _A1],
        [_A1, 1.0 - 2.0 * _A1, _A1],
        [1.0 - 2.0 * _A1, _A1, _A1],
        [_A2, _A2, 1.0 - 2.0 * _A2],
        [_A2, 1.0 - 2.0 * _A2, _A2],
        [1.0 - 2.0 * _A2, _A2, _A2],
    ]
)
TRIANGLE_WEIGHTS = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _ones(points: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[0])


def _split_triangle(tri: np.ndarray, levels: int) -> List[np.ndarray]:
    tris = [tri]
    for _ in range(levels):
        nxt = []
        for a, b, c in tris:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt.extend([np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]), np.array([ab, bc, ca])])
        tris = nxt
    return tris


def _triangle_integral(tri: np.ndarray, fn: Integrand) -> float:
    area = abs(float(_cross(tri[0], tri[1], tri[2]))) / 2.0
    pts = TRIANGLE_BARY @ tri
    return area * float(TRIANGLE_WEIGHTS @ fn(pts))


def _segment_integral(a: np.ndarray, b: np.ndarray, fn: Integrand) -> float:
    length = float(np.linalg.norm(b - a))
    t = 0.5 * (GAUSS_NODES + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return 0.5 * length * float(GAUSS_WEIGHTS @ fn(pts))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

DENSITY_KINDS = ("uniform", "polynomial", "grid")
MAX_POLY_DEGREE = 2


@dataclass(frozen=True)
class Density:
    """Probability density g on P with 1/C <= g <= C.

    Built through ``uniform``, ``polynomial`` or ``from_samples``; the raw
    function is rescaled so that it integrates to one over P.
    """

    polytope: Polytope
    kind: str = "uniform"
    coeffs: Tuple[Tuple[Tuple[int, ...], float], ...] = ()
    samples: Optional[SampledFunction] = None
    C: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in DENSITY_KINDS:
            raise InvalidInputError(f"unknown density kind {self.kind!r}")
        if self.kind == "polynomial":
            for exps, _ in self.coeffs:
                if len(exps) != self.polytope.dim or any(e < 0 for e in exps):
                    raise InvalidInputError("polynomial exponents do not match the dimension", {"exponents": list(exps)})
            if self.degree > MAX_POLY_DEGREE:
                raise InvalidInputError(f"polynomial densities are limited to total degree {MAX_POLY_DEGREE}")
        if self.kind == "grid":
            if self.samples is None or self.samples.dim != self.polytope.dim:
                raise InvalidInputError("grid density needs samples of the polytope's dimension")
            if self.polytope.dim > 2:
                raise UnsupportedError("grid densities are limited to dimensions 1 and 2")

        total = integrate(self.polytope, self)
        if not (np.isfinite(total) and total > 0):
            raise InvalidInputError("density does not have a positive finite integral over P", {"integral": total})
        object.__setattr__(self, "scale", self.scale / total)

        interior, boundary = _probe_points(self.polytope)
        inner_vals = self.values(interior)
        low = float(inner_vals.min())
        high = max(float(inner_vals.max()), float(self.values(boundary).max()))
        if not np.isfinite(high) or low <= 0:
            raise InvalidInputError(
                "density must be positive and bounded on P (singular sources are not supported)",
                {"min": low, "max": high},
            )
        needed = max(high, 1.0 / low, 1.0)
        if self.C is None:
            object.__setattr__(self, "C", needed)
        elif needed > self.C * (1.0 + 1e-12):
            raise InvalidInputError(
                f"density violates 1/C <= g <= C with C={self.C}",
                {"min": low, "max": high, "C": self.C},
            )

    @classmethod
    def uniform(cls, P: Polytope) -> "Density":
        return cls(P, "uniform")

    @classmethod
    def polynomial(cls, P: Polytope, coeffs: Dict[Tuple[int, ...], float], C: Optional[float] = None) -> "Density":
        items = tuple(sorted((tuple(int(e) for e in k), float(v)) for k, v in coeffs.items()))
        return cls(P, "polynomial", coeffs=items, C=C)

    @classmethod
    def from_samples(cls, P: Polytope, samples: SampledFunction, C: Optional[float] = None) -> "Density":
        return cls(P, "grid", samples=samples, C=C)

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @property
    def is_exact(self) -> bool:
        return self.kind != "grid"

    @property
    def degree(self) -> Optional[int]:
        if self.kind == "uniform":
            return 0
        if self.kind == "polynomial":
            return max((sum(e) for e, c in self.coeffs if c != 0.0), default=0)
        return None

    @property
    def mass_tol(self) -> float:
        return settings.MASS_TOL_EXACT if self.is_exact else settings.MASS_TOL_GRID

    def values(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if self.kind == "uniform":
            raw = np.ones(pts.shape[0])
        elif self.kind == "polynomial":
            raw = np.zeros(pts.shape[0])
            for exps, c in self.coeffs:
                raw += c * np.prod(pts ** np.asarray(exps), axis=1)
        else:
            raw = self.samples.interpolate(pts)
        return self.scale * raw

    def __call__(self, points: Any) -> np.ndarray:
        return self.values(points)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"type": self.kind, "C": self.C}
        if self.kind == "polynomial":
            data["coeffs"] = {",".join(map(str, e)): c * self.scale for e, c in self.coeffs}
        return data


def _probe_points(P: Polytope, per_axis: int = 41) -> Tuple[np.ndarray, np.ndarray]:
    """Interior probes (lower bound) and boundary probes (upper bound only).

    A density may vanish on a null part of the boundary, e.g. g(p) = 2p on [0, 1].
    """
    axes = [np.linspace(lo, hi, per_axis if P.dim <= 2 else 9) for lo, hi in zip(P.lower, P.upper)]
    mesh = np.column_stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")])
    margin = 1e-9 * max(P.diameter(), 1.0)
    interior = mesh[P.contains(mesh, tol=-margin)]
    return np.vstack([interior, P.centroid()[None, :]]), P.vertices


# ---------------------------------------------------------------------------
# Integration over cells
# ---------------------------------------------------------------------------


def _grid_levels(tri: np.ndarray, g: Density) -> int:
    edge = max(float(np.linalg.norm(tri[i] - tri[i - 1])) for i in range(3))
    h = float(g.samples.grid.spacing.min())
    return int(min(6, max(0, math.ceil(math.log2(max(edge / h, 1.0))))))


def integrate(poly: Optional[Polytope], g: Density, f: Optional[Integrand] = None) -> float:
    """Integral of f*g over a cell; exact for polynomial f*g up to degree 5."""
    if poly is None:
        return 0.0
    fn = f or _ones

    def integrand(pts: np.ndarray) -> np.ndarray:
        return fn(pts) * g.values(pts)

    if poly.dim == 1:
        a, b = float(poly.vertices[0, 0]), float(poly.vertices[1, 0])
        breaks = [a, b]
        if g.kind == "grid":
            nodes = g.samples.grid.axes[0]
            breaks = [a] + [float(x) for x in nodes if a < x < b] + [b]
        return math.fsum(
            _segment_integral(np.array([lo]), np.array([hi]), integrand) for lo, hi in zip(breaks[:-1], breaks[1:])
        )
    if poly.dim == 2:
        parts = []
        for tri in poly.triangles():
            subs = _split_triangle(tri, _grid_levels(tri, g)) if g.kind == "grid" else [tri]
            parts.extend(_triangle_integral(t, integrand) for t in subs)
        return math.fsum(parts)

    # boxes: tensor Gauss-Legendre
    lo, hi = poly.lower, poly.upper
    t = 0.5 * (GAUSS_NODES + 1.0)
    axes = [l + t * (h - l) for l, h in zip(lo, hi)]
    pts = np.column_stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")])
    wts = np.prod(np.array(np.meshgrid(*[GAUSS_WEIGHTS] * poly.dim, indexing="ij")).reshape(poly.dim, -1), axis=0)
    return float(np.prod(0.5 * (hi - lo)) * (wts @ integrand(pts)))


def mass(poly: Optional[Polytope], g: Density) -> float:
    """Integral of g over a cell; 0 for an empty cell."""
    return integrate(poly, g)


def edge_integral(a: Sequence[float], b: Sequence[float], g: Density, f: Optional[Integrand] = None) -> float:
    """Line integral of f*g along the segment [a, b]."""
    pa = np.asarray(a, dtype=float).reshape(-1)
    pb = np.asarray(b, dtype=float).reshape(-1)
    fn = f or _ones

    def integrand(pts: np.ndarray) -> np.ndarray:
        return fn(pts) * g.values(pts)

    pieces = 1
    if g.kind == "grid":
        pieces = max(1, int(math.ceil(np.linalg.norm(pb - pa) / float(g.samples.grid.spacing.min()))))
    ts = np.linspace(0.0, 1.0, pieces + 1)
    return math.fsum(
        _segment_integral(pa + s * (pb - pa), pa + e * (pb - pa), integrand) for s, e in zip(ts[:-1], ts[1:])
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


class SamplingStats(BaseModel):
    proposed: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def sample_with_stats(
    P: Polytope, g: Density, N: int, seed: int = settings.DEFAULT_SEED
) -> Tuple[np.ndarray, SamplingStats]:
    """Rejection sampling from the bounding box of P against the bound C.

    ``proposed`` counts every box draw and ``accepted`` every kept draw,
    including the surplus of the last batch.
    """
    if N < 1:
        raise InvalidInputError("sample size must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = P.lower, P.upper
    bound = float(g.C)
    accepted: List[np.ndarray] = []
    count = proposed = 0
    while count < N:
        batch = max(1024, 4 * (N - count))
        prop = lo + (hi - lo) * rng.random((batch, P.dim))
        proposed += batch
        prop = prop[P.contains(prop, tol=0.0)]
        keep = prop[rng.random(prop.shape[0]) * bound <= g.values(prop)]
        accepted.append(keep)
        count += keep.shape[0]
    stats = SamplingStats(proposed=proposed, accepted=count)
    logger.debug(
        f"rejection sampling kept {count} of {proposed} proposals",
        extra={"accepted": count, "proposed": proposed},
    )
    return np.vstack(accepted)[:N], stats


def sample(P: Polytope, g: Density, N: int, seed: int = settings.DEFAULT_SEED) -> np.ndarray:
    """N i.i.d. points with law g dp by rejection from the bounding box."""
    points, _ = sample_with_stats(P, g, N, seed)
    return points


# ---------------------------------------------------------------------------
# Delzant check
# ---------------------------------------------------------------------------


class DelzantVertex(BaseModel):
    vertex: List[float]
    normals: List[List[int]]
    determinant: int
    ok: bool


class DelzantReport(BaseModel):
    is_delzant: bool
    normals: List[List[int]] = Field(default_factory=list)
    vertices: List[DelzantVertex] = Field(default_factory=list)

    @property
    def failing_vertices(self) -> List[List[float]]:
        return [v.vertex for v in self.vertices if not v.ok]


def _primitive_direction(vec: np.ndarray, max_denominator: int = 1000) -> Tuple[int, int]:
    x, y = float(vec[0]), float(vec[1])
    if abs(x) <= 1e-12 * (abs(y) + 1.0):
        return (0, 1 if y > 0 else -1)
    if abs(y) <= 1e-12 * (abs(x) + 1.0):
        return (1 if x > 0 else -1, 0)
    ratio = Fraction(y / x).limit_denominator(max_denominator)
    if abs(float(ratio) - y / x) > 1e-10 * (1.0 + abs(y / x)):
        raise NotCheckableError("facet normal is not rational", {"normal": [x, y]})
    sign = 1 if x > 0 else -1
    return (sign * ratio.denominator, sign * ratio.numerator)


def delzant_check_2d(P: Polytope) -> DelzantReport:
    """Primitive integer facet normals forming a Z^2 basis at every vertex."""
    if P.dim != 2:
        raise UnsupportedError("the Delzant check is implemented for polygons")
    edges = np.roll(P.vertices, -1, axis=0) - P.vertices
    normals = []
    for e in edges:
        dx, dy = _primitive_direction(e)
        normals.append([dy, -dx])

    findings = []
    k = len(normals)
    for i in range(k):
        a, b = normals[i - 1], normals[i]
        det = a[0] * b[1] - a[1] * b[0]
        findings.append(
            DelzantVertex(vertex=P.vertices[i].tolist(), normals=[a, b], determinant=det, ok=abs(det) == 1)
        )
    return DelzantReport(is_delzant=all(f.ok for f in findings), normals=normals, vertices=findings)
