"""Real and transported Monge-Ampère measures of PL convex functions.

For a PL convex F the real MA measure is atomic: the atoms sit at the
exposed points x_i of the graph and carry the volume of the subgradient
cell dF(x_i). The cells are read off the lower envelope of the lifted
slopes (the cells of F*). The transported measure reweights each cell by
the source density g.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.convex_core import PLConvexFunction, lower_hull_cells
from services.polytope import Density, Polytope, mass
from utils import settings
from utils.error_handling import ClassViolationError, InvalidInputError, UnsupportedError

logger = logging.getLogger("toricma")


@dataclass(frozen=True)
class DiscreteMeasure:
    """sum_i masses[i] * delta(points[i]).

    Exact duplicate points are merged (masses summed) in order of first
    appearance.
    """

    points: np.ndarray
    masses: np.ndarray
    probability: bool = True

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        wts = np.asarray(self.masses, dtype=float).reshape(-1)
        if pts.shape[0] != wts.size:
            raise InvalidInputError("atom points and masses differ in length")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(wts))):
            raise InvalidInputError("atoms must be finite")
        if np.any(wts <= 0):
            raise InvalidInputError("atom masses must be strictly positive", {"masses": wts.tolist()})

        if pts.shape[0]:
            unique, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
            merged = np.bincount(inverse.reshape(-1), weights=wts, minlength=unique.shape[0])
            order = np.argsort(first, kind="stable")
            if unique.shape[0] < pts.shape[0]:
                logger.info(f"merged {pts.shape[0] - unique.shape[0]} duplicate atoms")
            pts, wts = unique[order], merged[order]

        if self.probability:
            if pts.shape[0] == 0:
                raise InvalidInputError("a probability measure needs at least one atom")
            total = math.fsum(wts)
            if abs(total - 1.0) > settings.MASS_TOL_EXACT * max(1, pts.shape[0]):
                raise InvalidInputError("atom masses must sum to 1", {"total": total})
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", wts)

    @classmethod
    def delta(cls, point: Sequence[float]) -> "DiscreteMeasure":
        return cls(np.asarray(point, dtype=float).reshape(1, -1), np.array([1.0]))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiscreteMeasure":
        atoms = data.get("atoms") or []
        return cls(np.array([a["point"] for a in atoms], dtype=float), np.array([a["mass"] for a in atoms], dtype=float))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "atoms": [
                {"point": [float(v) for v in p], "mass": float(m)} for p, m in zip(self.points, self.masses)
            ]
        }

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def total(self) -> float:
        return math.fsum(self.masses)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        if self.size == 0:
            return 0.0
        return math.fsum(self.masses * f(self.points))

    def permuted(self, order: Sequence[int]) -> "DiscreteMeasure":
        idx = np.asarray(order, dtype=int)
        return DiscreteMeasure(self.points[idx], self.masses[idx], self.probability)


@dataclass(frozen=True)
class MAResult:
    """Atomic MA measure with the subgradient cell of each atom."""

    atoms: DiscreteMeasure
    cells: List[Polytope]

    def total_mass(self) -> float:
        return self.atoms.total()

    def to_dict(self) -> Dict[str, Any]:
        data = self.atoms.to_dict()
        data["cells"] = [c.vertices.tolist() for c in self.cells]
        return data


def _merge_close_slopes(slopes: np.ndarray, heights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Collapse slopes equal up to rounding, keeping the lowest height."""
    tol = 1e-10 * (1.0 + float(np.abs(slopes).max()))
    kept: List[np.ndarray] = []
    lowest: List[float] = []
    for s, h in zip(slopes, heights):
        for k, t in enumerate(kept):
            if float(np.abs(t - s).max()) <= tol:
                lowest[k] = min(lowest[k], float(h))
                break
        else:
            kept.append(s)
            lowest.append(float(h))
    return np.array(kept), np.array(lowest)


def _subgradient_cells(F: PLConvexFunction) -> List[tuple]:
    """(exposed point, cell) pairs, one per full-dimensional subgradient cell."""
    if F.dim > 2:
        raise UnsupportedError("MA measures of PL functions are implemented in dimensions 1 and 2")
    if F.n_pieces < 2:
        raise InvalidInputError("MA measure needs at least two distinct slopes")

    slopes = F.slopes
    centered = slopes - slopes.mean(axis=0)
    sing = np.linalg.svd(centered, compute_uv=False)
    if np.sum(sing > 1e-12 * max(1.0, float(sing[0]))) < F.dim:
        # slope hull is flat: every subgradient cell is Lebesgue-null
        return []

    slopes, heights = _merge_close_slopes(slopes, -F.intercepts)
    out = []
    for cell in lower_hull_cells(slopes, heights):
        verts = slopes[cell.vertex_ids]
        try:
            poly = Polytope.from_vertices(verts)
        except InvalidInputError:
            continue
        out.append((cell.gradient, poly))
    return out


def _ma_result(pairs: List[tuple], weights: List[float]) -> MAResult:
    keep = [i for i, w in enumerate(weights) if w > 0.0]
    dim = pairs[0][0].size if pairs else 1
    atoms = DiscreteMeasure(
        np.array([pairs[i][0] for i in keep]).reshape(-1, dim),
        np.array([weights[i] for i in keep]),
        probability=False,
    )
    # merged atoms keep the order of first appearance, so cells line up
    return MAResult(atoms, [pairs[i][1] for i in keep])


def ma_real_pl(F: PLConvexFunction) -> MAResult:
    """MA^R(F) = sum over exposed points x_i of |dF(x_i)| delta(x_i)."""
    pairs = _subgradient_cells(F)
    return _ma_result(pairs, [poly.volume() for _, poly in pairs])


def check_class_p(F: PLConvexFunction, P: Polytope) -> None:
    """Raise ClassViolationError unless every slope of F lies in P."""
    if F.dim != P.dim:
        raise InvalidInputError("function and polytope differ in dimension")
    tol = 1e-9 * (1.0 + float(np.abs(P.vertices).max()))
    violation = P.max_violation(F.slopes)
    if violation > tol:
        raise ClassViolationError(
            "slope hull of the function is not contained in the polytope",
            {"max_violation": violation},
        )


def ma_transported_pl(F: PLConvexFunction, g: Density, P: Polytope) -> MAResult:
    """MA_g(F): atoms of MA^R(F) reweighted by the g-mass of their cells."""
    check_class_p(F, P)
    pairs = _subgradient_cells(F)
    return _ma_result(pairs, [mass(poly, g) for _, poly in pairs])


# ---------------------------------------------------------------------------
# Pushforward verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(points, dtype=float))


def _monomial(exps: tuple) -> Callable[[np.ndarray], np.ndarray]:
    powers = np.asarray(exps)
    return lambda x: np.prod(x ** powers, axis=1)


def _hinge(a: np.ndarray, b: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.maximum(0.0, x @ a + b)


def test_function_battery(dim: int, seed: int = settings.DEFAULT_SEED, n_hinges: int = 8) -> List[TestFunction]:
    """Monomials of total degree <= 3 plus seeded hinges max(0, <a, x> + b)."""
    battery = []
    for exps in itertools.product(range(4), repeat=dim):
        if sum(exps) <= 3:
            name = "1" if sum(exps) == 0 else "*".join(f"x{k + 1}^{e}" for k, e in enumerate(exps) if e)
            battery.append(TestFunction(name, _monomial(exps)))
    rng = np.random.default_rng(seed)
    for k in range(n_hinges):
        a = rng.normal(size=dim)
        a /= np.linalg.norm(a)
        b = float(rng.uniform(-1.0, 1.0))
        battery.append(TestFunction(f"hinge{k}", _hinge(a, b)))
    return battery


# keep pytest from collecting the dataclass and factory above
TestFunction.__test__ = False
test_function_battery.__test__ = False


def pushforward_report(
    u: PLConvexFunction,
    g: Density,
    P: Polytope,
    mu: DiscreteMeasure,
    tests: Optional[Sequence[Any]] = None,
) -> Dict[str, float]:
    """Per test function: |int_P f(grad u*) g dp - sum_i a_i f(y_i)|."""
    if tests is None:
        tests = test_function_battery(P.dim)
    result = ma_transported_pl(u, g, P)
    report: Dict[str, float] = {}
    for k, f in enumerate(tests):
        name = getattr(f, "name", f"f{k}")
        lhs = result.atoms.integrate(f)
        rhs = mu.integrate(f)
        report[name] = abs(lhs - rhs)
    return report


def pushforward_residual(
    u: PLConvexFunction,
    g: Density,
    P: Polytope,
    mu: DiscreteMeasure,
    tests: Optional[Sequence[Any]] = None,
) -> float:
    """Max over the test functions of the pushforward discrepancy."""
    report = pushforward_report(u, g, P, mu, tests)
    return max(report.values()) if report else 0.0
