"""Dictionary between convex potentials on R^n and invariant Kähler data.

A torus-invariant potential on the open orbit is a convex function F of the
logarithmic coordinates x = log|z|; its gradient is the moment map, and F is
in class P (resp. P+) for the moment polytope exactly when F - phi_P is
bounded above (resp. bounded).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate as quadrature
from scipy.interpolate import CubicSpline

from services.convex_core import (
    PLConvexFunction,
    SampledFunction,
    SmoothConvexFunction,
    SubgradientSet,
    UniformGrid,
    grid_gradient,
    subgradient_pl,
    toric_log_sum_exp,
)
from services.polytope import Polytope
from utils import settings
from utils.error_handling import ClassViolationError, InvalidInputError, UnsupportedError

logger = logging.getLogger("toricma")

ConvexLike = Union[PLConvexFunction, SmoothConvexFunction, SampledFunction]


def potential_values(F: Any, points: np.ndarray) -> np.ndarray:
    if isinstance(F, ToricPotential):
        return F.values(points)
    if isinstance(F, SampledFunction):
        return F.interpolate(points)
    if isinstance(F, (PLConvexFunction, SmoothConvexFunction)):
        return F.values(points)
    return np.asarray(F(points), dtype=float)


def toric_reference_potential(P: Polytope) -> SmoothConvexFunction:
    """log sum_v exp<v, x>, the canonical smooth member of P+ for the polytope."""
    return toric_log_sum_exp(P.vertices)


@dataclass(frozen=True)
class ToricPotential:
    """F_v = F0 + v with a reference potential F0 and a sampled relative potential v."""

    F0: ConvexLike
    v: SampledFunction
    polytope: Polytope

    def __post_init__(self) -> None:
        if self.v.dim != self.polytope.dim:
            raise InvalidInputError("relative potential and polytope differ in dimension")

    @property
    def Fv(self) -> SampledFunction:
        nodes = self.v.grid.nodes()
        base = potential_values(self.F0, nodes).reshape(self.v.grid.shape)
        return SampledFunction(self.v.grid, base + self.v.values)

    def values(self, points: np.ndarray) -> np.ndarray:
        return potential_values(self.F0, points) + self.v.interpolate(points)

    def is_convex(self) -> bool:
        return self.Fv.is_discretely_convex()

    def in_class(self) -> "ClassMembership":
        return class_membership(self.Fv, self.polytope)


# ---------------------------------------------------------------------------
# Moment map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentValue:
    """grad F(x) + c, or the subgradient set when F is not differentiable at x."""

    value: Optional[np.ndarray]
    differentiable: bool
    subgradient: Optional[SubgradientSet] = None


def _sampled_gradient(F: SampledFunction, x: np.ndarray, step: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    fwd, bwd, cen = [], [], []
    fx = float(F.interpolate(x[None])[0])
    for k in range(F.dim):
        e = np.zeros(F.dim)
        e[k] = step[k]
        fp = float(F.interpolate((x + e)[None])[0])
        fm = float(F.interpolate((x - e)[None])[0])
        fwd.append((fp - fx) / step[k])
        bwd.append((fx - fm) / step[k])
        cen.append((fp - fm) / (2.0 * step[k]))
    return np.array(fwd), np.array(bwd), np.array(cen)


def moment_map(F: Any, x: Sequence[float], c: Optional[Sequence[float]] = None) -> MomentValue:
    point = np.asarray(x, dtype=float).reshape(-1)
    shift = np.zeros(point.size) if c is None else np.asarray(c, dtype=float).reshape(-1)
    if isinstance(F, PLConvexFunction):
        sub = subgradient_pl(F, point)
        if sub.is_singleton():
            return MomentValue(sub.points[0] + shift, True)
        return MomentValue(None, False, SubgradientSet(sub.points + shift))
    if isinstance(F, SmoothConvexFunction):
        return MomentValue(F.gradient(point[None])[0] + shift, True)
    if isinstance(F, SampledFunction):
        h = F.grid.spacing
        fwd, bwd, cen = _sampled_gradient(F, point, h)
        _, _, coarse = _sampled_gradient(F, point, 2.0 * h)
        if not np.all(np.isfinite(cen)):
            raise InvalidInputError("point is outside the sampled effective domain")
        if np.all(np.abs(cen - coarse) <= 10.0 * settings.CONV_TOL * (1.0 + np.abs(cen))):
            return MomentValue(cen + shift, True)
        corners = np.array(np.meshgrid(*zip(bwd, fwd), indexing="ij")).reshape(F.dim, -1).T
        return MomentValue(None, False, SubgradientSet(corners + shift))
    raise InvalidInputError(f"unsupported potential type {type(F).__name__}")


class MomentImageReport(BaseModel):
    passed: bool
    max_violation: float
    checked_nodes: int
    skipped_nodes: int


def _grid_gradients(F: Any, grid: UniformGrid) -> np.ndarray:
    """Gradients at differentiable grid nodes, shape (m, n)."""
    nodes = grid.nodes()
    if isinstance(F, PLConvexFunction):
        vals = F.piece_values(nodes)
        top = vals.max(axis=1)
        ties = (vals >= (top - settings.TIE_REL_TOL * (1.0 + np.abs(top)))[:, None]).sum(axis=1)
        return F.slopes[np.argmax(vals, axis=1)[ties == 1]]
    if isinstance(F, SmoothConvexFunction):
        return F.gradient(nodes)
    if isinstance(F, ToricPotential):
        F = F.Fv
    if isinstance(F, SampledFunction):
        grad = grid_gradient(F).reshape(-1, F.dim)
        return grad[np.all(np.isfinite(grad), axis=1)]
    raise InvalidInputError(f"unsupported potential type {type(F).__name__}")


def moment_image_check(F: Any, P: Polytope, grid: Optional[UniformGrid] = None) -> MomentImageReport:
    """Every gradient at a differentiable grid node lies in P (within the moment slack)."""
    if grid is None:
        if isinstance(F, SampledFunction):
            grid = F.grid
        else:
            grid = UniformGrid.centered(10.0 * P.diameter(), 41 if P.dim <= 2 else 11, P.dim)
    grads = _grid_gradients(F, grid)
    violation = P.max_violation(grads) if grads.size else 0.0
    return MomentImageReport(
        passed=violation <= settings.MOMENT_SLACK,
        max_violation=violation,
        checked_nodes=int(grads.shape[0]),
        skipped_nodes=int(grid.size - grads.shape[0]),
    )


# ---------------------------------------------------------------------------
# Class membership
# ---------------------------------------------------------------------------


class ClassMembership(BaseModel):
    """None means inconclusive: the running sup (inf) is still moving."""

    in_P: Optional[bool]
    in_P_plus: Optional[bool]
    radii: List[float] = Field(default_factory=list)
    sup_series: List[float] = Field(default_factory=list)
    inf_series: List[float] = Field(default_factory=list)


def _stabilized(series: List[float], tol: float) -> Optional[bool]:
    d1 = abs(series[1] - series[0])
    d2 = abs(series[2] - series[1])
    if d2 <= tol:
        return True
    if d2 >= 0.9 * d1 and d1 > tol:
        return False
    return None


def class_membership(
    F: Any,
    P: Polytope,
    radius: Optional[float] = None,
    tol: float = settings.SLOPE_TOL,
    counts: int = 81,
) -> ClassMembership:
    """Decide sup(F - phi_P) < inf and inf(F - phi_P) > -inf by grid doubling.

    Sampled functions are tested on nested windows R/4, R/2, R inside their grid.
    """
    if isinstance(F, ToricPotential):
        F = F.Fv
    if isinstance(F, SampledFunction):
        center = 0.5 * (F.grid.origin + F.grid.upper)
        half = float(np.min(F.grid.upper - center))
        radii = [half / 4.0, half / 2.0, half]
        nodes = F.grid.nodes()
        vals = F.values.reshape(-1)
        keep = np.isfinite(vals)
        nodes, vals = nodes[keep], vals[keep]
        dist = np.max(np.abs(nodes - center), axis=1)
        diff = vals - P.support(nodes)
        sups = [float(diff[dist <= r + 1e-12].max()) for r in radii]
        infs = [float(diff[dist <= r + 1e-12].min()) for r in radii]
    else:
        base = radius if radius is not None else 10.0 * P.diameter()
        radii = [base, 2.0 * base, 4.0 * base]
        per_axis = counts if P.dim <= 2 else 21
        sups, infs = [], []
        running_sup, running_inf = -np.inf, np.inf
        for r in radii:
            nodes = UniformGrid.centered(r, per_axis, P.dim).nodes()
            diff = potential_values(F, nodes) - P.support(nodes)
            running_sup = max(running_sup, float(diff.max()))
            running_inf = min(running_inf, float(diff.min()))
            sups.append(running_sup)
            infs.append(running_inf)

    in_p = _stabilized(sups, tol)
    in_plus = _stabilized(infs, tol) if in_p else in_p
    return ClassMembership(in_P=in_p, in_P_plus=in_plus, radii=radii, sup_series=sups, inf_series=infs)


# ---------------------------------------------------------------------------
# Real and complex Monge-Ampère masses in dimension one
# ---------------------------------------------------------------------------


def _second_derivative(F: Any) -> Tuple[Callable[[np.ndarray], np.ndarray], Callable[[float], float]]:
    """(F on a batch of abscissae, scalar F'') for a smooth 1D potential."""
    if isinstance(F, SmoothConvexFunction):
        if F.dim != 1:
            raise UnsupportedError("the factor check is implemented in dimension one")
        return (
            lambda xs: F.value_fn(np.asarray(xs, dtype=float).reshape(-1, 1)),
            lambda x: float(F.hessian_fn(np.array([[x]]))[0, 0, 0]),
        )
    if isinstance(F, SampledFunction):
        if F.dim != 1 or not np.all(F.finite_mask):
            raise InvalidInputError("the factor check takes a finite 1D sample")
        spline = CubicSpline(F.grid.axes[0], F.values)
        second = spline.derivative(2)
        return (lambda xs: spline(np.asarray(xs, dtype=float)), lambda x: float(second(x)))
    raise InvalidInputError(f"unsupported potential type {type(F).__name__}")


def real_ma_mass(F: Any, window: Tuple[float, float]) -> float:
    """|dF([a, b])| = F'(b) - F'(a) for a smooth convex 1D potential."""
    a, b = window
    if isinstance(F, SmoothConvexFunction):
        grads = F.gradient(np.array([[a], [b]]))[:, 0]
        return float(grads[1] - grads[0])
    if isinstance(F, PLConvexFunction):
        return float(subgradient_pl(F, [b]).points.max() - subgradient_pl(F, [a]).points.min())
    _, second = _second_derivative(F)
    value, _ = quadrature.quad(second, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(value)


class FactorCheck(BaseModel):
    ratio: float
    complex_side: float
    real_side: float
    passed: bool


def complex_real_factor_check(
    F: Any,
    P: Polytope,
    f: Optional[Callable[[float], float]] = None,
    window: Tuple[float, float] = (-20.0, 20.0),
    step: float = 1e-3,
    fiber_nodes: int = 64,
) -> FactorCheck:
    """Ratio of the fiber-integrated complex MA mass to the real MA mass, n = 1.

    In logarithmic coordinates z = exp(x + iy) the form 2i dd^c F is
    Laplacian(F) dx ^ dy; integrating over the angular fiber y in [0, 2pi)
    and multiplying by n!/(2pi)^n must reproduce int f F'' dx.

    F must lie in P_+ for P; potentials whose class test fails raise
    ClassViolationError.
    """
    if P.dim != 1:
        raise UnsupportedError("the factor check is implemented in dimension one")
    value, second = _second_derivative(F)
    test = f or (lambda x: 1.0)
    a, b = window

    probe = np.linspace(a, b, 401)
    if min(second(x) for x in probe) <= 0.0:
        raise InvalidInputError("potential is not strictly convex on the window")
    membership = class_membership(F, P)
    if membership.in_P_plus is False:
        raise ClassViolationError(
            "potential is not in P_+ for the polytope",
            {"sup_series": membership.sup_series, "inf_series": membership.inf_series},
        )

    angles = np.linspace(0.0, 2.0 * math.pi, fiber_nodes, endpoint=False)
    d_angle = 2.0 * math.pi / fiber_nodes

    def invariant(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        # torus-invariant: depends on the angle only through the broadcast
        return np.broadcast_to(value(xs)[:, None], (xs.size, ys.size))

    def fiber_laplacian(x: float) -> float:
        xs = np.array([x - step, x, x + step])
        row = invariant(xs, angles)
        shifted = invariant(xs[1:2], np.concatenate([angles - step, angles + step]))
        fxx = (row[2] - 2.0 * row[1] + row[0]) / step ** 2
        fyy = (shifted[0, :fiber_nodes] - 2.0 * row[1] + shifted[0, fiber_nodes:]) / step ** 2
        return float(np.sum(fxx + fyy) * d_angle)

    factor = math.factorial(1) / (2.0 * math.pi)
    complex_side, _ = quadrature.quad(
        lambda x: test(x) * fiber_laplacian(x), a, b, epsabs=1e-12, epsrel=1e-10, limit=200
    )
    complex_side *= factor
    real_side, _ = quadrature.quad(lambda x: test(x) * second(x), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
    ratio = complex_side / real_side
    logger.debug(f"factor check: complex={complex_side:.12g} real={real_side:.12g}")
    return FactorCheck(
        ratio=ratio,
        complex_side=complex_side,
        real_side=real_side,
        passed=abs(ratio - 1.0) <= settings.QUAD_TOL,
    )
