"""Property harness for decreasing approximations and their conjugates.

A class-P function F is approximated by a decreasing sequence F_n of smooth
strictly convex functions; the checks here measure how the conjugates F_n*
and their gradients approach F* on compact sets inside P, how the gradients
stay bounded, and how the graphs of the gradient maps converge.

Conjugates of smooth members are computed numerically point by point, PL
limits exactly, sampled members by the discrete transform on a dual grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.interpolate import RegularGridInterpolator

from services.convex_core import (
    DomainPLFunction,
    PLConvexFunction,
    SampledFunction,
    SmoothConvexFunction,
    SubgradientSet,
    UniformGrid,
    grid_gradient,
    legendre_grid,
    legendre_pl,
    legendre_smooth,
    mollify,
    softmax_smoothing,
    sqrt_tilt,
)
from services.ma_measure import DiscreteMeasure, check_class_p, test_function_battery
from services.polytope import GAUSS_NODES, GAUSS_WEIGHTS, TRIANGLE_BARY, TRIANGLE_WEIGHTS, Density, Polytope
from services.toric_bridge import class_membership, potential_values
from utils import settings
from utils.error_handling import ClassViolationError, InvalidInputError

logger = logging.getLogger("toricma")

ONE_SIDED_SLACK = 1e-9
MAX_DUAL_NODES = 201


class PropertyResult(BaseModel):
    name: str
    passed: bool
    worst_case: float
    series: List[float] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)


class ConvergenceReport(BaseModel):
    suite: str
    passed: bool
    schedule: List[float] = Field(default_factory=list)
    properties: List[PropertyResult] = Field(default_factory=list)

    @classmethod
    def from_properties(cls, suite: str, schedule: Sequence[float], props: List[PropertyResult]) -> "ConvergenceReport":
        return cls(suite=suite, passed=all(p.passed for p in props), schedule=list(schedule), properties=props)

    def property(self, name: str) -> PropertyResult:
        for p in self.properties:
            if p.name == name:
                return p
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApproxSequence:
    """F_1 >= F_2 >= ... >= F, smooth and strictly convex, for a class-P base F.

    ``kind`` is "pl", "smooth" or "sampled"; sampled members share the base grid.
    """

    base: Any
    polytope: Polytope
    schedule: np.ndarray
    members: List[Any]
    kind: str
    grid: UniformGrid
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.members)

    def member_values(self, n: int, points: np.ndarray) -> np.ndarray:
        return potential_values(self.members[n], points)

    def base_values(self, points: np.ndarray) -> np.ndarray:
        return potential_values(self.base, points)

    def monotonicity_gaps(self) -> List[float]:
        """min over the grid of F_n - F_{n+1}, then of F_N - F (all >= 0 when decreasing)."""
        nodes = self.grid.nodes()
        vals = [self.member_values(n, nodes) for n in range(len(self))] + [self.base_values(nodes)]
        gaps = []
        for upper, lower in zip(vals[:-1], vals[1:]):
            both = np.isfinite(upper) & np.isfinite(lower)
            gaps.append(float((upper - lower)[both].min()) if both.any() else 0.0)
        return gaps


def _check_schedule(schedule: Sequence[float]) -> np.ndarray:
    eps = np.asarray(schedule, dtype=float).reshape(-1)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise InvalidInputError("schedule must be positive and strictly decreasing", {"schedule": eps.tolist()})
    return eps


def make_decreasing_sequence(
    F: Any,
    P: Polytope,
    schedule: Sequence[float],
    grid: Optional[UniformGrid] = None,
) -> ApproxSequence:
    """Decreasing smooth strictly convex approximations of a class-P function.

    PL bases use softmax smoothing eps*LSE plus eps^2 * sqrt(1 + |x|^2);
    smooth bases add eps * sqrt(1 + |x|^2); sampled bases are mollified,
    tilted by eps * sqrt(1 + |x|^2) and lifted by constants c_n so that the
    samples decrease.
    """
    eps = _check_schedule(schedule)
    tilt = sqrt_tilt(P.dim)
    if grid is None and not isinstance(F, SampledFunction):
        grid = UniformGrid.centered(2.0 * (1.0 + P.diameter()), 41 if P.dim == 1 else 21, P.dim)

    if isinstance(F, PLConvexFunction):
        check_class_p(F, P)
        members = [softmax_smoothing(F, e).plus(tilt, e * e) for e in eps]
        return ApproxSequence(F, P, eps, members, "pl", grid)

    if isinstance(F, SmoothConvexFunction):
        verdict = class_membership(F, P)
        if verdict.in_P is False:
            raise ClassViolationError("base function is not in class P", {"sup_series": verdict.sup_series})
        members = [F.plus(tilt, e) for e in eps]
        return ApproxSequence(F, P, eps, members, "smooth", grid)

    if isinstance(F, SampledFunction):
        if not F.is_discretely_convex():
            raise InvalidInputError("sampled base must be convex")
        verdict = class_membership(F, P)
        if verdict.in_P is False:
            raise ClassViolationError("base samples are not in class P", {"sup_series": verdict.sup_series})
        nodes = F.grid.nodes()
        tilt_vals = tilt.values(nodes).reshape(F.grid.shape)
        raw = [mollify(F, e).values + e * tilt_vals for e in eps]
        lifted: List[np.ndarray] = [None] * eps.size  # type: ignore[list-item]
        offsets = np.zeros(eps.size)
        below = F.values
        for n in range(eps.size - 1, -1, -1):
            both = np.isfinite(raw[n]) & np.isfinite(below)
            deficit = float((below - raw[n])[both].max()) if both.any() else 0.0
            offsets[n] = max(0.0, deficit)
            lifted[n] = raw[n] + offsets[n]
            below = lifted[n]
        members = [SampledFunction(F.grid, v) for v in lifted]
        return ApproxSequence(F, P, eps, members, "sampled", F.grid, offsets)

    raise InvalidInputError(f"unsupported base type {type(F).__name__}")


def lipschitz_audit(seq: ApproxSequence) -> PropertyResult:
    """Member gradients stay within max|vertex of P| + eps_1 on the grid."""
    eps1 = float(seq.schedule[0])
    bound = float(np.linalg.norm(seq.polytope.vertices, axis=1).max()) + max(eps1, eps1 * eps1)
    series = []
    for member in seq.members:
        if isinstance(member, SampledFunction):
            grads = grid_gradient(member).reshape(-1, seq.grid.dim)
            grads = grads[np.all(np.isfinite(grads), axis=1)]
        else:
            grads = member.gradient(seq.grid.nodes())
        series.append(float(np.linalg.norm(grads, axis=1).max()) if grads.size else 0.0)
    worst = max(series)
    return PropertyResult(
        name="uniform_lipschitz",
        passed=worst <= bound + ONE_SIDED_SLACK,
        worst_case=worst,
        series=series,
        details={"bound": bound},
    )


# ---------------------------------------------------------------------------
# Gradients and conjugates on point sets
# ---------------------------------------------------------------------------


def stable_gradient_nodes(
    value_fn: Callable[[np.ndarray], np.ndarray],
    nodes: np.ndarray,
    step: float,
    tol: Optional[float] = None,
    one_sided: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences at steps h, h/2, h/4; a node is stable when all three agree.

    With ``one_sided`` the forward/backward mismatch must also shrink with h,
    which rejects kinks sitting exactly on a node. Returns (mask, gradient at
    the finest step).
    """
    tol = 10.0 * settings.CONV_TOL if tol is None else tol
    n = nodes.shape[1]
    center = value_fn(nodes)
    estimates, mismatch = [], []
    for h in (step, step / 2.0, step / 4.0):
        grad = np.empty_like(nodes)
        jump = np.zeros(nodes.shape[0])
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            up, down = value_fn(nodes + e), value_fn(nodes - e)
            with np.errstate(invalid="ignore"):
                grad[:, k] = (up - down) / (2.0 * h)
                jump = np.maximum(jump, np.abs(up - 2.0 * center + down) / h)
        estimates.append(grad)
        mismatch.append(jump)
    finest = estimates[-1]
    scale = tol * (1.0 + np.abs(finest).max(axis=1))
    with np.errstate(invalid="ignore"):
        agree = np.ones(nodes.shape[0], dtype=bool)
        for a, b in ((estimates[0], estimates[1]), (estimates[1], estimates[2])):
            agree &= np.all(np.abs(a - b) <= tol * (1.0 + np.abs(finest)), axis=1)
        if one_sided:
            agree &= mismatch[-1] <= 0.5 * mismatch[0] + scale
    agree &= np.all(np.isfinite(finest), axis=1)
    return agree, finest


def _require_interior(K: Polytope, P: Polytope, margin: float = 0.0) -> None:
    slack = P.offsets[None, :] - K.vertices @ P.normals.T
    if float(slack.min()) <= max(margin, 1e-12):
        raise InvalidInputError(
            "compact set touches the boundary of P",
            {"min_distance": float(slack.min()), "required": margin},
        )


def _compact_nodes(K: Polytope, per_axis: int) -> np.ndarray:
    grid = UniformGrid.box(K.lower, K.upper, per_axis)
    nodes = grid.nodes()
    return nodes[K.contains(nodes, tol=1e-12)]


@dataclass
class _Conjugates:
    """Conjugate values/gradients of a sequence's base and members at fixed dual points."""

    seq: ApproxSequence
    points: np.ndarray
    step: float
    _dual: Optional[UniformGrid] = None

    def _sampled(self, F: SampledFunction) -> Tuple[np.ndarray, np.ndarray, SampledFunction]:
        if self._dual is None:
            span = self.points.max(axis=0) - self.points.min(axis=0)
            spacing = max(self.step, float(span.max()) / (MAX_DUAL_NODES - 9))
            lo = self.points.min(axis=0) - 4.0 * spacing
            hi = self.points.max(axis=0) + 4.0 * spacing
            counts = np.ceil((hi - lo) / spacing).astype(int) + 1
            self._dual = UniformGrid.box(lo, hi, counts)
        conj = legendre_grid(F, dual=self._dual, outside="extend")
        grads = grid_gradient(conj)
        interp_grad = np.column_stack(
            [
                RegularGridInterpolator(conj.grid.axes, grads[..., k], bounds_error=False, fill_value=np.nan)(self.points)
                for k in range(conj.dim)
            ]
        )
        return conj.interpolate(self.points), interp_grad, conj

    def base(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(values, gradients, stable mask) of F* at the points."""
        F = self.seq.base
        if isinstance(F, PLConvexFunction):
            fstar: DomainPLFunction = legendre_pl(F)
            vals = fstar.values(self.points)
            stable, grads = stable_gradient_nodes(fstar.values, self.points, self.step)
            return vals, grads, stable
        if isinstance(F, SmoothConvexFunction):
            vals, grads = legendre_smooth(F, self.points)
            return vals, grads, np.all(np.isfinite(grads), axis=1)
        vals, grads, conj = self._sampled(F)
        stable, _ = stable_gradient_nodes(
            conj.interpolate, self.points, float(conj.grid.spacing.max()), one_sided=False
        )
        return vals, grads, stable

    def member(self, n: int, x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        F = self.seq.members[n]
        if isinstance(F, SampledFunction):
            vals, grads, _ = self._sampled(F)
            return vals, grads
        return legendre_smooth(F, self.points, x0=x0)


def _warm_start(previous: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if previous is None or not np.all(np.isfinite(previous)):
        return None
    return previous


def _tail_ok(series: List[float], tol: float) -> bool:
    return bool(series) and series[-1] <= tol and series[-1] <= series[0] + ONE_SIDED_SLACK


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_lemma_A(
    seq: ApproxSequence,
    compacts: Sequence[Polytope],
    per_axis: int = 9,
    tol: float = settings.CONV_TOL,
) -> ConvergenceReport:
    """Sup and stable-gradient errors of F_n* against F* on each compact, plus F_n* <= F*."""
    for K in compacts:
        _require_interior(K, seq.polytope)
    props: List[PropertyResult] = []
    one_sided_worst = -np.inf
    order_worst = -np.inf

    for idx, K in enumerate(compacts):
        points = _compact_nodes(K, per_axis)
        step = max(K.diameter() / (2.0 * per_axis), 1e-6)
        conj = _Conjugates(seq, points, step)
        base_vals, base_grads, stable = conj.base()
        sup_series, grad_series = [], []
        previous_vals: Optional[np.ndarray] = None
        x0 = None
        for n in range(len(seq)):
            vals, grads = conj.member(n, _warm_start(x0))
            x0 = grads
            finite = np.isfinite(vals) & np.isfinite(base_vals)
            sup_series.append(float(np.abs(vals - base_vals)[finite].max()))
            one_sided_worst = max(one_sided_worst, float((vals - base_vals)[finite].max()))
            both = stable & np.all(np.isfinite(grads), axis=1)
            grad_series.append(
                float(np.linalg.norm(grads - base_grads, axis=1)[both].max()) if both.any() else 0.0
            )
            if previous_vals is not None:
                order_worst = max(order_worst, float((previous_vals - vals)[finite].max()))
            previous_vals = vals
        logger.info(
            f"conjugates on compact {idx}: sup error {sup_series[-1]:.3e}, gradient error {grad_series[-1]:.3e}",
            extra={"suite": "lemmaA"},
        )
        props.append(
            PropertyResult(
                name=f"sup_error[K{idx}]",
                passed=_tail_ok(sup_series, tol),
                worst_case=sup_series[-1],
                series=sup_series,
            )
        )
        props.append(
            PropertyResult(
                name=f"gradient_error[K{idx}]",
                passed=_tail_ok(grad_series, tol),
                worst_case=grad_series[-1],
                series=grad_series,
                details={"stable_nodes": int(stable.sum()), "nodes": int(points.shape[0])},
            )
        )

    props.append(
        PropertyResult(name="one_sided_bound", passed=one_sided_worst <= ONE_SIDED_SLACK, worst_case=one_sided_worst)
    )
    if len(seq) > 1:
        props.append(
            PropertyResult(name="order_reversal", passed=order_worst <= ONE_SIDED_SLACK, worst_case=order_worst)
        )
    return ConvergenceReport.from_properties("lemmaA", seq.schedule.tolist(), props)


class BoundednessReport(BaseModel):
    passed: bool
    observed: float
    bound: float
    M: float
    C_bound: float
    eta: float
    series: List[float] = Field(default_factory=list)


def _ball_nodes(x: np.ndarray, radius: float, per_axis: int) -> np.ndarray:
    grid = UniformGrid.box(x - radius, x + radius, per_axis)
    nodes = grid.nodes()
    return nodes[np.linalg.norm(nodes - x, axis=1) <= radius + 1e-12]


def check_local_boundedness(
    seq: ApproxSequence,
    x: Sequence[float],
    delta: float,
    per_axis: int = 9,
) -> BoundednessReport:
    """sup_n sup_{B(x, delta/2)} |grad F_n*| against M + 2*eta/delta.

    M bounds |grad F*| on B(x, delta) and eta = sup_{B(x, delta)} (F* - F_1*);
    convexity and F_1* <= F_n* <= F* give the bound for every n.
    """
    center = np.asarray(x, dtype=float).reshape(-1)
    P = seq.polytope
    if delta <= 0:
        raise InvalidInputError("ball radius must be positive")
    if float(np.min(P.offsets - P.normals @ center)) <= delta:
        raise InvalidInputError("ball B(x, delta) leaves the interior of P", {"x": center.tolist(), "delta": delta})

    outer = _ball_nodes(center, delta, per_axis)
    inner = _ball_nodes(center, delta / 2.0, per_axis)
    step = max(delta / (4.0 * per_axis), 1e-6)

    outer_conj = _Conjugates(seq, outer, step)
    base_vals, base_grads, stable = outer_conj.base()
    at_center = np.linalg.norm(outer - center, axis=1).argmin()
    if not stable[at_center]:
        raise InvalidInputError("F* is not differentiable at the ball center", {"x": center.tolist()})
    finite = np.all(np.isfinite(base_grads), axis=1)
    M = float(np.linalg.norm(base_grads[finite], axis=1).max())
    first_vals, _ = outer_conj.member(0)
    eta = max(0.0, float(np.max(base_vals - first_vals)))
    c_bound = 2.0 * eta / delta

    inner_conj = _Conjugates(seq, inner, step)
    series = []
    x0 = None
    for n in range(len(seq)):
        _, grads = inner_conj.member(n, _warm_start(x0))
        x0 = grads
        ok = np.all(np.isfinite(grads), axis=1)
        series.append(float(np.linalg.norm(grads[ok], axis=1).max()) if ok.any() else 0.0)
    observed = max(series)
    bound = M + c_bound
    logger.info(f"local boundedness: observed {observed:.4g} <= {bound:.4g}", extra={"suite": "boundedness"})
    return BoundednessReport(
        passed=observed <= bound + ONE_SIDED_SLACK,
        observed=observed,
        bound=bound,
        M=M,
        C_bound=c_bound,
        eta=eta,
        series=series,
    )


def check_graphical_convergence(
    seq: ApproxSequence,
    samples: Any,
    tol: float = settings.CONV_TOL,
    per_axis: int = 5,
) -> ConvergenceReport:
    """Graph distance, pointwise gradient and value convergence at sample points.

    At each sample x with p = grad F*(x) a node x_n near x is chosen so that
    (x_n, grad F_n*(x_n)) is closest to (x, p). Samples where F* is not
    differentiable only check that grad F_n*(x) approaches dF*(x).
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, seq.polytope.dim)
    props: List[PropertyResult] = []
    step = 1e-3 * max(seq.polytope.diameter(), 1.0)
    conj = _Conjugates(seq, pts, step)
    base_vals, base_grads, stable = conj.base()

    graph_series, point_series, value_series, jump_series = [], [], [], []
    jump_sets: Dict[int, SubgradientSet] = {}
    if isinstance(seq.base, PLConvexFunction):
        fstar = legendre_pl(seq.base)
        for i in np.flatnonzero(~stable):
            active = fstar.pieces.active_pieces(pts[i])
            jump_sets[int(i)] = SubgradientSet(fstar.pieces.slopes[active])

    x0 = None
    for n in range(len(seq)):
        radius = math.sqrt(float(seq.schedule[n])) * step * 10.0
        graph_worst, value_worst = 0.0, 0.0
        for i in np.flatnonzero(stable):
            near = _ball_nodes(pts[i], radius, per_axis)
            nconj = _Conjugates(seq, near, step)
            vals, grads = nconj.member(n)
            dist = np.linalg.norm(near - pts[i], axis=1) + np.linalg.norm(grads - base_grads[i], axis=1)
            best = int(np.nanargmin(dist))
            graph_worst = max(graph_worst, float(dist[best]))
            value_worst = max(value_worst, abs(float(vals[best] - base_vals[i])))
        vals, grads = conj.member(n, _warm_start(x0))
        x0 = grads
        both = stable & np.all(np.isfinite(grads), axis=1)
        point_series.append(float(np.linalg.norm(grads - base_grads, axis=1)[both].max()) if both.any() else 0.0)
        graph_series.append(graph_worst)
        value_series.append(value_worst)
        if jump_sets:
            jump_series.append(max(s.distance(grads[i]) for i, s in jump_sets.items()))

    props.append(PropertyResult(name="graph_distance", passed=_tail_ok(graph_series, tol), worst_case=graph_series[-1], series=graph_series))
    props.append(
        PropertyResult(
            name="pointwise_gradient",
            passed=_tail_ok(point_series, tol),
            worst_case=point_series[-1],
            series=point_series,
            details={"differentiable_samples": int(stable.sum()), "samples": int(pts.shape[0])},
        )
    )
    props.append(PropertyResult(name="value_along_graph", passed=_tail_ok(value_series, tol), worst_case=value_series[-1], series=value_series))
    if jump_series:
        props.append(
            PropertyResult(
                name="jump_subgradient_distance",
                passed=_tail_ok(jump_series, tol),
                worst_case=jump_series[-1],
                series=jump_series,
            )
        )
    return ConvergenceReport.from_properties("attouch", seq.schedule.tolist(), props)


class UniquenessReport(BaseModel):
    passed: bool
    hypothesis_holds: bool
    sup_deviation: float
    checked_nodes: int
    differing_nodes: List[List[float]] = Field(default_factory=list)


def check_ae_gradient_uniqueness(
    u: Any,
    v: Any,
    C: Polytope,
    per_axis: int = 21,
    tol: float = settings.CONV_TOL,
) -> UniquenessReport:
    """Equal gradients at common differentiability nodes imply u - v constant on C."""
    nodes = _compact_nodes(C, per_axis)
    step = max(C.diameter() / (4.0 * per_axis), 1e-6)
    u_ok, u_grad = stable_gradient_nodes(lambda p: potential_values(u, p), nodes, step)
    v_ok, v_grad = stable_gradient_nodes(lambda p: potential_values(v, p), nodes, step)
    common = u_ok & v_ok
    same = np.all(np.abs(u_grad - v_grad) <= 10.0 * tol * (1.0 + np.abs(u_grad)), axis=1)
    differing = common & ~same
    if differing.any():
        return UniquenessReport(
            passed=False,
            hypothesis_holds=False,
            sup_deviation=float("inf"),
            checked_nodes=int(common.sum()),
            differing_nodes=nodes[differing][:20].tolist(),
        )
    diff = potential_values(u, nodes) - potential_values(v, nodes)
    deviation = float(np.max(np.abs(diff - np.median(diff))))
    return UniquenessReport(
        passed=deviation <= tol,
        hypothesis_holds=True,
        sup_deviation=deviation,
        checked_nodes=int(common.sum()),
    )


def _cellwise_pushforward(
    member: Any,
    cells: Sequence[Optional[Polytope]],
    g: Density,
    tests: Sequence[Any],
) -> np.ndarray:
    """int over each limit cell of f(grad F_n*(p)) g(p) dp, summed per test function."""
    totals = [[] for _ in tests]
    for cell in cells:
        if cell is None:
            continue
        if cell.dim == 1:
            a, b = float(cell.vertices[0, 0]), float(cell.vertices[1, 0])
            pts = (a + 0.5 * (GAUSS_NODES + 1.0) * (b - a)).reshape(-1, 1)
            weights = 0.5 * (b - a) * GAUSS_WEIGHTS
            pieces = [(pts, weights)]
        else:
            pieces = []
            for tri in cell.triangles():
                area = abs(float((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1]) - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0]))) / 2.0
                pieces.append((TRIANGLE_BARY @ tri, area * TRIANGLE_WEIGHTS))
        for pts, weights in pieces:
            _, grads = legendre_smooth(member, pts)
            gw = weights * g.values(pts)
            for k, f in enumerate(tests):
                totals[k].append(float(gw @ f(grads)))
    return np.array([math.fsum(t) for t in totals])


def ma_continuity_series(
    seq: ApproxSequence,
    g: Density,
    mu: DiscreteMeasure,
    cells: Sequence[Optional[Polytope]],
    tests: Optional[Sequence[Any]] = None,
) -> PropertyResult:
    """Pushforward residual of each member against the limit measure mu.

    The integral over P is split along the limit's Laguerre cells, where
    grad F_n* converges to the constant atom.
    """
    if seq.kind == "sampled":
        raise InvalidInputError("MA continuity is measured for smooth or PL bases")
    tests = tests if tests is not None else test_function_battery(seq.polytope.dim)
    target = np.array([mu.integrate(f) for f in tests])
    series = []
    for member in seq.members:
        lhs = _cellwise_pushforward(member, cells, g, tests)
        series.append(float(np.max(np.abs(lhs - target))))
    scale = 1.0 + float(np.abs(mu.points).max())
    limit = max(settings.push_tol(), 50.0 * float(seq.schedule[-1]) * scale)
    return PropertyResult(
        name="ma_continuity",
        passed=series[-1] <= limit and series[-1] <= series[0] + ONE_SIDED_SLACK,
        worst_case=series[-1],
        series=series,
        details={"limit": limit},
    )
