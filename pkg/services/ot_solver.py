"""Semi-discrete optimal transport from g dp on P to an atomic measure mu.

The dual potential is phi(p) = max_i <p, y_i> - w_i on P; its Laguerre cells
L_i are the preimages of the atoms under grad phi. The weights are found by
damped Newton ascent on the concave Kantorovich dual, and the solution of
MA_g(u) = mu is recovered as u = phi*, which is PL with slopes in P.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import optimize

from services.convex_core import DomainPLFunction, PLConvexFunction, UniformGrid
from services.ma_measure import DiscreteMeasure
from services.polytope import Density, Polytope, clip_halfplane, edge_integral, integrate, mass
from utils import settings
from utils.error_handling import (
    InconsistentStateError,
    InvalidInputError,
    NoConvergenceError,
    UnsupportedError,
)
from utils.logging_config import PerformanceLogger

logger = logging.getLogger("toricma")

MAX_COORDINATE = 1e8


# ---------------------------------------------------------------------------
# Laguerre diagrams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaguerreDiagram:
    """Cells L_i = {p in P : <p, y_i> - w_i >= <p, y_j> - w_j for all j}; None when empty."""

    source: Polytope
    targets: np.ndarray
    weights: np.ndarray
    cells: List[Optional[Polytope]]

    @property
    def size(self) -> int:
        return int(self.targets.shape[0])

    def nonempty(self) -> np.ndarray:
        return np.array([c is not None for c in self.cells])

    def total_volume(self) -> float:
        return math.fsum(c.volume() for c in self.cells if c is not None)

    def scores(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.source.dim)
        return pts @ self.targets.T - self.weights

    def assign(self, points: Any) -> np.ndarray:
        """Index of the cell containing each point (grad phi, up to ties)."""
        return np.argmax(self.scores(points), axis=1)

    def phi(self) -> DomainPLFunction:
        """Dual potential on P; the cell vertices generate its conjugate."""
        verts = [c.vertices for c in self.cells if c is not None]
        return DomainPLFunction.on_halfspaces(
            PLConvexFunction(self.targets, -self.weights),
            self.source.normals,
            self.source.offsets,
            np.vstack(verts) if verts else self.source.vertices,
        )


def _check_targets(P: Polytope, targets: np.ndarray) -> np.ndarray:
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, P.dim)
    if y.shape[0] == 0:
        raise InvalidInputError("at least one target is required")
    if y.shape[1] != P.dim:
        raise InvalidInputError("targets and polytope differ in dimension")
    if P.dim not in (1, 2):
        raise UnsupportedError("Laguerre diagrams are implemented in dimensions 1 and 2")
    if not np.all(np.isfinite(y)) or np.abs(y).max() > MAX_COORDINATE:
        raise InvalidInputError("target coordinates are outside the numerical range")
    if np.unique(y, axis=0).shape[0] != y.shape[0]:
        raise InvalidInputError("duplicate targets must be merged before building cells")
    return y


def _cell(P: Polytope, y: np.ndarray, w: np.ndarray, i: int) -> Optional[Polytope]:
    cell: Optional[Polytope] = P
    for j in range(y.shape[0]):
        if j == i:
            continue
        cell = clip_halfplane(cell, y[j] - y[i], float(w[j] - w[i]))
        if cell is None:
            return None
    return cell


def laguerre_cells(
    P: Polytope,
    targets: Any,
    weights: Any,
    workers: int = settings.WORKERS,
) -> LaguerreDiagram:
    """Cells by iterated half-plane clipping of P against every bisector."""
    y = _check_targets(P, targets)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != y.shape[0]:
        raise InvalidInputError("weights and targets differ in length")

    if workers > 1 and y.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(lambda i: _cell(P, y, w, i), range(y.shape[0])))
    else:
        cells = [_cell(P, y, w, i) for i in range(y.shape[0])]
    return LaguerreDiagram(P, y, w, cells)


def cell_masses(d: LaguerreDiagram, g: Density) -> np.ndarray:
    return np.array([mass(c, g) for c in d.cells])


# ---------------------------------------------------------------------------
# Kantorovich dual
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualState:
    diagram: LaguerreDiagram
    value: float
    masses: np.ndarray
    gradient: np.ndarray
    hessian: Optional[np.ndarray]


def _shared_facets(d: LaguerreDiagram) -> List[Tuple[int, int, np.ndarray, np.ndarray]]:
    """(i, j, a, b): facet [a, b] of cell i shared with cell j (a == b in 1D)."""
    P = d.source
    scale = 1.0 + float(np.abs(P.vertices).max())
    tol = 1e-9 * scale
    delta = 1e-7 * max(P.diameter(), 1.0)
    out = []
    for i, cell in enumerate(d.cells):
        if cell is None:
            continue
        if P.dim == 1:
            lo, hi = float(cell.vertices[0, 0]), float(cell.vertices[1, 0])
            for b, side in ((lo, -1.0), (hi, 1.0)):
                if abs(b - P.vertices[0, 0]) <= tol or abs(b - P.vertices[1, 0]) <= tol:
                    continue
                scores = d.scores([[b + side * delta]])[0]
                scores[i] = -np.inf
                pt = np.array([b])
                out.append((i, int(np.argmax(scores)), pt, pt))
            continue
        verts = cell.vertices
        for k in range(verts.shape[0]):
            a, b = verts[k], verts[(k + 1) % verts.shape[0]]
            on_boundary = np.any(
                (np.abs(P.normals @ a - P.offsets) <= tol) & (np.abs(P.normals @ b - P.offsets) <= tol)
            )
            if on_boundary:
                continue
            edge = b - a
            outward = np.array([edge[1], -edge[0]]) / np.linalg.norm(edge)
            scores = d.scores([(a + b) / 2.0 + delta * outward])[0]
            scores[i] = -np.inf
            out.append((i, int(np.argmax(scores)), a, b))
    return out


def dual_hessian(d: LaguerreDiagram, g: Density) -> np.ndarray:
    """H_ij = int_{L_i cap L_j} g ds / |y_i - y_j| off the diagonal, rows summing to zero."""
    k = d.size
    H = np.zeros((k, k))
    for i, j, a, b in _shared_facets(d):
        dist = float(np.linalg.norm(d.targets[i] - d.targets[j]))
        if d.source.dim == 1:
            facet = float(g.values(a.reshape(1, 1))[0])
        else:
            facet = edge_integral(a, b, g)
        H[i, j] += facet / dist
    H = 0.5 * (H + H.T)
    H[np.diag_indices(k)] = -H.sum(axis=1)
    return H


def kantorovich_dual(
    d: LaguerreDiagram,
    g: Density,
    mu: DiscreteMeasure,
    with_hessian: bool = True,
) -> DualState:
    """K(w) = -int_P max_i(<p, y_i> - w_i) g dp - sum_i a_i w_i.

    Concave in w with gradient (cell masses - a).
    """
    masses = cell_masses(d, g)
    parts = []
    for i, cell in enumerate(d.cells):
        if cell is None:
            continue
        yi = d.targets[i]
        parts.append(integrate(cell, g, lambda p, yi=yi: p @ yi) - d.weights[i] * masses[i])
    value = -math.fsum(parts) - math.fsum(mu.masses * d.weights)
    return DualState(
        diagram=d,
        value=value,
        masses=masses,
        gradient=masses - mu.masses,
        hessian=dual_hessian(d, g) if with_hessian else None,
    )


# ---------------------------------------------------------------------------
# Initial weights
# ---------------------------------------------------------------------------


def initial_weights(
    P: Polytope,
    targets: Any,
    perturbation: float = 0.0,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Weights realizing the Voronoi partition of the atoms pulled into P.

    The atoms are contracted about the Chebyshev center c into
    c + (P - c)/2; the Voronoi cells of the contracted points are the
    Laguerre cells of w_i = <c, y_i> + |y_i - c|^2 / (2t), all nonempty.
    """
    y = _check_targets(P, targets)
    c, _ = P.chebyshev_center()
    slack = P.offsets - P.normals @ c
    gauge = np.max(((y - c) @ P.normals.T) / slack, axis=1)
    t = max(2.0 * float(gauge.max()), 1e-12)
    w = y @ c + np.sum((y - c) ** 2, axis=1) / (2.0 * t)
    if perturbation > 0.0:
        rng = np.random.default_rng(seed)
        spread = P.diameter() * (1.0 + float(np.abs(y).max()))
        w = w + perturbation * spread * rng.standard_normal(w.size)
    return w - w.min()


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


class SolverDiagnostics(BaseModel):
    iterations: int = 0
    residual: float = float("inf")
    tol: float = 0.0
    converged: bool = False
    damping_events: int = 0
    gradient_fallbacks: int = 0
    residual_history: List[float] = Field(default_factory=list)
    mass_totals: List[float] = Field(default_factory=list)
    dual_values: List[float] = Field(default_factory=list)


@dataclass(frozen=True)
class Solution:
    u: PLConvexFunction
    phi: DomainPLFunction
    diagram: LaguerreDiagram
    diagnostics: SolverDiagnostics

    @property
    def weights(self) -> np.ndarray:
        return self.diagram.weights

    @property
    def targets(self) -> np.ndarray:
        return self.diagram.targets

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "targets": self.targets.tolist(),
            "cells": [[] if c is None else c.vertices.tolist() for c in self.diagram.cells],
            "u_pieces": self.u.to_dict()["pieces"],
            "diagnostics": {
                "iters": self.diagnostics.iterations,
                "residual": self.diagnostics.residual,
                "converged": self.diagnostics.converged,
                "damping_events": self.diagnostics.damping_events,
                "gradient_fallbacks": self.diagnostics.gradient_fallbacks,
                "mass_totals": self.diagnostics.mass_totals,
            },
        }


def solution_u(d: LaguerreDiagram, prescribed: Optional[np.ndarray] = None) -> PLConvexFunction:
    """u(x) = max_i [w_i + h_{L_i}(x - y_i)], one piece per cell vertex."""
    slopes, intercepts = [], []
    for i, cell in enumerate(d.cells):
        if cell is None:
            if prescribed is not None and prescribed[i] > 0:
                raise InconsistentStateError(
                    "a cell with prescribed mass is empty",
                    {"atom": i, "target": d.targets[i].tolist()},
                )
            continue
        for v in cell.vertices:
            slopes.append(v)
            intercepts.append(d.weights[i] - float(d.targets[i] @ v))
    if not slopes:
        raise InconsistentStateError("every Laguerre cell is empty")
    return PLConvexFunction(np.array(slopes), np.array(intercepts))


def _solution(state: DualState, mu: DiscreteMeasure, diagnostics: SolverDiagnostics) -> Solution:
    d = state.diagram
    return Solution(u=solution_u(d, mu.masses), phi=d.phi(), diagram=d, diagnostics=diagnostics)


def _check_instance(P: Polytope, g: Density, mu: DiscreteMeasure) -> None:
    if mu.dim != P.dim or g.dim != P.dim:
        raise InvalidInputError("polytope, density and measure differ in dimension")
    if not mu.probability:
        raise InvalidInputError("the target must be a probability measure")


def solve_dual(
    P: Polytope,
    g: Density,
    mu: DiscreteMeasure,
    tol: Optional[float] = None,
    max_iter: int = settings.MAX_ITER,
    w0: Optional[np.ndarray] = None,
) -> Solution:
    """Weights with max_i |mass_i(w) - a_i| <= tol, by damped Newton.

    A step is accepted once every cell keeps at least half of the smaller of
    min a_i and the smallest initial mass, the residual norm drops by the
    factor (1 - tau/2) and the dual value does not decrease.
    """
    _check_instance(P, g, mu)
    if tol is None:
        tol = settings.NEWTON_TOL_EXACT if g.is_exact else settings.NEWTON_TOL_GRID
    if tol <= 0:
        raise InvalidInputError("tolerance must be positive")
    targets = _check_targets(P, mu.points)
    a = mu.masses
    k = a.size

    if w0 is None:
        w = initial_weights(P, targets)
    else:
        w = np.asarray(w0, dtype=float).reshape(-1)
        w = w - w.min()
    state = kantorovich_dual(laguerre_cells(P, targets, w), g, mu)
    if state.masses.min() <= 0.0:
        logger.warning("starting weights leave an empty cell; using the Voronoi start")
        w = initial_weights(P, targets)
        state = kantorovich_dual(laguerre_cells(P, targets, w), g, mu)

    floor = settings.MASS_FLOOR * min(float(a.min()), float(state.masses.min()))
    diag = SolverDiagnostics(tol=tol)

    def record(st: DualState) -> None:
        diag.residual = float(np.abs(st.gradient).max())
        diag.residual_history.append(diag.residual)
        diag.mass_totals.append(math.fsum(st.masses))
        diag.dual_values.append(st.value)

    record(state)
    with PerformanceLogger(logger, "solve_dual", n_atoms=k):
        while diag.residual > tol:
            if diag.iterations >= max_iter:
                raise NoConvergenceError(
                    f"no convergence after {max_iter} iterations (residual {diag.residual:.3e})",
                    solution=_solution(state, mu, diag),
                    details={"iterations": diag.iterations, "residual": diag.residual},
                )
            diag.iterations += 1

            rhs = a - state.masses
            delta, _, rank, _ = np.linalg.lstsq(state.hessian, rhs, rcond=None)
            newton = rank >= k - 1
            if not newton:
                diag.gradient_fallbacks += 1
                logger.info("singular dual Hessian; taking a gradient step", extra={"iteration": diag.iterations})
                delta = -rhs

            g_norm = float(np.linalg.norm(state.gradient))
            tau = 1.0
            while True:
                trial_w = state.diagram.weights + tau * delta
                trial = kantorovich_dual(laguerre_cells(P, targets, trial_w - trial_w.min()), g, mu)
                ok = (
                    trial.masses.min() >= floor
                    and trial.value >= state.value - 1e-14 * (1.0 + abs(state.value))
                    and (not newton or np.linalg.norm(trial.gradient) <= (1.0 - tau / 2.0) * g_norm)
                )
                if ok:
                    break
                tau /= 2.0
                diag.damping_events += 1
                if tau < 1e-12:
                    raise NoConvergenceError(
                        "line search stalled",
                        solution=_solution(state, mu, diag),
                        details={"iterations": diag.iterations, "residual": diag.residual},
                    )
            state = trial
            record(state)
            logger.debug(
                "newton step",
                extra={"iteration": diag.iterations, "residual": diag.residual, "step": tau},
            )

    diag.converged = True
    return _solution(state, mu, diag)


# ---------------------------------------------------------------------------
# Oracles and probes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleSolution:
    breakpoints: np.ndarray
    weights: np.ndarray
    diagram: LaguerreDiagram
    u: PLConvexFunction

    def to_dict(self) -> Dict[str, Any]:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "weights": self.weights.tolist(),
            "targets": self.diagram.targets.tolist(),
            "cells": [[] if c is None else c.vertices.tolist() for c in self.diagram.cells],
            "u_pieces": self.u.to_dict()["pieces"],
        }


def oracle_1d(P: Polytope, g: Density, mu: DiscreteMeasure) -> OracleSolution:
    """Monotone rearrangement: breakpoints by inverting the CDF of g at the cumulative atom masses."""
    _check_instance(P, g, mu)
    if P.dim != 1:
        raise InvalidInputError("oracle_1d takes one-dimensional instances")
    lo, hi = float(P.vertices[0, 0]), float(P.vertices[1, 0])
    order = np.argsort(mu.points[:, 0], kind="stable")
    y = mu.points[order, 0]
    cum = np.cumsum(mu.masses[order])

    def cdf(t: float) -> float:
        return 0.0 if t <= lo else mass(Polytope.interval(lo, min(t, hi)), g)

    breaks = np.array(
        [optimize.brentq(lambda t, c=c: cdf(t) - c, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps) for c in cum[:-1]]
    )
    edges = np.concatenate([[lo], breaks, [hi]])
    w_sorted = np.zeros(y.size)
    for k in range(y.size - 1):
        w_sorted[k + 1] = w_sorted[k] + breaks[k] * (y[k + 1] - y[k])
    w_sorted -= w_sorted.min()

    weights = np.empty_like(w_sorted)
    weights[order] = w_sorted
    cells: List[Optional[Polytope]] = [None] * y.size
    for k, idx in enumerate(order):
        if edges[k + 1] - edges[k] > 0:
            cells[idx] = Polytope.interval(edges[k], edges[k + 1])
    diagram = LaguerreDiagram(P, mu.points.copy(), weights, cells)
    return OracleSolution(breakpoints=breaks, weights=weights, diagram=diagram, u=solution_u(diagram, mu.masses))


def comparison_grid(P: Polytope, targets: np.ndarray, counts: int = 21) -> UniformGrid:
    radius = 2.0 * (float(np.abs(targets).max()) + P.diameter())
    return UniformGrid.centered(radius, counts, P.dim)


def uniqueness_probe(
    P: Polytope,
    g: Density,
    mu: DiscreteMeasure,
    seeds: Sequence[int],
    tol: Optional[float] = None,
    perturbation: float = 0.1,
) -> float:
    """Max pairwise sup-distance of normalized solutions from randomized starts."""
    nodes = comparison_grid(P, mu.points).nodes()
    values = []
    for seed in seeds:
        scale = perturbation
        while True:
            w0 = initial_weights(P, mu.points, perturbation=scale, seed=seed)
            if all(laguerre_cells(P, mu.points, w0).nonempty()):
                break
            scale /= 2.0
        sol = solve_dual(P, g, mu, tol=tol, w0=w0)
        values.append(sol.u.values(nodes))
        logger.debug(f"uniqueness probe seed {seed}: {sol.diagnostics.iterations} iterations", extra={"seed": seed})
    if len(values) < 2:
        return 0.0
    return max(float(np.max(np.abs(a - b))) for a, b in itertools.combinations(values, 2))
