# tools/verify_suites.py
"""
Seeded verification suites
Each suite builds its instances from the seed, runs the property checks and
returns a ConvergenceReport; run_suite turns it into the report document
"""
import logging
import math
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from services.convergence_lab import (
    ConvergenceReport,
    PropertyResult,
    check_ae_gradient_uniqueness,
    check_graphical_convergence,
    check_lemma_A,
    check_local_boundedness,
    lipschitz_audit,
    ma_continuity_series,
    make_decreasing_sequence,
)
from services.convex_core import PLConvexFunction
from services.ma_measure import DiscreteMeasure, ma_transported_pl, pushforward_residual
from services.ot_solver import Solution, solve_dual, uniqueness_probe
from services.polytope import Density, Polytope
from services.toric_bridge import toric_reference_potential
from utils import settings
from utils.error_handling import InvalidInputError
from utils.logging_config import PerformanceLogger

logger = logging.getLogger("toricma")

SUITES = ("lemmaA", "attouch", "uniqueness", "boundedness", "pushforward")
LEMMA_A_SCHEDULE = [2.0 ** -k for k in range(2, 17, 2)]
UNIQUENESS_INSTANCES = 10


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


def unit_square() -> Polytope:
    return Polytope.box([0.0, 0.0], [1.0, 1.0])


def regular_hexagon() -> Polytope:
    angles = np.arange(6) * math.pi / 3.0
    return Polytope.polygon(np.column_stack([np.cos(angles), np.sin(angles)]))


def random_measure(rng: np.random.Generator, dim: int, n_atoms: int, low: float = -1.0, high: float = 2.0) -> DiscreteMeasure:
    """Distinct atoms in a box around P with masses bounded away from zero."""
    points = np.round(rng.uniform(low, high, size=(n_atoms, dim)), 6)
    while np.unique(points, axis=0).shape[0] < n_atoms:
        points = np.round(rng.uniform(low, high, size=(n_atoms, dim)), 6)
    masses = rng.uniform(0.5, 1.5, size=n_atoms)
    return DiscreteMeasure(points, masses / masses.sum())


def random_instance(rng: np.random.Generator, max_atoms: int = 6, vary_density: bool = False) -> Dict[str, Any]:
    P = unit_square() if rng.random() < 0.5 else regular_hexagon()
    mu = random_measure(rng, 2, int(rng.integers(2, max_atoms + 1)))
    g = Density.uniform(P)
    if vary_density and rng.random() < 0.5:
        g = Density.polynomial(P, {(0, 0): 2.0, (1, 0): 0.5})
    return {"polytope": P, "density": g, "measure": mu}


def interior_compacts(P: Polytope) -> List[Polytope]:
    """Two nested homothetic copies of P about its centroid."""
    return [P.scaled(0.5), P.scaled(0.25)]


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _solve(instance: Dict[str, Any]) -> Solution:
    return solve_dual(instance["polytope"], instance["density"], instance["measure"])


def suite_lemma_a(seed: int) -> ConvergenceReport:
    rng = np.random.default_rng(seed)
    P = unit_square()
    bases = {"support": P.support_pl(), "solver": solve_dual(P, Density.uniform(P), random_measure(rng, 2, 3)).u}
    props: List[PropertyResult] = []
    for label, F in bases.items():
        seq = make_decreasing_sequence(F, P, LEMMA_A_SCHEDULE)
        gaps = seq.monotonicity_gaps()
        props.append(
            PropertyResult(name=f"{label}:decreasing", passed=min(gaps) >= -1e-10, worst_case=min(gaps), series=gaps)
        )
        props.append(lipschitz_audit(seq).model_copy(update={"name": f"{label}:uniform_lipschitz"}))
        report = check_lemma_A(seq, interior_compacts(P), per_axis=5)
        props.extend(p.model_copy(update={"name": f"{label}:{p.name}"}) for p in report.properties)
    return ConvergenceReport.from_properties("lemmaA", LEMMA_A_SCHEDULE, props)


def suite_attouch(seed: int) -> ConvergenceReport:
    rng = np.random.default_rng(seed)
    P = unit_square()
    inner = P.scaled(0.5)
    samples = inner.lower + rng.random((4, 2)) * (inner.upper - inner.lower)
    props: List[PropertyResult] = []

    smooth = make_decreasing_sequence(toric_reference_potential(P), P, LEMMA_A_SCHEDULE)
    report = check_graphical_convergence(smooth, samples)
    props.extend(p.model_copy(update={"name": f"smooth:{p.name}"}) for p in report.properties)

    # two atoms on one axis: the dual potential has a gradient jump along p1 = 1/2
    mu = DiscreteMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
    u = solve_dual(P, Density.uniform(P), mu).u
    jump_samples = np.vstack([samples, [[0.5, 0.5]]])
    report = check_graphical_convergence(make_decreasing_sequence(u, P, LEMMA_A_SCHEDULE), jump_samples)
    props.extend(p.model_copy(update={"name": f"solver:{p.name}"}) for p in report.properties)
    return ConvergenceReport.from_properties("attouch", LEMMA_A_SCHEDULE, props)


def suite_uniqueness(seed: int) -> ConvergenceReport:
    rng = np.random.default_rng(seed)
    props: List[PropertyResult] = []
    distances = []
    for _ in range(UNIQUENESS_INSTANCES):
        inst = random_instance(rng, max_atoms=8, vary_density=True)
        distances.append(
            uniqueness_probe(
                inst["polytope"], inst["density"], inst["measure"], seeds=[seed, seed + 1, seed + 2], tol=1e-11
            )
        )
    props.append(
        PropertyResult(
            name="probe_sup_distance",
            passed=max(distances) <= 1e-8,
            worst_case=max(distances),
            series=distances,
        )
    )

    P = unit_square()
    u = solve_dual(P, Density.uniform(P), random_measure(rng, 2, 3)).u
    shifted = check_ae_gradient_uniqueness(u, u.shifted(7.0), P.scaled(0.8))
    props.append(
        PropertyResult(
            name="constant_shift",
            passed=shifted.passed,
            worst_case=shifted.sup_deviation,
            details={"checked_nodes": shifted.checked_nodes},
        )
    )
    tilt = PLConvexFunction(u.slopes + np.array([0.25, 0.0]), u.intercepts)
    tilted = check_ae_gradient_uniqueness(u, tilt, P.scaled(0.8))
    props.append(
        PropertyResult(
            name="linear_tilt_detected",
            passed=not tilted.hypothesis_holds,
            worst_case=float(len(tilted.differing_nodes)),
            details={"differing_nodes": tilted.differing_nodes},
        )
    )
    return ConvergenceReport.from_properties("uniqueness", [], props)


def suite_boundedness(seed: int) -> ConvergenceReport:
    rng = np.random.default_rng(seed)
    P = unit_square()
    props: List[PropertyResult] = []
    bases = {
        "support": P.support_pl(),
        "smooth": toric_reference_potential(P),
    }
    center = P.centroid() + rng.uniform(-0.1, 0.1, size=2)
    for label, F in bases.items():
        seq = make_decreasing_sequence(F, P, LEMMA_A_SCHEDULE)
        result = check_local_boundedness(seq, center, delta=0.25)
        props.append(
            PropertyResult(
                name=f"{label}:gradient_bound",
                passed=result.passed,
                worst_case=result.observed,
                series=result.series,
                details={"bound": result.bound, "M": result.M, "C_bound": result.C_bound, "eta": result.eta},
            )
        )
    return ConvergenceReport.from_properties("boundedness", LEMMA_A_SCHEDULE, props)


def verify_solution(u: PLConvexFunction, P: Polytope, g: Density, mu: DiscreteMeasure, label: str = "solution") -> List[PropertyResult]:
    """Pushforward identity and atom-by-atom MA consistency of a potential."""
    push_tol = settings.push_tol(settings.NEWTON_TOL_EXACT if g.is_exact else settings.NEWTON_TOL_GRID)
    residual = pushforward_residual(u, g, P, mu)
    ma = ma_transported_pl(u, g, P).atoms
    atom_error = _atom_mismatch(ma, mu)
    return [
        PropertyResult(name=f"{label}:pushforward", passed=residual <= push_tol, worst_case=residual, details={"tol": push_tol}),
        PropertyResult(name=f"{label}:ma_atoms", passed=atom_error <= push_tol, worst_case=atom_error, details={"tol": push_tol}),
    ]


def _atom_mismatch(got: DiscreteMeasure, want: DiscreteMeasure) -> float:
    """Max over atoms of the mass difference; inf when the supports differ."""
    if got.size != want.size:
        return math.inf
    worst = 0.0
    for point, m in zip(want.points, want.masses):
        dist = np.linalg.norm(got.points - point, axis=1)
        j = int(dist.argmin())
        if dist[j] > 1e-7 * (1.0 + np.linalg.norm(point)):
            return math.inf
        worst = max(worst, abs(float(got.masses[j]) - float(m)))
    return worst


def suite_pushforward(seed: int, stored: Optional[Dict[str, Any]] = None) -> ConvergenceReport:
    """Random instances, or one stored solution when ``stored`` is given."""
    if stored is not None:
        props = verify_solution(stored["u"], stored["polytope"], stored["density"], stored["measure"])
        return ConvergenceReport.from_properties("pushforward", [], props)

    rng = np.random.default_rng(seed)
    props: List[PropertyResult] = []
    for k in range(4):
        inst = random_instance(rng)
        sol = _solve(inst)
        props.extend(verify_solution(sol.u, inst["polytope"], inst["density"], inst["measure"], label=f"instance{k}"))
        mass_drift = max(abs(t - 1.0) for t in sol.diagnostics.mass_totals)
        props.append(
            PropertyResult(
                name=f"instance{k}:mass_conservation",
                passed=mass_drift <= settings.MASS_TOL_EXACT,
                worst_case=mass_drift,
                series=[t - 1.0 for t in sol.diagnostics.mass_totals],
            )
        )
        if k == 0:
            seq = make_decreasing_sequence(sol.u, inst["polytope"], LEMMA_A_SCHEDULE)
            props.append(
                ma_continuity_series(seq, inst["density"], inst["measure"], sol.diagram.cells)
            )
    return ConvergenceReport.from_properties("pushforward", LEMMA_A_SCHEDULE, props)


SUITE_RUNNERS: Dict[str, Callable[..., ConvergenceReport]] = {
    "lemmaA": suite_lemma_a,
    "attouch": suite_attouch,
    "uniqueness": suite_uniqueness,
    "boundedness": suite_boundedness,
    "pushforward": suite_pushforward,
}


def report_document(report: ConvergenceReport, seed: int) -> Dict[str, Any]:
    return {
        "suite": report.suite,
        "seed": seed,
        "pass": report.passed,
        "schedule": report.schedule,
        "properties": {
            p.name: {"pass": p.passed, "worst_case": p.worst_case, "series": p.series, "details": p.details}
            for p in report.properties
        },
    }


def run_suite(name: str, seed: int, stored: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if name not in SUITE_RUNNERS:
        raise InvalidInputError(f"unknown suite {name!r}", {"available": list(SUITES)})
    with PerformanceLogger(logger, f"verify {name}", suite=name, seed=seed):
        if name == "pushforward":
            report = suite_pushforward(seed, stored)
        else:
            report = SUITE_RUNNERS[name](seed)
    failed = [p.name for p in report.properties if not p.passed]
    if failed:
        logger.warning(f"suite {name}: {len(failed)} failing properties: {', '.join(failed)}", extra={"suite": name})
    else:
        logger.info(f"suite {name}: all {len(report.properties)} properties pass", extra={"suite": name})
    return report_document(report, seed)
