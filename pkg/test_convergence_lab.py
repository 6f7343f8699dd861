"""
Tests for services.convergence_lab: decreasing approximations, conjugate
convergence on compacts, local gradient bounds, graphical convergence,
a.e. gradient uniqueness and MA continuity
"""
import numpy as np
import pytest

from services.convergence_lab import (
    check_ae_gradient_uniqueness,
    check_graphical_convergence,
    check_lemma_A,
    check_local_boundedness,
    lipschitz_audit,
    ma_continuity_series,
    make_decreasing_sequence,
    stable_gradient_nodes,
)
from services.convex_core import PLConvexFunction, SampledFunction, UniformGrid, quadratic
from services.ma_measure import DiscreteMeasure
from services.ot_solver import solve_dual
from services.polytope import Density
from services.toric_bridge import toric_reference_potential
from tools.verify_suites import LEMMA_A_SCHEDULE, interior_compacts
from utils.error_handling import ClassViolationError, InvalidInputError

SHORT_SCHEDULE = [2.0 ** -k for k in range(1, 6)]


@pytest.fixture
def split_potential():
    """Solution for atoms (0,0), (1,0) on the unit square: u* = max(0, p1 - 1/2)."""
    slopes = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    return PLConvexFunction(slopes, np.array([0.0, 0.0, 0.0, 0.0, -0.5, -0.5]))


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


def test_schedule_must_decrease(square):
    with pytest.raises(InvalidInputError):
        make_decreasing_sequence(square.support_pl(), square, [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        make_decreasing_sequence(square.support_pl(), square, [])


def test_pl_sequence_decreases_to_the_base(square):
    seq = make_decreasing_sequence(square.support_pl(), square, SHORT_SCHEDULE)
    assert len(seq) == len(SHORT_SCHEDULE)
    assert min(seq.monotonicity_gaps()) >= -1e-12
    assert lipschitz_audit(seq).passed


def test_pl_base_outside_the_class_is_rejected(square):
    with pytest.raises(ClassViolationError):
        make_decreasing_sequence(PLConvexFunction(np.array([[2.0, 0.0], [0.0, 0.0]]), np.zeros(2)), square, SHORT_SCHEDULE)


def test_smooth_base_outside_the_class_is_rejected(square):
    with pytest.raises(ClassViolationError):
        make_decreasing_sequence(quadratic(2), square, SHORT_SCHEDULE)


def test_sampled_sequence_is_lifted_to_decrease(unit_interval):
    grid = UniformGrid.box([-4.0], [4.0], 161)
    base = SampledFunction.from_callable(grid, lambda x: np.maximum(0.0, x[:, 0]))
    seq = make_decreasing_sequence(base, unit_interval, [0.5, 0.25, 0.125])
    assert seq.kind == "sampled"
    assert min(seq.monotonicity_gaps()) >= -1e-12
    assert np.all(seq.offsets >= 0.0)
    assert lipschitz_audit(seq).passed


# ---------------------------------------------------------------------------
# Conjugate convergence on compacts
# ---------------------------------------------------------------------------


def test_support_function_conjugates_converge(square):
    seq = make_decreasing_sequence(square.support_pl(), square, LEMMA_A_SCHEDULE)
    report = check_lemma_A(seq, interior_compacts(square), per_axis=5)
    assert report.passed, [p.name for p in report.properties if not p.passed]
    assert report.property("sup_error[K0]").worst_case <= 1e-4
    assert report.property("one_sided_bound").passed
    assert report.property("order_reversal").passed


def test_solver_potential_conjugates_converge(square, uniform_square, two_atoms_square):
    u = solve_dual(square, uniform_square, two_atoms_square).u
    seq = make_decreasing_sequence(u, square, LEMMA_A_SCHEDULE)
    report = check_lemma_A(seq, interior_compacts(square), per_axis=5)
    assert report.passed, [p.name for p in report.properties if not p.passed]
    # nodes on the kink p1 = 1/2 are excluded from the gradient comparison
    details = report.property("gradient_error[K0]").details
    assert details["stable_nodes"] < details["nodes"]


def test_compacts_must_stay_inside(square):
    seq = make_decreasing_sequence(square.support_pl(), square, SHORT_SCHEDULE)
    with pytest.raises(InvalidInputError):
        check_lemma_A(seq, [square])


def test_stable_nodes_skip_kinks():
    f = PLConvexFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
    mask, grads = stable_gradient_nodes(f.values, np.array([[0.0], [0.5]]), 0.1)
    assert mask.tolist() == [False, True]
    assert grads[1, 0] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Local boundedness
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("base", ["support", "smooth"])
def test_local_gradient_bound_holds(base, square):
    F = square.support_pl() if base == "support" else toric_reference_potential(square)
    seq = make_decreasing_sequence(F, square, LEMMA_A_SCHEDULE)
    report = check_local_boundedness(seq, [0.55, 0.45], delta=0.25)
    assert report.passed
    assert report.bound == pytest.approx(report.M + 2.0 * report.eta / 0.25)
    assert report.observed <= report.bound


def test_ball_leaving_the_polytope_is_rejected(square):
    seq = make_decreasing_sequence(square.support_pl(), square, SHORT_SCHEDULE)
    with pytest.raises(InvalidInputError):
        check_local_boundedness(seq, [0.1, 0.5], delta=0.25)


# ---------------------------------------------------------------------------
# Graphical convergence
# ---------------------------------------------------------------------------


def test_graphical_convergence_for_smooth_base(square):
    seq = make_decreasing_sequence(toric_reference_potential(square), square, LEMMA_A_SCHEDULE)
    report = check_graphical_convergence(seq, [[0.5, 0.5], [0.4, 0.6]])
    assert report.passed, [p.name for p in report.properties if not p.passed]


def test_graphical_convergence_across_a_gradient_jump(square, split_potential):
    seq = make_decreasing_sequence(split_potential, square, LEMMA_A_SCHEDULE)
    report = check_graphical_convergence(seq, [[0.3, 0.4], [0.5, 0.5]])
    names = [p.name for p in report.properties]
    assert "jump_subgradient_distance" in names
    assert report.passed, [p.name for p in report.properties if not p.passed]
    assert report.property("pointwise_gradient").details["differentiable_samples"] == 1


# ---------------------------------------------------------------------------
# Gradient uniqueness
# ---------------------------------------------------------------------------


def test_constant_shift_is_detected_as_same_potential(square, split_potential):
    report = check_ae_gradient_uniqueness(split_potential, split_potential.shifted(7.0), square.scaled(0.8))
    assert report.hypothesis_holds
    assert report.passed
    assert report.sup_deviation <= 1e-9


def test_tilted_potential_violates_the_hypothesis(square, split_potential):
    tilted = PLConvexFunction(split_potential.slopes + np.array([0.25, 0.0]), split_potential.intercepts)
    report = check_ae_gradient_uniqueness(split_potential, tilted, square.scaled(0.8))
    assert not report.hypothesis_holds
    assert report.differing_nodes


# ---------------------------------------------------------------------------
# MA continuity
# ---------------------------------------------------------------------------


def test_ma_continuity_along_the_sequence(square, uniform_square, two_atoms_square):
    sol = solve_dual(square, uniform_square, two_atoms_square)
    seq = make_decreasing_sequence(sol.u, square, LEMMA_A_SCHEDULE)
    result = ma_continuity_series(seq, uniform_square, two_atoms_square, sol.diagram.cells)
    assert result.passed
    assert result.series[-1] <= result.series[0]


def test_ma_continuity_rejects_sampled_sequences(unit_interval):
    grid = UniformGrid.box([-4.0], [4.0], 161)
    base = SampledFunction.from_callable(grid, lambda x: np.maximum(0.0, x[:, 0]))
    seq = make_decreasing_sequence(base, unit_interval, [0.5, 0.25])
    g = Density.uniform(unit_interval)
    mu = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    sol = solve_dual(unit_interval, g, mu)
    with pytest.raises(InvalidInputError):
        ma_continuity_series(seq, g, mu, sol.diagram.cells)