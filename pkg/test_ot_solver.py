"""
Tests for services.ot_solver: Laguerre cells, the Kantorovich dual, the
damped Newton solver, the 1D oracle and the uniqueness probe
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from services.convex_core import UniformGrid
from services.ma_measure import DiscreteMeasure, ma_transported_pl, pushforward_residual
from services.ot_solver import (
    comparison_grid,
    initial_weights,
    kantorovich_dual,
    laguerre_cells,
    oracle_1d,
    solve_dual,
    uniqueness_probe,
)
from services.polytope import Density, Polytope
from tools.verify_suites import random_measure, regular_hexagon
from utils.error_handling import InvalidInputError, NoConvergenceError, UnsupportedError


def random_density_1d(rng: np.random.Generator, P: Polytope) -> Density:
    a, b = float(P.vertices[0, 0]), float(P.vertices[1, 0])
    kind = int(rng.integers(0, 3))
    c = float(rng.uniform(0.0, 2.0))
    if kind == 0:
        return Density.uniform(P)
    if kind == 1:
        # 1 + c (p - a) / (b - a)
        return Density.polynomial(P, {(0,): 1.0 - c * a / (b - a), (1,): c / (b - a)})
    return Density.polynomial(P, {(0,): 1.0, (2,): c})


def breakpoints_of(sol) -> np.ndarray:
    order = np.argsort(sol.targets[:, 0])
    return np.array([sol.diagram.cells[i].vertices[1, 0] for i in order[:-1]])


# ---------------------------------------------------------------------------
# Laguerre cells and the dual
# ---------------------------------------------------------------------------


def test_equal_weights_split_the_square_along_the_bisector(square, two_atoms_square):
    d = laguerre_cells(square, two_atoms_square.points, [0.0, 0.5])
    left, right = d.cells
    assert left.upper[0] == pytest.approx(0.5)
    assert right.lower[0] == pytest.approx(0.5)
    assert d.total_volume() == pytest.approx(1.0)


def test_duplicate_targets_and_three_dimensions_are_rejected(square):
    with pytest.raises(InvalidInputError):
        laguerre_cells(square, [[0.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
    box = Polytope.box([0, 0, 0], [1, 1, 1])
    with pytest.raises(UnsupportedError):
        laguerre_cells(box, [[0.0, 0.0, 0.0]], [0.0])


@given(st.integers(min_value=0, max_value=10_000))
def test_voronoi_start_leaves_no_cell_empty(seed):
    rng = np.random.default_rng(seed)
    P = Polytope.box([0.0, 0.0], [1.0, 1.0]) if seed % 2 else regular_hexagon()
    mu = random_measure(rng, 2, int(rng.integers(2, 12)), low=-3.0, high=4.0)
    d = laguerre_cells(P, mu.points, initial_weights(P, mu.points))
    assert d.nonempty().all()


def test_dual_gradient_is_cell_mass_minus_target(square, uniform_square, rng):
    mu = random_measure(rng, 2, 4)
    w = initial_weights(square, mu.points)
    state = kantorovich_dual(laguerre_cells(square, mu.points, w), uniform_square, mu)
    h = 1e-6
    for i in range(mu.size):
        e = np.zeros(mu.size)
        e[i] = h
        up = kantorovich_dual(laguerre_cells(square, mu.points, w + e), uniform_square, mu, with_hessian=False)
        down = kantorovich_dual(laguerre_cells(square, mu.points, w - e), uniform_square, mu, with_hessian=False)
        assert (up.value - down.value) / (2 * h) == pytest.approx(state.gradient[i], abs=1e-5)
    assert state.gradient == pytest.approx(state.masses - mu.masses)


def test_dual_hessian_matches_mass_differences(square, uniform_square, rng):
    mu = random_measure(rng, 2, 4)
    w = initial_weights(square, mu.points)
    state = kantorovich_dual(laguerre_cells(square, mu.points, w), uniform_square, mu)
    h = 1e-6
    for j in range(mu.size):
        e = np.zeros(mu.size)
        e[j] = h
        up = kantorovich_dual(laguerre_cells(square, mu.points, w + e), uniform_square, mu, with_hessian=False)
        down = kantorovich_dual(laguerre_cells(square, mu.points, w - e), uniform_square, mu, with_hessian=False)
        np.testing.assert_allclose((up.masses - down.masses) / (2 * h), state.hessian[:, j], atol=1e-4)
    np.testing.assert_allclose(state.hessian.sum(axis=1), 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("fixture", ["square", "triangle"])
def test_delta_at_origin_gives_the_support_function(fixture, request):
    P = request.getfixturevalue(fixture)
    sol = solve_dual(P, Density.uniform(P), DiscreteMeasure.delta([0.0, 0.0]))
    nodes = UniformGrid.centered(3.0, 21, 2).nodes()
    np.testing.assert_allclose(sol.u.values(nodes), P.support(nodes), atol=1e-9)
    assert sol.diagnostics.iterations == 0


def test_two_atoms_on_the_interval(unit_interval):
    mu = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    sol = solve_dual(unit_interval, Density.uniform(unit_interval), mu)
    assert breakpoints_of(sol) == pytest.approx([0.5], abs=1e-9)
    xs = np.linspace(-3, 3, 61).reshape(-1, 1)
    expected = np.maximum.reduce([np.zeros(61), 0.5 * xs[:, 0], xs[:, 0] - 0.5])
    np.testing.assert_allclose(sol.u.values(xs), expected, atol=1e-9)


def test_linear_density_moves_the_breakpoint(unit_interval):
    mu = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    g = Density.polynomial(unit_interval, {(1,): 2.0})
    sol = solve_dual(unit_interval, g, mu)
    assert breakpoints_of(sol) == pytest.approx([math.sqrt(0.5)], abs=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_solver_matches_the_1d_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    a = float(rng.uniform(-2.0, 1.0))
    P = Polytope.interval(a, a + float(rng.uniform(0.5, 3.0)))
    g = random_density_1d(rng, P)
    mu = random_measure(rng, 1, int(rng.integers(2, 11)), low=-2.0, high=3.0)

    sol = solve_dual(P, g, mu, tol=1e-12)
    oracle = oracle_1d(P, g, mu)
    np.testing.assert_allclose(breakpoints_of(sol), oracle.breakpoints, atol=1e-8)

    nodes = comparison_grid(P, mu.points).nodes()
    diff = sol.u.values(nodes) - oracle.u.values(nodes)
    assert float(np.max(np.abs(diff - diff.mean()))) <= 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_pushforward_of_random_planar_instances(seed):
    rng = np.random.default_rng(2000 + seed)
    P = Polytope.box([0.0, 0.0], [1.0, 1.0]) if seed % 2 else regular_hexagon()
    g = Density.uniform(P) if seed % 3 else Density.polynomial(P, {(0, 0): 2.0, (1, 0): 0.5})
    mu = random_measure(rng, 2, int(rng.integers(2, 13)))
    sol = solve_dual(P, g, mu, tol=1e-11)
    assert pushforward_residual(sol.u, g, P, mu) <= 1e-7
    assert max(abs(t - 1.0) for t in sol.diagnostics.mass_totals) <= 1e-10

    atoms = ma_transported_pl(sol.u, g, P).atoms
    assert atoms.size == mu.size
    for point, m in zip(mu.points, mu.masses):
        dist = np.linalg.norm(atoms.points - point, axis=1)
        j = int(dist.argmin())
        assert dist[j] <= 1e-7
        assert abs(float(atoms.masses[j]) - float(m)) <= 1e-7


@given(st.integers(min_value=0, max_value=10_000))
def test_cell_masses_sum_to_one_along_the_iteration(seed):
    rng = np.random.default_rng(seed)
    P = Polytope.box([0.0, 0.0], [1.0, 1.0])
    sol = solve_dual(P, Density.uniform(P), random_measure(rng, 2, 5))
    assert sol.diagnostics.converged
    assert all(abs(t - 1.0) <= 1e-10 for t in sol.diagnostics.mass_totals)
    assert all(b >= a - 1e-12 for a, b in zip(sol.diagnostics.dual_values, sol.diagnostics.dual_values[1:]))


@given(st.integers(min_value=0, max_value=10_000))
def test_relabeling_atoms_permutes_the_weights(seed):
    rng = np.random.default_rng(seed)
    P = Polytope.box([0.0, 0.0], [1.0, 1.0])
    g = Density.uniform(P)
    mu = random_measure(rng, 2, 4)
    order = rng.permutation(mu.size)
    first = solve_dual(P, g, mu, tol=1e-11)
    second = solve_dual(P, g, mu.permuted(order), tol=1e-11)
    np.testing.assert_allclose(second.weights, first.weights[order], atol=1e-8)


def test_solver_reports_best_iterate_when_out_of_iterations(square, uniform_square, rng):
    mu = random_measure(rng, 2, 6)
    with pytest.raises(NoConvergenceError) as info:
        solve_dual(square, uniform_square, mu, tol=1e-14, max_iter=1)
    assert info.value.solution is not None
    assert info.value.solution.diagnostics.iterations == 1


def test_mismatched_dimensions_are_rejected(square, uniform_square):
    with pytest.raises(InvalidInputError):
        solve_dual(square, uniform_square, DiscreteMeasure.delta([0.0]))


@pytest.mark.parametrize("seed", range(10))
def test_uniqueness_probe_on_random_instances(seed):
    rng = np.random.default_rng(300 + seed)
    P = Polytope.box([0.0, 0.0], [1.0, 1.0]) if seed % 2 else regular_hexagon()
    g = Density.uniform(P) if seed % 3 else Density.polynomial(P, {(0, 0): 2.0, (1, 0): 0.5})
    mu = random_measure(rng, 2, int(rng.integers(2, 9)))
    assert uniqueness_probe(P, g, mu, seeds=[seed, seed + 1, seed + 2], tol=1e-11) <= 1e-8


def test_oracle_for_two_atoms(unit_interval):
    mu = DiscreteMeasure(np.array([[1.0], [0.0]]), np.array([0.5, 0.5]))
    oracle = oracle_1d(unit_interval, Density.uniform(unit_interval), mu)
    assert oracle.breakpoints.tolist() == pytest.approx([0.5], abs=1e-14)
    assert oracle.diagram.cells[0].vertices[:, 0].tolist() == pytest.approx([0.5, 1.0])
    assert oracle.diagram.cells[1].vertices[:, 0].tolist() == pytest.approx([0.0, 0.5])
