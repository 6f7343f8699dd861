"""
Tests for services.polytope: polygon geometry, exact clipping, densities,
quadrature, sampling and the Delzant check
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from services.polytope import (
    Density,
    Polytope,
    clip_halfplane,
    clip_polygon_exact,
    delzant_check_2d,
    edge_integral,
    integrate,
    mass,
    polygon_area,
    sample,
    sample_with_stats,
    support_function,
)
from utils.error_handling import InvalidInputError, NotCheckableError, UnsupportedError

SQUARE_Q = [(Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(1), Fraction(1)), (Fraction(0), Fraction(1))]


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def test_square_basics(square):
    assert square.volume() == pytest.approx(1.0)
    np.testing.assert_allclose(square.centroid(), [0.5, 0.5])
    assert square.contains([[0.5, 0.5], [1.0, 1.0]]).tolist() == [True, True]
    assert not square.contains([1.1, 0.5])[0]
    assert support_function(square, [1.0, -1.0]) == pytest.approx(1.0)


@given(st.integers(min_value=0, max_value=10_000))
def test_support_function_is_homogeneous_and_subadditive(seed):
    rng = np.random.default_rng(seed)
    P = Polytope.from_vertices(rng.normal(size=(int(rng.integers(4, 12)), 2)))
    x, y = rng.normal(scale=3.0, size=(2, 2))
    t = float(rng.uniform(0.01, 50.0))
    assert support_function(P, t * x) == pytest.approx(t * support_function(P, x), rel=1e-12, abs=1e-12)
    assert support_function(P, x + y) <= support_function(P, x) + support_function(P, y) + 1e-12
    assert support_function(P, np.zeros(2)) == 0.0


def test_vertices_are_sorted_counter_clockwise():
    P = Polytope.from_vertices([[1, 1], [0, 0], [1, 0], [0, 1], [0.5, 0.5]])
    assert P.vertices.shape[0] == 4
    assert polygon_area([tuple(v) for v in P.vertices]) > 0


def test_halfspace_description_matches_vertices(square):
    P = Polytope.from_halfspaces([[-1, 0], [1, 0], [0, -1], [0, 1]], [0, 1, 0, 1])
    assert P.volume() == pytest.approx(1.0)
    assert sorted(map(tuple, np.round(P.vertices, 12))) == sorted(map(tuple, square.vertices))


def test_unbounded_or_flat_regions_are_rejected():
    with pytest.raises(InvalidInputError):
        Polytope.from_halfspaces([[1, 0], [0, 1]], [1, 1])
    with pytest.raises(InvalidInputError):
        Polytope.polygon([[0, 0], [1, 1], [2, 2]])


def test_three_dimensional_polytopes_must_be_boxes():
    box = Polytope.from_vertices([[x, y, z] for x in (0, 1) for y in (0, 2) for z in (0, 3)])
    assert box.volume() == pytest.approx(6.0)
    with pytest.raises(UnsupportedError):
        Polytope.from_vertices([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_homothety_about_centroid(square):
    K = square.scaled(0.5)
    np.testing.assert_allclose(K.lower, [0.25, 0.25])
    np.testing.assert_allclose(K.upper, [0.75, 0.75])


# ---------------------------------------------------------------------------
# Clipping
# ---------------------------------------------------------------------------


def test_exact_clip_of_square_by_diagonal():
    piece = clip_polygon_exact(SQUARE_Q, (Fraction(1), Fraction(1)), Fraction(1))
    assert polygon_area(piece) == Fraction(1, 2)


@given(
    st.integers(min_value=-9, max_value=9),
    st.integers(min_value=-9, max_value=9),
    st.fractions(min_value=-3, max_value=3, max_denominator=50),
)
def test_exact_clip_halves_add_up(a, b, c):
    if a == 0 and b == 0:
        return
    n = (Fraction(a), Fraction(b))
    left = clip_polygon_exact(SQUARE_Q, n, c)
    right = clip_polygon_exact(SQUARE_Q, (-n[0], -n[1]), -c)
    area = (polygon_area(left) if left else 0) + (polygon_area(right) if right else 0)
    assert area == 1


def test_float_clip_of_interval(unit_interval):
    piece = clip_halfplane(unit_interval, [2.0], 1.0)
    assert piece.vertices[:, 0].tolist() == [0.0, 0.5]
    assert clip_halfplane(unit_interval, [1.0], -1.0) is None


# ---------------------------------------------------------------------------
# Densities and quadrature
# ---------------------------------------------------------------------------


def test_uniform_density_is_normalized(triangle):
    g = Density.uniform(triangle)
    assert mass(triangle, g) == pytest.approx(1.0, abs=1e-14)
    assert g([0.2, 0.2])[0] == pytest.approx(2.0)


def test_polynomial_density_is_normalized(square):
    g = Density.polynomial(square, {(0, 0): 1.0, (1, 0): 1.0})
    assert mass(square, g) == pytest.approx(1.0, abs=1e-14)
    assert g([0.5, 0.0])[0] == pytest.approx(1.5 / 1.5)


def test_density_vanishing_on_the_boundary_is_allowed(unit_interval):
    g = Density.polynomial(unit_interval, {(1,): 2.0})
    assert g([0.5])[0] == pytest.approx(1.0)
    assert g.C >= 2.0


def test_negative_or_high_degree_density_is_rejected(unit_interval):
    with pytest.raises(InvalidInputError):
        Density.polynomial(unit_interval, {(0,): 1.0, (1,): -3.0})
    with pytest.raises(InvalidInputError):
        Density.polynomial(unit_interval, {(3,): 1.0})


def test_declared_bound_is_checked(unit_interval):
    with pytest.raises(InvalidInputError):
        Density.polynomial(unit_interval, {(0,): 1.0, (1,): 2.0}, C=1.2)


def test_triangle_rule_is_exact_to_degree_five(triangle):
    g = Density.uniform(triangle)
    value = integrate(triangle, g, lambda p: p[:, 0] ** 2 * p[:, 1] ** 3)
    # int_T x^2 y^3 = 2! 3! / 7!, times g = 2
    assert value == pytest.approx(2.0 * 2 * 6 / 5040, rel=1e-13)


def test_interval_rule_is_exact_to_degree_seven(unit_interval):
    g = Density.uniform(unit_interval)
    assert integrate(unit_interval, g, lambda p: p[:, 0] ** 7) == pytest.approx(1.0 / 8.0, rel=1e-13)


def test_mass_of_empty_cell_is_zero(uniform_square):
    assert mass(None, uniform_square) == 0.0


def test_edge_integral_of_uniform_density(square, uniform_square):
    assert edge_integral([0.0, 0.0], [1.0, 1.0], uniform_square) == pytest.approx(math.sqrt(2.0))


@given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.05, max_value=0.95))
def test_mass_is_additive_under_clipping(a, b):
    P = Polytope.box([0.0, 0.0], [1.0, 1.0])
    g = Density.polynomial(P, {(0, 0): 1.0, (1, 1): 1.0})
    normal = np.array([1.0, 2.0 * b - 1.0])
    left = clip_halfplane(P, normal, a)
    right = clip_halfplane(P, -normal, -a)
    assert mass(left, g) + mass(right, g) == pytest.approx(1.0, abs=1e-12)


def test_sampling_is_seeded_and_inside(square, uniform_square):
    first = sample(square, uniform_square, 2000, seed=7)
    again = sample(square, uniform_square, 2000, seed=7)
    np.testing.assert_array_equal(first, again)
    assert first.shape == (2000, 2)
    assert square.contains(first, tol=0.0).all()


def test_uniform_sample_mean_is_within_three_sigma_of_the_centroid(square, uniform_square):
    N = 100_000
    points = sample(square, uniform_square, N, seed=7)
    sigma = math.sqrt(1.0 / 12.0)
    assert np.all(np.abs(points.mean(axis=0) - square.centroid()) <= 3.0 * sigma / math.sqrt(N))


def test_single_sample_lies_inside(triangle):
    points = sample(triangle, Density.uniform(triangle), 1, seed=3)
    assert points.shape == (1, 2)
    assert triangle.contains(points, tol=0.0).all()


def test_concentrated_density_keeps_the_acceptance_floor(triangle):
    g = Density.polynomial(triangle, {(0, 0): 0.01, (2, 0): 1.0, (0, 2): 1.0})
    assert g.C > 10.0
    points, stats = sample_with_stats(triangle, g, 20_000, seed=11)
    box_volume = float(np.prod(triangle.upper - triangle.lower))
    assert points.shape == (20_000, 2)
    assert stats.accepted >= 20_000
    assert stats.acceptance_rate >= (1.0 / g.C) * triangle.volume() / box_volume


# ---------------------------------------------------------------------------
# Delzant check
# ---------------------------------------------------------------------------


def test_square_and_simplex_are_delzant(square, triangle):
    assert delzant_check_2d(square).is_delzant
    assert delzant_check_2d(triangle).is_delzant


def test_stretched_triangle_fails_at_its_apex():
    report = delzant_check_2d(Polytope.from_vertices([[0, 0], [2, 0], [0, 1]]))
    assert not report.is_delzant
    assert report.failing_vertices == [[0.0, 1.0]]


def test_irrational_normals_are_not_checkable():
    angles = np.arange(6) * math.pi / 3.0
    hexagon = Polytope.polygon(np.column_stack([np.cos(angles), np.sin(angles)]))
    with pytest.raises(NotCheckableError):
        delzant_check_2d(hexagon)


def test_delzant_check_is_fast(square):
    runs = 200
    start = time.perf_counter()
    for _ in range(runs):
        delzant_check_2d(square)
    assert (time.perf_counter() - start) / runs < 1e-3
