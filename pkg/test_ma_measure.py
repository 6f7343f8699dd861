"""
Tests for services.ma_measure: discrete measures, real and transported
Monge-Ampère measures of PL functions, pushforward residuals
"""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from services.convex_core import PLConvexFunction
from services.ma_measure import (
    DiscreteMeasure,
    check_class_p,
    ma_real_pl,
    ma_transported_pl,
    pushforward_report,
    pushforward_residual,
    test_function_battery as function_battery,
)
from services.polytope import Density, Polytope
from utils.error_handling import ClassViolationError, InvalidInputError, UnsupportedError


def test_duplicate_atoms_are_merged_in_first_appearance_order():
    mu = DiscreteMeasure(np.array([[0.0], [1.0], [0.0]]), np.array([0.25, 0.5, 0.25]))
    assert mu.size == 2
    assert mu.points[:, 0].tolist() == [0.0, 1.0]
    np.testing.assert_allclose(mu.masses, [0.5, 0.5])


def test_probability_measures_are_validated():
    with pytest.raises(InvalidInputError):
        DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([1.0, 0.0]))
    with pytest.raises(InvalidInputError):
        DiscreteMeasure(np.zeros((0, 1)), np.zeros(0))


@given(st.permutations(range(5)))
def test_relabeling_keeps_the_measure(order):
    rng = np.random.default_rng(5)
    masses = rng.uniform(0.5, 1.5, size=5)
    mu = DiscreteMeasure(rng.normal(size=(5, 2)), masses / masses.sum())
    nu = mu.permuted(list(order))
    f = function_battery(2)[7]
    assert nu.integrate(f) == pytest.approx(mu.integrate(f), abs=1e-14)


def test_real_ma_of_absolute_value_is_two_delta_at_zero():
    ma = ma_real_pl(PLConvexFunction(np.array([[1.0], [-1.0]]), np.zeros(2)))
    assert ma.atoms.points.tolist() == [[0.0]]
    assert ma.total_mass() == pytest.approx(2.0)


def test_real_ma_of_square_support_function_is_unit_delta(square):
    ma = ma_real_pl(square.support_pl())
    assert ma.atoms.size == 1
    np.testing.assert_allclose(ma.atoms.points[0], [0.0, 0.0], atol=1e-12)
    assert ma.total_mass() == pytest.approx(1.0)


def test_flat_slope_hull_has_no_ma_mass():
    F = PLConvexFunction(np.array([[0.0, 0.0], [1.0, 1.0]]), np.zeros(2))
    assert ma_real_pl(F).total_mass() == 0.0


def test_transported_ma_of_hinge_under_linear_density(unit_interval):
    g = Density.polynomial(unit_interval, {(1,): 2.0})
    F = PLConvexFunction(np.array([[0.0], [1.0]]), np.array([0.0, -0.5]))
    ma = ma_transported_pl(F, g, unit_interval)
    assert ma.atoms.points[:, 0].tolist() == pytest.approx([0.5])
    assert ma.total_mass() == pytest.approx(1.0, abs=1e-14)
    assert ma_real_pl(F).total_mass() == pytest.approx(1.0)


def test_transported_ma_rejects_slopes_outside_the_polytope(unit_interval):
    F = PLConvexFunction(np.array([[0.0], [2.0]]), np.zeros(2))
    with pytest.raises(ClassViolationError):
        check_class_p(F, unit_interval)
    with pytest.raises(ClassViolationError):
        ma_transported_pl(F, Density.uniform(unit_interval), unit_interval)


def test_ma_is_limited_to_two_dimensions():
    F = PLConvexFunction(np.vstack([np.zeros(3), np.eye(3)]), np.zeros(4))
    with pytest.raises(UnsupportedError):
        ma_real_pl(F)


@pytest.mark.parametrize("fixture", ["square", "triangle"])
def test_support_function_pushes_forward_to_delta(fixture, request):
    P = request.getfixturevalue(fixture)
    residual = pushforward_residual(P.support_pl(), Density.uniform(P), P, DiscreteMeasure.delta([0.0, 0.0]))
    assert residual <= 1e-12


def test_pushforward_report_names_every_test_function(square):
    report = pushforward_report(square.support_pl(), Density.uniform(square), square, DiscreteMeasure.delta([0.0, 0.0]))
    assert len(report) == len(function_battery(2))
    assert "x1^1*x2^2" in report and "hinge0" in report


def test_function_battery_is_seeded():
    first = [f(np.array([[0.3, -0.7]]))[0] for f in function_battery(2, seed=3)]
    again = [f(np.array([[0.3, -0.7]]))[0] for f in function_battery(2, seed=3)]
    assert first == again
    assert len(first) == 10 + 8
