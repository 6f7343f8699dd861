"""
Tests for services.toric_bridge: moment maps, class P / P+ membership,
toric potentials and the one-dimensional complex/real MA factor
"""
import math

import numpy as np
import pytest
from scipy import special

from services.convex_core import (
    PLConvexFunction,
    SampledFunction,
    SmoothConvexFunction,
    UniformGrid,
    quadratic,
    softplus,
)
from services.polytope import Polytope
from services.toric_bridge import (
    ToricPotential,
    class_membership,
    complex_real_factor_check,
    moment_image_check,
    moment_map,
    real_ma_mass,
    toric_reference_potential,
)
from utils.error_handling import ClassViolationError, InvalidInputError, UnsupportedError


def softplus_mixture(seed: int) -> SmoothConvexFunction:
    """sum_k w_k log(1 + exp(x - s_k)) with sum w_k = 1: gradient range (0, 1)."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(k))
    s = rng.uniform(-3.0, 3.0, size=k)

    def value(x):
        return np.logaddexp(0.0, x[:, :1] - s[None, :]) @ w

    def gradient(x):
        return (special.expit(x[:, :1] - s[None, :]) @ w).reshape(-1, 1)

    def hessian(x):
        e = special.expit(x[:, :1] - s[None, :])
        return ((e * (1.0 - e)) @ w).reshape(-1, 1, 1)

    return SmoothConvexFunction(1, value, gradient, hessian, name=f"softplus_mix[{seed}]")


# ---------------------------------------------------------------------------
# Moment map and image
# ---------------------------------------------------------------------------


def test_moment_map_of_pl_function_at_smooth_point_and_kink(square):
    F = square.support_pl()
    smooth = moment_map(F, [1.0, 2.0])
    assert smooth.differentiable
    np.testing.assert_allclose(smooth.value, [1.0, 1.0])
    kink = moment_map(F, [0.0, 0.0])
    assert not kink.differentiable
    assert kink.subgradient.contains([0.5, 0.5])


def test_moment_map_shift(square):
    value = moment_map(toric_reference_potential(square), [0.0, 0.0], c=[1.0, -1.0]).value
    np.testing.assert_allclose(value, [1.5, -0.5], atol=1e-12)


def test_moment_map_of_sampled_potential():
    grid = UniformGrid.box([-4.0], [4.0], 801)
    F = SampledFunction.from_callable(grid, lambda x: np.logaddexp(0.0, x[:, 0]))
    value = moment_map(F, [0.0])
    assert value.differentiable
    assert value.value[0] == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("fixture", ["square", "triangle"])
def test_reference_potential_maps_into_the_polytope(fixture, request):
    P = request.getfixturevalue(fixture)
    report = moment_image_check(toric_reference_potential(P), P)
    assert report.passed
    assert report.checked_nodes > 0


def test_quadratic_escapes_the_polytope(square):
    report = moment_image_check(quadratic(2), square)
    assert not report.passed
    assert report.max_violation > 1.0


# ---------------------------------------------------------------------------
# Class membership
# ---------------------------------------------------------------------------


def test_support_function_is_in_p_plus(square):
    verdict = class_membership(square.support_pl(), square)
    assert verdict.in_P is True
    assert verdict.in_P_plus is True


def test_reference_potential_is_in_p_plus(square):
    verdict = class_membership(toric_reference_potential(square), square)
    assert verdict.in_P is True
    assert verdict.in_P_plus is True


def test_smaller_slope_set_is_in_p_but_not_p_plus(square):
    F = PLConvexFunction(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2))
    verdict = class_membership(F, square)
    assert verdict.in_P is True
    assert verdict.in_P_plus is False


def test_quadratic_is_not_in_p(square):
    verdict = class_membership(quadratic(2), square)
    assert verdict.in_P is False
    assert verdict.in_P_plus is False


def test_sampled_membership_uses_nested_windows(unit_interval):
    grid = UniformGrid.box([-20.0], [20.0], 401)
    F = SampledFunction.from_callable(grid, lambda x: np.logaddexp(0.0, x[:, 0]))
    verdict = class_membership(F, unit_interval)
    assert verdict.radii == pytest.approx([5.0, 10.0, 20.0])
    assert verdict.in_P is True


def test_toric_potential_with_zero_relative_part(square):
    grid = UniformGrid.box([-6.0, -6.0], [6.0, 6.0], [49, 49])
    pot = ToricPotential(toric_reference_potential(square), SampledFunction(grid, np.zeros(grid.size)), square)
    assert pot.is_convex()
    assert pot.in_class().in_P is True
    nodes = grid.nodes()[:5]
    np.testing.assert_allclose(pot.values(nodes), toric_reference_potential(square).values(nodes), atol=1e-12)


def test_toric_potential_dimension_must_match(square):
    grid = UniformGrid.box([-1.0], [1.0], 5)
    with pytest.raises(InvalidInputError):
        ToricPotential(toric_reference_potential(square), SampledFunction(grid, np.zeros(5)), square)


# ---------------------------------------------------------------------------
# Real and complex MA in dimension one
# ---------------------------------------------------------------------------


def test_softplus_total_real_mass_is_one():
    assert real_ma_mass(softplus(), (-40.0, 40.0)) == pytest.approx(1.0, abs=1e-8)


def test_real_mass_of_hinge_counts_the_kink():
    F = PLConvexFunction(np.array([[0.0], [1.0]]), np.zeros(2))
    assert real_ma_mass(F, (-1.0, 1.0)) == pytest.approx(1.0)


def test_softplus_factor_ratio(unit_interval):
    check = complex_real_factor_check(softplus(), unit_interval)
    assert check.passed
    assert check.ratio == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_factor_ratio_for_random_potentials_in_p_plus(seed, unit_interval):
    check = complex_real_factor_check(softplus_mixture(seed), unit_interval)
    assert check.ratio == pytest.approx(1.0, abs=1e-6)


def test_factor_ratio_with_a_test_function(unit_interval):
    check = complex_real_factor_check(softplus(), unit_interval, f=lambda x: math.exp(-x * x))
    assert check.ratio == pytest.approx(1.0, abs=1e-6)


def test_factor_check_needs_one_dimension_and_strict_convexity(square, unit_interval):
    with pytest.raises(UnsupportedError):
        complex_real_factor_check(toric_reference_potential(square), square)
    F = SmoothConvexFunction(1, lambda x: x[:, 0], lambda x: np.ones_like(x), lambda x: np.zeros((x.shape[0], 1, 1)))
    with pytest.raises(InvalidInputError):
        complex_real_factor_check(F, unit_interval)


def test_factor_check_rejects_potentials_outside_the_class(unit_interval):
    # 2 log(1 + e^x) has gradient range (0, 2), which leaves [0, 1]
    doubled = softplus().plus(softplus())
    with pytest.raises(ClassViolationError):
        complex_real_factor_check(doubled, unit_interval)
    wider = Polytope.interval(0.0, 2.0)
    assert complex_real_factor_check(doubled, wider).ratio == pytest.approx(1.0, abs=1e-6)
