"""
Shared fixtures for the toricma test modules
"""
import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

# Add repository root to path
sys.path.insert(0, os.path.dirname(__file__))

from services.ma_measure import DiscreteMeasure
from services.polytope import Density, Polytope

hypothesis_settings.register_profile(
    "desk",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
hypothesis_settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis_settings.load_profile(os.getenv("TORICMA_HYPOTHESIS_PROFILE", "desk"))


@pytest.fixture
def square() -> Polytope:
    return Polytope.box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def triangle() -> Polytope:
    return Polytope.polygon([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def unit_interval() -> Polytope:
    return Polytope.interval(0.0, 1.0)


@pytest.fixture
def uniform_square(square) -> Density:
    return Density.uniform(square)


@pytest.fixture
def two_atoms_square() -> DiscreteMeasure:
    """Atoms (0,0) and (1,0) with equal mass: Laguerre cells split at p1 = 1/2."""
    return DiscreteMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
