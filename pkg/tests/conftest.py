from __future__ import annotations

import numpy as np
import pytest

from src import constants
from src.core import (
    DEFAULT_TOLERANCES,
    Instance,
    QExponent,
    empirical_distribution,
    validate_distribution,
)
from src.solver import SolverSettings

Q_VALUES = (1.0, 1.5, 2.0, 3.0, float("inf"))
SMOOTH_Q_VALUES = (1.5, 2.0, 3.0)


def make_instance(p_hat, epsilon, q) -> Instance:
    return Instance(validate_distribution(p_hat), epsilon, QExponent.parse(q))


def random_counts_instance(rng: np.random.Generator, n: int, q, eps_low=0.05, eps_high=0.5) -> Instance:
    """Empirical distribution from small integer counts; zeros are allowed."""
    counts = rng.integers(0, 10, size=n)
    if counts.sum() == 0:
        counts[rng.integers(0, n)] = 1
    return Instance(empirical_distribution(counts), float(rng.uniform(eps_low, eps_high)), QExponent.parse(q))


@pytest.fixture
def tolerances():
    return DEFAULT_TOLERANCES


@pytest.fixture
def settings():
    return SolverSettings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def experiment1_instance():
    return make_instance(constants.EXPERIMENT1_P_HAT, constants.EXPERIMENT1_EPSILON, constants.EXPERIMENT1_Q)


@pytest.fixture
def boundary_inf_instance():
    return make_instance(constants.BOUNDARY_QINF_P_HAT, constants.BOUNDARY_QINF_EPSILON, "inf")


@pytest.fixture
def boundary_one_instance():
    return make_instance(constants.BOUNDARY_Q1_P_HAT, constants.BOUNDARY_Q1_EPSILON, 1.0)
