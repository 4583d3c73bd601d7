"""Shared fixtures for the causal_ot test suite."""

from fractions import Fraction

import numpy as np
import pytest

from causal_ot import CausalOT, SolverConfig
from causal_ot.fixtures import random_instance
from causal_ot.model import CoordinateSpace, Dag, DiscreteMeasure
from causal_ot.solver import Solver


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def config():
    return SolverConfig(seed=0)


@pytest.fixture
def solver(config):
    return Solver(config)


@pytest.fixture
def engine(config):
    return CausalOT(config)


@pytest.fixture
def binary_spaces():
    """Three copies of {0, 1} embedded in R."""
    return tuple(CoordinateSpace.real_line(f"X{i}", (0, 1)) for i in range(1, 4))


@pytest.fixture
def markov3():
    return Dag.preset('markov', 3)


@pytest.fixture
def copy_measure(binary_spaces):
    """X1, X2 independent fair coins and X3 = X1 (not Markov along 1 -> 2 -> 3)."""
    q = Fraction(1, 4)
    return DiscreteMeasure.from_atoms(
        binary_spaces,
        [((a, b, a), q) for a in (0, 1) for b in (0, 1)],
    )



@pytest.fixture(scope='session')
def seeded_instances():
    """100 random (dag, mu, nu, cost matrix) instances on three vertices with three atoms each.

    Even instances are product pairs on the empty graph, odd ones Markov pairs.
    """
    rng = np.random.default_rng(2024)
    instances = []
    for i in range(100):
        dag = Dag.preset('empty' if i % 2 == 0 else 'markov', 3)
        mu, nu = random_instance(rng, dag, atoms=3, max_row_support=2)
        instances.append((dag, mu, nu, rng.uniform(size=(len(mu), len(nu)))))
    return instances
