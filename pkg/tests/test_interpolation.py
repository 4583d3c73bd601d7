"""Tests for displacement interpolation and the bundled interpolation examples."""

from fractions import Fraction

import pytest

from causal_ot.exceptions import CausalOTValidationError, NoEmbeddingError
from causal_ot.fixtures import binomial_walk, example_markov
from causal_ot.interpolation import (
    InterpolationManager,
    default_grid,
    displacement,
    exception_lambdas,
    lifted_triple,
    path_nodes_frame,
    trajectory_frames,
)
from causal_ot.model import CoordinateSpace, DiscreteMeasure, is_g_compatible, scm_pushforward
from causal_ot.programs import Coupling


@pytest.fixture
def interpolation(solver):
    return InterpolationManager(solver)


@pytest.fixture(scope='module')
def markov_bundle():
    return example_markov()


def point(value):
    space = (CoordinateSpace.real_line('X1', (value,)),)
    return DiscreteMeasure.from_atoms(space, [((value,), 1)])


class TestDisplacement:
    def test_moves_mass_along_the_segment(self):
        kappa = displacement(Coupling.product(point(0), point(2)), Fraction(1, 4))
        assert kappa.spaces[0].atoms == (Fraction(1, 2),)
        assert [float(w) for w in kappa.weights] == [1.0]

    def test_endpoints(self, markov_bundle):
        mu = markov_bundle.measure('mu')
        pi = Coupling.identity(mu)
        assert displacement(pi, 0).same_distribution(mu)
        assert displacement(pi, 1).same_distribution(mu)

    def test_lambda_range(self):
        with pytest.raises(CausalOTValidationError):
            displacement(Coupling.product(point(0), point(1)), 1.5)

    def test_needs_embedding(self):
        space = (CoordinateSpace(name='colour', atoms=('red',)),)
        m = DiscreteMeasure.from_atoms(space, [(('red',), 1)])
        with pytest.raises(NoEmbeddingError):
            displacement(Coupling.identity(m), Fraction(1, 2))


class TestLiftedTriple:
    def test_keeps_endpoints_with_the_interpolant(self):
        triple = lifted_triple(Coupling.product(point(0), point(2)), Fraction(1, 4))
        assert triple.spaces[0].atoms == ((0, 2, Fraction(1, 2)),)
        assert triple.weight_map == {(0,): 1}

    def test_identity_plan_stays_put(self, markov_bundle):
        mu = markov_bundle.measure('mu')
        triple = lifted_triple(Coupling.identity(mu), Fraction(1, 2))
        assert len(triple) == len(mu)
        assert all(x == y == z for space in triple.spaces for x, y, z in space.atoms)


class TestMarkovExample:
    def test_plan_matches_first_coordinates(self, interpolation, markov_bundle):
        path = interpolation.interpolation_path(
            markov_bundle.dag, markov_bundle.measure('mu'), markov_bundle.measure('nu'),
            markov_bundle.cost, 2, [Fraction(k, 4) for k in range(5)],
        )
        assert path.value == pytest.approx(1.0)
        assert path.status == 'GlobalOptimal'
        assert [float(x) for x in path.exception_set] == [0.5]
        assert path.compatible == [True, True, False, True, True]

    def test_exception_at_half(self, interpolation, markov_bundle):
        mu, nu = markov_bundle.measure('mu'), markov_bundle.measure('nu')
        report = interpolation.distances.g_wasserstein_p(markov_bundle.dag, mu, nu, markov_bundle.cost, 2)
        assert [float(x) for x in exception_lambdas(report.coupling, markov_bundle.dag)] == [0.5]
        half = displacement(report.coupling, Fraction(1, 2))
        result = is_g_compatible(half, markov_bundle.dag)
        assert not result.compatible
        assert result.vertex == 3

    def test_standard_mode_skips_assertion(self, interpolation, markov_bundle):
        path = interpolation.interpolation_path(
            markov_bundle.dag, markov_bundle.measure('mu'), markov_bundle.measure('nu'),
            markov_bundle.cost, 2, [0, 1], mode='standard',
        )
        assert path.mode == 'standard'

    def test_unknown_mode(self, interpolation, markov_bundle):
        with pytest.raises(CausalOTValidationError):
            interpolation.interpolation_path(
                markov_bundle.dag, markov_bundle.measure('mu'), markov_bundle.measure('nu'),
                markov_bundle.cost, 2, [0], mode='causal',
            )


class TestWalkExamples:
    @pytest.fixture(scope='class')
    def bundle(self):
        from causal_ot.config import SolverConfig
        from causal_ot.solver import Solver

        return InterpolationManager(Solver(SolverConfig(seed=0))).reproduce_examples()

    def test_standard_plan_is_not_markov(self, bundle):
        walks = bundle['walks']
        assert not walks['standard_membership'].member
        assert len(walks['conditionals']) == 2

    def test_bicausal_path_is_mostly_compatible(self, bundle):
        path = bundle['walks']['bicausal']
        assert sum(path.compatible) >= 9
        for lam, ok, exception in path.flags():
            assert ok or exception

    def test_frames(self, bundle):
        frames = bundle['walks']['frames']
        assert set(frames) == {'mu', 'nu', 'kappa_1_3'}
        nodes, edges = frames['kappa_1_3']
        assert nodes['lambda'].tolist() == pytest.approx([1 / 3] * len(nodes))
        assert nodes.groupby('step')['weight'].sum().tolist() == pytest.approx([1.0, 1.0, 1.0])
        assert list(edges.columns) == ['step', 'value', 'next_value', 'weight', 'lambda']


class TestTrajectoryFrames:
    def test_binomial_tree(self):
        nodes, edges = trajectory_frames(scm_pushforward(binomial_walk(3)), 0)
        last = nodes[nodes['step'] == 3]
        assert last['value'].tolist() == [-3.0, -1.0, 1.0, 3.0]
        assert last['weight'].tolist() == pytest.approx([1 / 8, 3 / 8, 3 / 8, 1 / 8])
        first_edges = edges[edges['step'] == 1]
        assert len(first_edges) == 4
        assert first_edges['weight'].tolist() == pytest.approx([0.25] * 4)

    def test_path_nodes_stack(self, interpolation, markov_bundle):
        path = interpolation.interpolation_path(
            markov_bundle.dag, markov_bundle.measure('mu'), markov_bundle.measure('nu'),
            markov_bundle.cost, 2, [0, 1],
        )
        frame = path_nodes_frame(path)
        assert sorted(set(frame['lambda'])) == [0.0, 1.0]


def test_default_grid():
    grid = default_grid(5)
    assert grid[0] == 0 and grid[-1] == 1
    assert grid[1] == Fraction(1, 4)
    with pytest.raises(CausalOTValidationError):
        default_grid(1)
