"""Tests for graphs, measures, compatibility and structural causal models."""

from fractions import Fraction

import pytest

from causal_ot.exceptions import (
    CausalOTValidationError,
    CycleDetectedError,
    EmptySubsetError,
    InvalidVertexError,
    MechanismDomainError,
    ShapeMismatchError,
    SupportExplosionError,
)
from causal_ot.fixtures import binomial_walk, random_compatible_measure, trinomial_walk
from causal_ot.metric import CoordinateMetric
from causal_ot.model import (
    CoordinateSpace,
    Dag,
    DiscreteMeasure,
    Scm,
    TableMechanism,
    classify_structure,
    is_g_compatible,
    lipschitz_estimate,
    marginal,
    mechanism,
    product_measure,
    scm_pushforward,
    validate_dag,
)


class TestValidateDag:
    def test_topological_order_uses_callers_labels(self):
        dag = validate_dag(3, [(3, 1), (1, 2)])
        assert dag.order == (3, 1, 2)
        assert dag.pa(1) == (3,)
        assert dag.pa(3) == ()

    def test_cycle_is_rejected_with_witness(self):
        with pytest.raises(CycleDetectedError) as exc:
            validate_dag(3, [(1, 2), (2, 3), (3, 1)])
        assert len(exc.value.cycle) == 3

    def test_complete_graph_is_accepted(self):
        dag = validate_dag(3, [(i, j) for i in (1, 2, 3) for j in (1, 2, 3) if i != j])
        assert dag.complete
        assert dag.graph_class == 'Full'

    def test_self_loop_rejected(self):
        with pytest.raises(InvalidVertexError):
            validate_dag(2, [(1, 1)])

    def test_endpoint_out_of_range(self):
        with pytest.raises(InvalidVertexError):
            validate_dag(2, [(1, 3)])


class TestGraphClass:
    @pytest.mark.parametrize("kind,expected", [
        ('full', 'Full'),
        ('empty', 'Empty'),
        ('linear', 'Linear'),
        ('markov', 'Markov'),
    ])
    def test_presets(self, kind, expected):
        assert Dag.preset(kind, 4).graph_class == expected

    def test_relabelled_chain_is_markov(self):
        assert validate_dag(3, [(3, 1), (1, 2)]).graph_class == 'Markov'

    def test_general(self):
        assert validate_dag(3, [(1, 3)]).graph_class == 'General'

    def test_small_graphs_prefer_earlier_classes(self):
        assert classify_structure(validate_dag(1, [])) == 'Empty'
        assert classify_structure(validate_dag(2, [(1, 2)])) == 'Linear'
        assert classify_structure(validate_dag(2, [(1, 2), (2, 1)])) == 'Full'

    def test_unknown_preset(self):
        with pytest.raises(CausalOTValidationError):
            Dag.preset('star', 3)

    def test_subgraph(self):
        assert Dag.preset('markov', 3).is_subgraph_of(Dag.preset('linear', 3))
        assert not Dag.preset('linear', 3).is_subgraph_of(Dag.preset('markov', 3))


class TestDiscreteMeasure:
    def test_duplicates_merge_and_zeros_drop(self, binary_spaces):
        m = DiscreteMeasure.from_atoms(binary_spaces, [
            ((0, 0, 0), Fraction(1, 4)),
            ((0, 0, 0), Fraction(1, 4)),
            ((1, 1, 1), Fraction(1, 2)),
            ((1, 0, 1), 0),
        ])
        assert len(m) == 2
        assert m.weight_map[(0, 0, 0)] == Fraction(1, 2)
        assert m.is_exact

    def test_weights_must_sum_to_one(self, binary_spaces):
        with pytest.raises(CausalOTValidationError):
            DiscreteMeasure.from_atoms(binary_spaces, [((0, 0, 0), Fraction(1, 3))])

    def test_unknown_atom(self, binary_spaces):
        with pytest.raises(CausalOTValidationError):
            DiscreteMeasure.from_atoms(binary_spaces, [((0, 0, 2), 1)])

    def test_duplicate_atom_ids_in_space(self):
        with pytest.raises(CausalOTValidationError):
            CoordinateSpace(name='bad', atoms=(0, 0))

    def test_same_distribution_ignores_representation(self, binary_spaces):
        a = product_measure(binary_spaces, [[Fraction(1, 2)] * 2] * 3)
        assert a.same_distribution(a.to_float())


class TestMarginal:
    def test_projection_adds_collapsing_atoms(self, copy_measure):
        m = marginal(copy_measure, [3, 1])
        assert m.n == 2
        assert m.weight_map == {(0, 0): Fraction(1, 2), (1, 1): Fraction(1, 2)}

    def test_empty_subset(self, copy_measure):
        with pytest.raises(EmptySubsetError):
            marginal(copy_measure, [])

    def test_out_of_range(self, copy_measure):
        with pytest.raises(InvalidVertexError):
            marginal(copy_measure, [4])


class TestCompatibility:
    def test_product_measure_fits_every_graph(self, binary_spaces):
        m = product_measure(binary_spaces, [
            [Fraction(1, 3), Fraction(2, 3)],
            [Fraction(1, 2), Fraction(1, 2)],
            [Fraction(1, 5), Fraction(4, 5)],
        ])
        for kind in ('empty', 'markov', 'linear', 'full'):
            assert is_g_compatible(m, Dag.preset(kind, 3)).compatible

    def test_copy_measure_is_not_markov(self, copy_measure, markov3):
        result = is_g_compatible(copy_measure, markov3)
        assert not result
        assert result.vertex == 3
        assert result.max_residual == pytest.approx(0.5)

    def test_copy_measure_fits_direct_edge(self, copy_measure):
        assert is_g_compatible(copy_measure, validate_dag(3, [(1, 3)])).compatible

    def test_mechanism_rows(self, copy_measure):
        table = mechanism(copy_measure, validate_dag(3, [(1, 3)]), 3)
        assert table.row((0,)) == (1, 0)
        assert table.row((1,)) == (0, 1)

    def test_random_compatible_measure(self, rng, markov3, binary_spaces):
        m = random_compatible_measure(rng, markov3, binary_spaces)
        assert is_g_compatible(m, markov3).compatible


class TestScmPushforward:
    def test_binomial_walk(self):
        m = scm_pushforward(binomial_walk(3))
        assert len(m) == 8
        assert set(m.weights) == {Fraction(1, 8)}

    def test_trinomial_walk(self):
        m = scm_pushforward(trinomial_walk(3))
        assert len(m) == 27
        assert is_g_compatible(m, Dag.preset('markov', 3)).compatible

    def test_support_cap(self):
        with pytest.raises(SupportExplosionError):
            scm_pushforward(trinomial_walk(3), max_support=10)

    def test_mechanism_outside_space(self):
        space = CoordinateSpace.real_line('X1', (0, 1))
        s = Scm.from_functions(
            Dag.preset('empty', 1), [space],
            [TableMechanism({((), 0): 0, ((), 1): 2})],
            [[(0, Fraction(1, 2)), (1, Fraction(1, 2))]],
        )
        with pytest.raises(MechanismDomainError):
            scm_pushforward(s)


class TestLipschitzEstimate:
    def test_walk_steps_are_one_lipschitz(self):
        metrics = [CoordinateMetric('absdiff')] * 3
        assert lipschitz_estimate(binomial_walk(3), metrics) == pytest.approx((1.0, 1.0, 1.0))

    def test_constant_mechanism(self):
        space = CoordinateSpace.real_line('X1', (0, 1))
        s = Scm.from_functions(
            Dag.preset('empty', 1), [space],
            [TableMechanism({((), 0): 1, ((), 1): 1})],
            [[(0, Fraction(1, 2)), (1, Fraction(1, 2))]],
        )
        assert lipschitz_estimate(s, [CoordinateMetric('absdiff')]) == (0.0,)

    def test_metric_count(self):
        with pytest.raises(ShapeMismatchError):
            lipschitz_estimate(binomial_walk(3), [CoordinateMetric('absdiff')])
