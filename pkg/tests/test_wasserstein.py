"""Tests for G-Wasserstein distances and the property suites."""

import pytest

from causal_ot.constants import APPENDIX_B_REFERENCE
from causal_ot.exceptions import CausalOTValidationError, NotASubgraphError
from causal_ot.fixtures import appendix_b, random_product_instance
from causal_ot.metric import CoordinateMetric, GroundCost
from causal_ot.model import Dag
from causal_ot.wasserstein import WassersteinManager

ABSDIFF = GroundCost.additive(CoordinateMetric('absdiff'), p=1)


@pytest.fixture
def distances(solver):
    return WassersteinManager(solver)


@pytest.fixture(scope='module')
def bundle():
    return appendix_b()


class TestAppendixB:
    def test_reference_values(self, distances):
        report = distances.reproduce_appendix_b()
        for pair, expected in APPENDIX_B_REFERENCE.items():
            assert report.reference_value(pair) == pytest.approx(expected, abs=1e-6)
            assert report.distances[pair].is_global
        assert report.violated
        assert report.margin > 0

    def test_repair_leaves_matrix_unchanged(self, distances):
        report = distances.reproduce_appendix_b(repair=True)
        assert report.matrix_unchanged is True
        assert report.violated

    def test_full_graph_respects_triangle(self, distances):
        report = distances.reproduce_appendix_b(graph='full')
        assert report.graph == 'Full'
        assert not report.violated

    def test_report_dict(self, distances):
        out = distances.reproduce_appendix_b().to_dict()
        assert out['triangle_violated'] is True
        assert len(out['distances']) == 3
        assert out['reference_scale'] == 2
        assert 'reference_value' in out['scale_note']
        by_pair = {(d['a'], d['b']): d for d in out['distances']}
        assert by_pair[('mu', 'nu')]['value'] == pytest.approx(0.2925, abs=1e-6)
        assert by_pair[('mu', 'nu')]['reference_value'] == pytest.approx(0.585, abs=1e-6)
        assert by_pair[('mu', 'eta')]['reference_value'] == pytest.approx(2.925, abs=1e-6)


class TestSemimetricSuite:
    def test_counterexample_triangle(self, distances, bundle):
        report = distances.semimetric_suite(bundle.measures, bundle.dag, bundle.cost)
        assert report.is_semimetric
        assert not report.triangle_holds
        assert ('mu', 'nu', 'eta') in [v[:3] for v in report.triangle_violations]

    def test_symmetric_values(self, distances, bundle):
        report = distances.semimetric_suite(bundle.measures, bundle.dag, bundle.cost)
        assert report.values[('mu', 'nu')] == pytest.approx(report.values[('nu', 'mu')], abs=1e-9)


class TestDistances:
    def test_empty_graph_decomposes(self, distances, rng, solver):
        dag = Dag.preset('empty', 3)
        mu, nu = random_product_instance(rng, 3)
        report = distances.g_wasserstein_p(dag, mu, nu, ABSDIFF)
        assert report.graph_class == 'Empty'
        assert report.is_global
        general = solver.solve_bicausal(dag, mu, nu, ABSDIFF)
        assert report.cost == pytest.approx(general.value, abs=1e-9)

    def test_full_graph_is_standard(self, distances, bundle):
        full = Dag.preset('full', 3)
        mu, nu = bundle.measure('mu'), bundle.measure('nu')
        report = distances.g_wasserstein_p(full, mu, nu, bundle.cost)
        assert report.graph_class == 'Full'
        assert report.value == pytest.approx(distances.wasserstein_p(mu, nu, bundle.cost).value)

    def test_order_two_takes_root(self, distances, rng):
        mu, nu = random_product_instance(rng, 2)
        report = distances.wasserstein_p(mu, nu, GroundCost.euclidean(p=2))
        assert report.value == pytest.approx(report.cost ** 0.5)

    def test_mode_ordering(self, distances, rng):
        dag = Dag.preset('markov', 3)
        mu, nu = random_product_instance(rng, 3, atoms=2)
        values = [distances.distance(dag, mu, nu, ABSDIFF, mode=mode).value
                  for mode in ('standard', 'causal', 'bicausal')]
        assert values[0] <= values[1] + 1e-9
        assert values[1] <= values[2] + 1e-9

    def test_causal_mode_needs_graph(self, distances, rng):
        mu, nu = random_product_instance(rng, 2)
        with pytest.raises(CausalOTValidationError):
            distances.distance(None, mu, nu, ABSDIFF, mode='causal')

    def test_emit_plan(self, distances, bundle):
        report = distances.g_wasserstein_p(bundle.dag, bundle.measure('mu'), bundle.measure('nu'), bundle.cost)
        assert 'coupling' in report.to_dict(emit_plan=True)
        assert 'coupling' not in report.to_dict()


class TestEdgeMonotonicity:
    def test_more_edges_never_cost_more(self, distances, bundle):
        report = distances.edge_monotonicity(
            Dag.preset('markov', 3), Dag.preset('linear', 3),
            bundle.measure('mu'), bundle.measure('nu'), bundle.cost,
        )
        assert report.holds
        assert report.certified
        assert report.super.value <= report.sub.value + 1e-9

    def test_not_a_subgraph(self, distances, bundle):
        with pytest.raises(NotASubgraphError):
            distances.edge_monotonicity(
                Dag.preset('linear', 3), Dag.preset('markov', 3),
                bundle.measure('mu'), bundle.measure('nu'), bundle.cost,
            )


class TestFacade:
    def test_managers_share_one_solver(self, engine):
        assert engine.distances.solver is engine.solver
        assert engine.inference.distances is engine.distances
        assert engine.interpolation.distances is engine.distances
        assert engine.config.seed == 0

    def test_distance_through_facade(self, engine, distances, bundle):
        args = (bundle.dag, bundle.measure('mu'), bundle.measure('nu'), bundle.cost)
        assert engine.distances.g_wasserstein_p(*args).value == pytest.approx(distances.g_wasserstein_p(*args).value)
