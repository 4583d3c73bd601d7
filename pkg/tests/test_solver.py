"""Tests for the transport solvers and their dispatch."""

import logging
from fractions import Fraction

import numpy as np
import pytest

from causal_ot.config import SolverConfig
from causal_ot.exceptions import (
    CausalOTValidationError,
    DimensionCapError,
    MarginalNotCompatibleError,
    MuNotCompatibleError,
)
from causal_ot.fixtures import random_instance
from causal_ot.metric import CoordinateMetric, GroundCost
from causal_ot.model import CoordinateSpace, Dag, DiscreteMeasure, product_measure
from causal_ot.programs import check_membership, kernel_blocks
from causal_ot.solver import Solver, enumerate_vertices

HALF = Fraction(1, 2)
ABSDIFF = GroundCost.additive(CoordinateMetric('absdiff'), p=1)


@pytest.fixture
def markov_pair(binary_spaces):
    mu = product_measure(binary_spaces, [[HALF, HALF]] * 3)
    nu = product_measure(binary_spaces, [[Fraction(1, 4), Fraction(3, 4)]] * 3)
    return mu, nu


class TestEnumerateVertices:
    def test_two_by_two(self):
        vertices = enumerate_vertices([HALF, HALF], [HALF, HALF])
        assert len(vertices) == 2
        for v in vertices:
            assert sorted(v.reshape(-1).tolist()) == [0, 0, HALF, HALF]

    def test_birkhoff_polytope(self):
        third = Fraction(1, 3)
        assert len(enumerate_vertices([third] * 3, [third] * 3)) == 6

    def test_single_row(self):
        (vertex,) = enumerate_vertices([1], [Fraction(1, 4), Fraction(3, 4)])
        assert vertex.tolist() == [[Fraction(1, 4), Fraction(3, 4)]]

    def test_dimension_cap(self):
        with pytest.raises(DimensionCapError):
            enumerate_vertices([Fraction(1, 7)] * 7, [1], max_dim=6)

    def test_unequal_totals(self):
        with pytest.raises(CausalOTValidationError):
            enumerate_vertices([HALF, HALF], [HALF])


class TestStandardOt:
    def test_shift(self):
        space = (CoordinateSpace.real_line('X1', (0, 1, 2)),)
        mu = DiscreteMeasure.from_atoms(space, [((0,), HALF), ((1,), HALF)])
        nu = DiscreteMeasure.from_atoms(space, [((1,), HALF), ((2,), HALF)])
        report = Solver(SolverConfig()).solve_standard_ot(mu, nu, ABSDIFF)
        assert report.value == pytest.approx(1.0)
        assert report.is_global
        assert report.residuals['marginal'] == pytest.approx(0.0, abs=1e-12)

    def test_matches_pot(self, rng, solver):
        ot = pytest.importorskip("ot")
        mu, nu = random_instance(rng, Dag.preset('empty', 2), atoms=3, max_row_support=None)
        matrix = rng.uniform(size=(len(mu), len(nu)))
        a = np.array(mu.weights, dtype=float)
        b = np.array(nu.weights, dtype=float)
        assert solver.solve_standard_ot(mu, nu, matrix).value == pytest.approx(ot.emd2(a, b, matrix), abs=1e-9)

    def test_cost_matrix_shape(self, markov_pair, solver):
        mu, nu = markov_pair
        with pytest.raises(CausalOTValidationError):
            solver.solve_standard_ot(mu, nu, np.zeros((2, 2)))


class TestSolveBicausal:
    def test_identical_measures(self, markov_pair, solver):
        mu, _ = markov_pair
        report = solver.solve_bicausal(Dag.preset('markov', 3), mu, mu, ABSDIFF)
        assert report.method == 'identity'
        assert report.value == 0

    def test_full_graph_is_standard_ot(self, markov_pair, solver):
        mu, nu = markov_pair
        full = solver.solve_bicausal(Dag.preset('full', 3), mu, nu, ABSDIFF)
        standard = solver.solve_standard_ot(mu, nu, ABSDIFF)
        assert full.value == pytest.approx(standard.value)

    def test_linear_graph_uses_lp(self, markov_pair, solver):
        mu, nu = markov_pair
        report = solver.solve_bicausal(Dag.preset('linear', 3), mu, nu, ABSDIFF)
        assert report.method == 'lp'
        assert report.is_global

    def test_separable_cost_eliminates(self, markov_pair, solver):
        mu, nu = markov_pair
        report = solver.solve_bicausal(Dag.preset('markov', 3), mu, nu, ABSDIFF)
        assert report.method == 'elimination'
        assert report.is_global
        # per-coordinate |a - b| between Bernoulli(1/2) and Bernoulli(3/4)
        assert report.value == pytest.approx(0.75)

    def test_plan_is_bicausal(self, markov_pair, solver):
        mu, nu = markov_pair
        dag = Dag.preset('markov', 3)
        report = solver.solve_bicausal(dag, mu, nu, ABSDIFF)
        assert check_membership(report.coupling, dag, report.coupling.mu, report.coupling.nu, 'Bicausal')

    def test_incompatible_marginal(self, copy_measure, markov3, solver):
        with pytest.raises(MarginalNotCompatibleError):
            solver.solve_bicausal(markov3, copy_measure, copy_measure, ABSDIFF)

    def test_elimination_matches_exhaustive(self, seeded_instances, solver):
        for dag, mu, nu, _ in seeded_instances[1::2]:
            blocks = kernel_blocks(dag, mu, nu)
            eliminated = solver.solve_bicausal_elimination(blocks, ABSDIFF)
            exhaustive = solver.solve_bicausal_exhaustive(blocks, ABSDIFF)
            assert eliminated.value == pytest.approx(exhaustive.value, abs=1e-9)

    def test_workers_do_not_change_the_optimum(self, rng):
        dag = Dag.preset('markov', 3)
        mu, nu = random_instance(rng, dag, atoms=3, max_row_support=2)
        blocks = kernel_blocks(dag, mu, nu)
        matrix = rng.uniform(size=(len(mu), len(nu)))
        serial = Solver(SolverConfig(workers=1)).solve_bicausal_exhaustive(blocks, matrix)
        threaded = Solver(SolverConfig(workers=4)).solve_bicausal_exhaustive(blocks, matrix)
        assert serial.value == pytest.approx(threaded.value, abs=1e-12)

    def test_cap_falls_back_to_descent(self, markov_pair, rng, caplog):
        mu, nu = markov_pair
        matrix = rng.uniform(size=(len(mu), len(nu)))
        capped = Solver(SolverConfig(max_enum=10, seed=3))
        with caplog.at_level(logging.WARNING, logger='causal_ot.solver'):
            report = capped.solve_bicausal(Dag.preset('markov', 3), mu, nu, matrix)
        assert report.status == 'LocalUpperBound'
        assert report.method == 'bcd'
        assert report.seed == 3
        assert any('block-coordinate descent' in r.getMessage() for r in caplog.records)

        exact = Solver(SolverConfig()).solve_bicausal(Dag.preset('markov', 3), mu, nu, matrix)
        assert exact.is_global
        assert exact.value <= report.value + 1e-9


class TestBlockCoordinateDescent:
    def test_matches_exhaustive_oracle(self, seeded_instances):
        solver = Solver(SolverConfig(restarts=64, seed=0))
        for dag, mu, nu, matrix in seeded_instances:
            blocks = kernel_blocks(dag, mu, nu)
            descent = solver.solve_bicausal_bcd(blocks, matrix)
            best = solver.solve_bicausal_exhaustive(blocks, matrix)
            assert descent.value == pytest.approx(best.value, abs=1e-6)
            for report in (descent, best):
                assert check_membership(report.coupling, dag, report.coupling.mu, report.coupling.nu, 'Bicausal')

    def test_deterministic_for_a_seed(self, seeded_instances):
        dag, mu, nu, matrix = seeded_instances[1]
        blocks = kernel_blocks(dag, mu, nu)
        solver = Solver(SolverConfig(seed=7, restarts=4))
        first = solver.solve_bicausal_bcd(blocks, matrix)
        second = solver.solve_bicausal_bcd(blocks, matrix)
        assert first.value == second.value
        assert first.restarts == 4
        assert first.status == 'LocalUpperBound'


class TestSolveCausal:
    def test_chain_of_bounds(self, seeded_instances, solver):
        for dag, mu, nu, matrix in seeded_instances:
            standard = solver.solve_standard_ot(mu, nu, matrix)
            causal = solver.solve_causal(dag, mu, nu, matrix)
            bicausal = solver.solve_bicausal(dag, mu, nu, matrix)
            assert standard.value <= causal.value + 1e-8
            assert causal.value <= bicausal.value + 1e-8
            assert standard.value - 1e-8 <= causal.lower_bound <= causal.value + 1e-8

    def test_linear_graph_is_global_lp(self, markov_pair, solver):
        mu, nu = markov_pair
        report = solver.solve_causal(Dag.preset('linear', 3), mu, nu, ABSDIFF)
        assert report.method == 'lp'
        assert report.is_global

    def test_incompatible_source(self, copy_measure, markov3, solver):
        with pytest.raises(MuNotCompatibleError):
            solver.solve_causal(markov3, copy_measure, copy_measure, ABSDIFF)


class TestDispatch:
    def test_modes(self, markov_pair, solver):
        mu, nu = markov_pair
        dag = Dag.preset('markov', 3)
        values = {mode: solver.solve(dag, mu, nu, ABSDIFF, mode).value
                  for mode in ('standard', 'causal', 'bicausal')}
        assert values['standard'] <= values['causal'] + 1e-9 <= values['bicausal'] + 2e-9

    def test_graph_required(self, markov_pair, solver):
        mu, nu = markov_pair
        with pytest.raises(CausalOTValidationError):
            solver.solve(None, mu, nu, ABSDIFF, 'bicausal')

    def test_unknown_mode(self, markov_pair, solver):
        mu, nu = markov_pair
        with pytest.raises(CausalOTValidationError):
            solver.solve(Dag.preset('markov', 3), mu, nu, ABSDIFF, 'adapted')


class TestGraphMonotonicity:
    def test_more_edges_never_cost_more(self, seeded_instances, solver):
        for dag, mu, nu, matrix in seeded_instances:
            chain = ['empty', 'markov', 'linear', 'full']
            if dag.graph_class == 'Markov':
                chain = chain[1:]
            values = [solver.solve_bicausal(Dag.preset(kind, 3), mu, nu, matrix) for kind in chain]
            assert all(report.is_global for report in values)
            for coarse, fine in zip(values, values[1:]):
                assert fine.value <= coarse.value + 1e-8
