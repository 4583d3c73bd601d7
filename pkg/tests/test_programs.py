"""Tests for coupling-class statements, program compilation and membership."""

from fractions import Fraction

import numpy as np
import pytest

from causal_ot.exceptions import (
    InfeasibleKernelError,
    MarginalNotCompatibleError,
    MuNotCompatibleError,
    ShapeMismatchError,
)
from causal_ot.model import CoordinateSpace, Dag, product_measure
from causal_ot.programs import (
    Coupling,
    assemble,
    bicausal_statements,
    build_program,
    causal_statements,
    check_membership,
    compile_bicausal,
    compile_causal,
    compile_marginals,
    kernel_blocks,
    validate_kernel,
)

HALF = Fraction(1, 2)


@pytest.fixture
def uniform_pair():
    spaces = tuple(CoordinateSpace.real_line(f"X{i}", (0, 1)) for i in (1, 2))
    m = product_measure(spaces, [[HALF, HALF], [HALF, HALF]])
    return m, m


@pytest.fixture
def markov_pair(binary_spaces):
    mu = product_measure(binary_spaces, [[HALF, HALF]] * 3)
    nu = product_measure(binary_spaces, [[Fraction(1, 4), Fraction(3, 4)]] * 3)
    return mu, nu


def swap_plan(mu, nu):
    """Y1 = X2 and Y2 = X1 on {0, 1}^2."""
    weights = np.full((4, 4), Fraction(0), dtype=object)
    for a in (0, 1):
        for b in (0, 1):
            weights[2 * a + b, 2 * b + a] = Fraction(1, 4)
    return Coupling(mu=mu, nu=nu, weights=weights)


class TestStatements:
    def test_bicausal_markov(self):
        statements = bicausal_statements(Dag.preset('markov', 3))
        assert len(statements) == 5
        assert [st.vertex for st in statements if st.bilinear] == [3]

    def test_bicausal_linear_is_linear(self):
        statements = bicausal_statements(Dag.preset('linear', 3))
        assert len(statements) == 4
        assert not any(st.bilinear for st in statements)

    def test_causal_markov(self):
        statements = causal_statements(Dag.preset('markov', 3))
        assert len(statements) == 3
        assert [st.vertex for st in statements if st.bilinear] == [3]

    def test_full_graph_has_no_conditions(self):
        assert bicausal_statements(Dag.preset('full', 3)) == []
        assert causal_statements(Dag.preset('full', 3)) == []

    def test_describe(self):
        st = bicausal_statements(Dag.preset('markov', 3))[0]
        assert '_|_' in st.describe()


class TestCompile:
    def test_marginal_rows_and_columns(self, markov_pair):
        mu, nu = markov_pair
        family = compile_marginals(mu, nu)
        assert len(family) == len(mu) + len(nu)
        A, b = family.matrix(len(mu) * len(nu))
        x = np.array(Coupling.product(mu, nu).flat, dtype=float)
        assert np.allclose(A @ x, b)

    def test_bicausal_families(self, markov_pair):
        mu, nu = markov_pair
        linear, bilinear = compile_bicausal(Dag.preset('markov', 3), mu, nu)
        assert (len(linear), len(bilinear)) == (4, 1)
        assert bilinear[0].vertex == 3
        x = np.array(Coupling.product(mu, nu).flat, dtype=float)
        for family in linear:
            A, b = family.matrix(len(x))
            assert np.allclose(A @ x, b)

    def test_linear_graph_has_no_bilinear_family(self, markov_pair):
        mu, nu = markov_pair
        _, bilinear = compile_bicausal(Dag.preset('linear', 3), mu, nu)
        assert bilinear == []

    def test_causal_families(self, markov_pair):
        mu, nu = markov_pair
        linear, bilinear = compile_causal(Dag.preset('markov', 3), mu, nu)
        assert (len(linear), len(bilinear)) == (2, 1)

    def test_causal_needs_compatible_source(self, copy_measure, markov_pair, markov3):
        _, nu = markov_pair
        with pytest.raises(MuNotCompatibleError):
            compile_causal(markov3, copy_measure, nu)
        linear, _ = compile_causal(markov3, nu, copy_measure)
        assert linear

    def test_shape_mismatch(self, markov_pair):
        mu, nu = markov_pair
        with pytest.raises(ShapeMismatchError):
            compile_bicausal(Dag.preset('markov', 2), mu, nu)

class TestBuildProgram:
    def test_linear_graph_compiles_to_lp(self, binary_spaces):
        m = product_measure(binary_spaces, [[HALF, HALF]] * 3)
        program = build_program(Dag.preset('linear', 3), m, m, 'Bicausal')
        assert program.is_linear
        assert program.linear_program().n_variables == 64

    def test_markov_keeps_bilinear_family(self, markov_pair):
        mu, nu = markov_pair
        program = build_program(Dag.preset('markov', 3), mu, nu, 'Bicausal')
        assert not program.is_linear
        sidecar = program.bilinear_sidecar()
        assert len(sidecar['families']) == 1
        assert sidecar['families'][0]['vertex'] == 3

    def test_lp_export(self, markov_pair):
        mu, nu = markov_pair
        cost = np.ones((len(mu), len(nu)))
        text = build_program(Dag.preset('markov', 3), mu, nu, 'Bicausal', cost).to_lp_format()
        assert text.startswith("\\ Bicausal coupling program, 64 variables")
        assert "Subject To" in text
        assert text.rstrip().endswith("End")

    def test_cost_shape(self, markov_pair):
        mu, nu = markov_pair
        with pytest.raises(ShapeMismatchError):
            build_program(Dag.preset('markov', 3), mu, nu, 'Bicausal', np.ones((2, 2)))

    def test_incompatible_marginal(self, copy_measure, markov3):
        with pytest.raises(MarginalNotCompatibleError):
            build_program(markov3, copy_measure, copy_measure, 'Bicausal')


class TestMembership:
    def test_product_plan_is_bicausal(self, markov_pair):
        mu, nu = markov_pair
        result = check_membership(Coupling.product(mu, nu), Dag.preset('markov', 3), mu, nu, 'Bicausal')
        assert result.member
        assert result.max_residual == 0

    def test_identity_is_bicausal(self, markov_pair):
        mu, _ = markov_pair
        assert check_membership(Coupling.identity(mu), Dag.preset('markov', 3), mu, mu, 'Bicausal')

    def test_swap_plan_breaks_joint_condition(self, uniform_pair):
        mu, nu = uniform_pair
        result = check_membership(swap_plan(mu, nu), Dag.preset('empty', 2), mu, nu, 'Bicausal')
        assert not result.member
        assert result.family == 'JointCompatibility'
        assert result.vertex == 2

    def test_swap_plan_is_not_causal(self, uniform_pair):
        mu, nu = uniform_pair
        result = check_membership(swap_plan(mu, nu), Dag.preset('empty', 2), mu, nu, 'Causal')
        assert not result.member
        assert result.vertex == 2

    def test_swap_plan_is_a_coupling(self, uniform_pair):
        mu, nu = uniform_pair
        assert check_membership(swap_plan(mu, nu), Dag.preset('empty', 2), mu, nu, 'Any').member

    def test_transpose_swaps_roles(self, markov_pair):
        mu, nu = markov_pair
        pi = Coupling.product(mu, nu)
        flipped = pi.transpose()
        assert flipped.mu is nu and flipped.nu is mu
        assert flipped.weights.shape == (len(nu), len(mu))
        assert check_membership(flipped, Dag.preset('markov', 3), nu, mu, 'Bicausal').member

    def test_marginal_violation(self, uniform_pair):
        mu, nu = uniform_pair
        weights = np.zeros((4, 4))
        weights[0, 0] = 1.0
        result = check_membership(Coupling(mu=mu, nu=nu, weights=weights), Dag.preset('empty', 2), mu, nu, 'Any')
        assert result.family == 'MarginalRow'


class TestKernelBlocks:
    def test_block_layout(self, markov_pair):
        mu, nu = markov_pair
        blocks = kernel_blocks(Dag.preset('markov', 3), mu, nu)
        assert len(blocks) == 9
        assert [len(blocks.by_vertex[v]) for v in (1, 2, 3)] == [1, 4, 4]

    def test_product_selection_assembles_product_plan(self, markov_pair):
        mu, nu = markov_pair
        blocks = kernel_blocks(Dag.preset('markov', 3), mu, nu)
        pi = assemble(blocks, blocks.product_selection())
        assert np.array_equal(pi.weights, Coupling.product(mu, nu).weights)

    def test_invalid_kernel(self, markov_pair):
        mu, nu = markov_pair
        block = kernel_blocks(Dag.preset('markov', 3), mu, nu).blocks[0]
        with pytest.raises(InfeasibleKernelError):
            validate_kernel(block, np.full(block.shape, 0.5))
