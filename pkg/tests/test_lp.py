"""Tests for the revised simplex."""

from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from causal_ot.exceptions import IterationLimitError, LPInfeasibleError, LPUnboundedError, ShapeMismatchError
from causal_ot.lp import LinearProgram, solve_lp


class TestSolveLp:
    def test_cheapest_variable(self):
        result = solve_lp(LinearProgram(c=[1, 2], A_eq=[[1, 1]], b_eq=[1]))
        assert result.value == pytest.approx(1.0)
        assert result.x.tolist() == pytest.approx([1.0, 0.0])

    def test_exact_mode_returns_fractions(self):
        lp = LinearProgram(c=[Fraction(1, 3), 1], A_eq=[[1, 1]], b_eq=[Fraction(1, 2)])
        result = solve_lp(lp, exact=True)
        assert result.exact
        assert result.value == Fraction(1, 6)
        assert result.x[0] == Fraction(1, 2)

    def test_infeasible(self):
        with pytest.raises(LPInfeasibleError):
            solve_lp(LinearProgram(c=[1, 1], A_eq=[[1, 1]], b_eq=[-1]))

    def test_unbounded(self):
        with pytest.raises(LPUnboundedError):
            solve_lp(LinearProgram(c=[-1, 0], A_eq=[[1, -1]], b_eq=[0]))

    def test_unbounded_without_constraints(self):
        with pytest.raises(LPUnboundedError):
            solve_lp(LinearProgram(c=[-1], A_eq=np.zeros((0, 1)), b_eq=[]))

    def test_iteration_limit(self):
        lp = LinearProgram(c=[1, 1, 1], A_eq=[[1, 1, 0], [0, 1, 1]], b_eq=[1, 1])
        with pytest.raises(IterationLimitError):
            solve_lp(lp, max_iterations=1)

    def test_redundant_rows(self):
        lp = LinearProgram(c=[1, 3], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
        assert solve_lp(lp).value == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            LinearProgram(c=[1, 2], A_eq=[[1]], b_eq=[1])

    def test_transport_matches_scipy(self, rng):
        a = rng.dirichlet(np.ones(4))
        b = rng.dirichlet(np.ones(5))
        cost = rng.uniform(size=(4, 5))
        rows = np.kron(np.eye(4), np.ones((1, 5)))
        cols = np.kron(np.ones((1, 4)), np.eye(5))
        A = np.vstack([rows, cols])
        rhs = np.concatenate([a, b])
        ours = solve_lp(LinearProgram(c=cost.reshape(-1), A_eq=A, b_eq=rhs))
        reference = linprog(cost.reshape(-1), A_eq=A, b_eq=rhs, bounds=(0, None), method='highs')
        assert ours.value == pytest.approx(reference.fun, abs=1e-9)
        assert A @ ours.x == pytest.approx(rhs, abs=1e-9)
