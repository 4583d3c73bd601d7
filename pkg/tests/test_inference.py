"""Tests for treatment effects and the perturbation bound."""

from fractions import Fraction

import numpy as np
import pytest

from causal_ot.exceptions import (
    CausalOTValidationError,
    DagMismatchError,
    GateFailedError,
    MissingArmError,
)
from causal_ot.fixtures import (
    ate_dag,
    ate_discontinuity_pair,
    binomial_walk,
    random_ate_pairs,
    random_scm_pair,
    random_scm_pairs,
    trinomial_walk,
)
from causal_ot.inference import (
    AteSpec,
    InferenceManager,
    ate,
    ate_lipschitz_constant,
    propensity_gate,
    scm_coupling,
)
from causal_ot.model import DiscreteMeasure, scm_pushforward
from causal_ot.programs import check_membership


@pytest.fixture
def inference(solver):
    return InferenceManager(solver)


@pytest.fixture(scope='module')
def discontinuity():
    return ate_discontinuity_pair()


class TestAte:
    def test_back_door_effects(self, discontinuity):
        mu, nu, spec = discontinuity
        assert float(ate(mu, spec).psi) == pytest.approx(0.0)
        assert float(ate(nu, spec).psi) == pytest.approx(0.5)

    def test_strata_report_arm_means(self, discontinuity):
        _, nu, spec = discontinuity
        result = ate(nu, spec)
        assert len(result.strata) == 2
        assert [float(s['mean_treated']) for s in result.strata] == pytest.approx([1.0, 0.0])

    def test_missing_arm(self, discontinuity):
        mu, _, spec = discontinuity
        lopsided = DiscreteMeasure.from_atoms(mu.spaces, [
            ((0, 1, 1), Fraction(1, 2)),
            ((0.01, 0, 0), Fraction(1, 4)),
            ((0.01, 1, 0), Fraction(1, 4)),
        ])
        with pytest.raises(MissingArmError):
            ate(lopsided, spec)

    def test_treatment_after_outcome(self):
        with pytest.raises(CausalOTValidationError):
            AteSpec(dag=ate_dag(), treatment=3, outcome=2)

    def test_delta_range(self):
        with pytest.raises(CausalOTValidationError):
            AteSpec(dag=ate_dag(), treatment=2, outcome=3, delta=0.7)


class TestPropensityGate:
    def test_bundled_pair_is_in_the_class(self, discontinuity):
        mu, nu, spec = discontinuity
        gate = propensity_gate(mu, spec)
        assert gate
        assert float(gate.min_p) == pytest.approx(0.25)
        assert float(gate.max_p) == pytest.approx(0.75)
        assert propensity_gate(nu, spec).in_set

    def test_tighter_delta_rejects(self, discontinuity):
        mu, _, spec = discontinuity
        strict = AteSpec(dag=spec.dag, treatment=spec.treatment, outcome=spec.outcome, delta=0.3)
        assert not propensity_gate(mu, strict)


class TestLipschitzConstant:
    def test_unit_outcome(self):
        assert ate_lipschitz_constant(0.2, 1.0) == pytest.approx(260.0)

    def test_small_outcomes_use_unit_floor(self):
        assert ate_lipschitz_constant(0.2, 0.0) == ate_lipschitz_constant(0.2, 1.0)

    def test_scales_with_outcome_bound(self):
        assert ate_lipschitz_constant(0.5, 3.0) == pytest.approx(2 * 6 * 5)

    def test_delta_out_of_range(self):
        with pytest.raises(CausalOTValidationError):
            ate_lipschitz_constant(0.0, 1.0)


class TestAteContinuity:
    def test_discontinuity_pair(self, inference, discontinuity):
        mu, nu, spec = discontinuity
        table = inference.ate_continuity_experiment([(mu, nu)], spec)
        row = table.iloc[0]
        assert row['d_psi'] == pytest.approx(0.5)
        assert row['w_1'] <= 1 / 200 + 1e-12
        assert row['w1_ratio'] > 10
        assert bool(row['holds'])

    def test_random_pairs(self, inference):
        pairs, spec = random_ate_pairs(np.random.default_rng(1), 50, delta=0.2)
        table = inference.ate_continuity_experiment(pairs, spec)
        assert len(table) == 50
        assert table['holds'].all()
        assert (table['d_psi'] <= table['bound'] + 1e-9).all()

    def test_gate_failure(self, inference, discontinuity):
        mu, nu, spec = discontinuity
        strict = AteSpec(dag=spec.dag, treatment=spec.treatment, outcome=spec.outcome, delta=0.3)
        with pytest.raises(GateFailedError):
            inference.ate_continuity_experiment([(mu, nu)], strict)

    def test_no_pairs(self, inference, discontinuity):
        _, _, spec = discontinuity
        with pytest.raises(CausalOTValidationError):
            inference.ate_continuity_experiment([], spec)


class TestScmPerturbation:
    def test_random_pairs_satisfy_bound(self, inference):
        pairs = random_scm_pairs(np.random.default_rng(2), 50)
        assert len(pairs) == 50
        for sa, sb in pairs:
            report = inference.scm_perturbation_bound(sa, sb)
            assert report.holds
            assert report.status == 'GlobalOptimal'
            assert report.lhs <= report.witness_cost + 1e-9

    def test_identical_models_give_zero(self, inference, rng):
        sa, sb = random_scm_pair(rng, 'chain', perturb=False)
        report = inference.scm_perturbation_bound(sa, sb)
        assert report.lhs == 0
        assert report.rhs == 0

    def test_constant_recursion(self, inference):
        report = inference.scm_perturbation_bound(binomial_walk(3), trinomial_walk(3))
        # unit Lipschitz constants along a chain give C_i = 1 for every vertex
        assert [v['c'] for v in report.vertices] == [1.0, 1.0, 1.0]
        assert report.constant == 3.0
        assert report.holds

    def test_graph_mismatch(self, inference, rng):
        sa, _ = random_scm_pair(rng, 'chain')
        with pytest.raises(DagMismatchError):
            inference.scm_perturbation_bound(sa, binomial_walk(3))

    def test_witness_is_bicausal(self):
        sa, sb = binomial_walk(3), trinomial_walk(3)
        pi = scm_coupling(sa, sb)
        assert check_membership(pi, sa.dag, scm_pushforward(sa), scm_pushforward(sb), 'Bicausal').member
