"""Tests for metric validation, repair and ground costs."""

from fractions import Fraction

import numpy as np
import pytest

from causal_ot.exceptions import (
    AsymmetricInputError,
    CausalOTFileError,
    CausalOTValidationError,
    MissingPairError,
    NegativeEntryError,
    NoEmbeddingError,
)
from causal_ot.metric import (
    CoordinateMetric,
    GroundCost,
    cost_matrix,
    load_matrix_csv,
    metric_repair,
    validate_metric,
    write_matrix_csv,
)
from causal_ot.model import CoordinateSpace, DiscreteMeasure

SHORTCUT = [[0, 1, 5], [1, 0, 1], [5, 1, 0]]


class TestValidateMetric:
    def test_reports_triangle_violations(self):
        report = validate_metric(np.array(SHORTCUT, dtype=float))
        assert not report.ok
        assert (1, 3, 2, 3.0) in report.triangle_violations
        assert (3, 1, 2, 3.0) in report.triangle_violations

    def test_metric_is_ok(self):
        assert validate_metric(np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]])).ok

    def test_pseudometric_lists_identical_points(self):
        report = validate_metric(np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]]))
        assert report.ok
        assert report.identical_points == [(1, 2)]

    def test_asymmetry_and_diagonal(self):
        report = validate_metric(np.array([[1, 2], [3, 0]]))
        assert report.asymmetries == [(1, 2)]
        assert report.nonzero_diagonal == [1]

    def test_not_square(self):
        with pytest.raises(CausalOTValidationError):
            validate_metric(np.zeros((2, 3)))


class TestMetricRepair:
    def test_exact_repair_shortens_through_midpoint(self):
        repaired = metric_repair(SHORTCUT)
        assert repaired[0, 2] == 2
        assert repaired[2, 0] == 2
        assert isinstance(repaired[0, 2], Fraction)
        assert validate_metric(repaired.astype(float)).ok

    def test_repair_never_increases_entries(self, rng):
        points = rng.normal(size=(6, 2))
        d = np.linalg.norm(points[:, None] - points[None], axis=2)
        bump = np.triu(rng.uniform(0, 2, size=(6, 6)), 1)
        noisy = d + bump + bump.T
        repaired = metric_repair(noisy)
        assert np.all(repaired <= noisy + 1e-12)
        assert validate_metric(repaired, tol=1e-9).ok

    def test_float_tolerance_keeps_tight_decimals(self):
        m = np.array([[0, 0.1, 0.3], [0.1, 0, 0.2], [0.3, 0.2, 0]])
        assert np.array_equal(metric_repair(m), m)

    def test_metric_is_a_fixpoint(self):
        m = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
        assert np.array_equal(metric_repair(m), m)

    def test_asymmetric_input(self):
        with pytest.raises(AsymmetricInputError):
            metric_repair([[0, 1], [2, 0]])

    def test_negative_input(self):
        with pytest.raises(NegativeEntryError):
            metric_repair([[0, -1], [-1, 0]])


class TestMatrixCsv:
    def test_write_then_load(self, tmp_path):
        path = tmp_path / "m.csv"
        write_matrix_csv(np.array(SHORTCUT, dtype=float), str(path))
        assert np.array_equal(load_matrix_csv(str(path)), np.array(SHORTCUT, dtype=float))

    def test_exact_load(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0.1\n0.1,0\n")
        matrix = load_matrix_csv(str(path), exact=True)
        assert matrix[0, 1] == Fraction(1, 10)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CausalOTFileError):
            load_matrix_csv(str(tmp_path / "absent.csv"))

    def test_non_square_file(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,1,2\n1,0,1\n")
        with pytest.raises(CausalOTFileError):
            load_matrix_csv(str(path))


class TestCoordinateMetric:
    def test_matrix_metric_must_satisfy_triangle(self):
        with pytest.raises(CausalOTValidationError):
            CoordinateMetric(kind='matrix', matrix=np.array(SHORTCUT, dtype=float))

    def test_labelled_matrix(self):
        space = CoordinateSpace(name='colour', atoms=('red', 'green'))
        metric = CoordinateMetric(kind='matrix', matrix=np.array([[0, 3], [3, 0]]), labels=('green', 'red'))
        assert metric.distance_ids(space, 'red', 'green') == 3.0
        assert metric.pairwise(space, space).tolist() == [[0.0, 3.0], [3.0, 0.0]]

    def test_unlabelled_atom(self):
        space = CoordinateSpace(name='colour', atoms=('red', 'blue'))
        metric = CoordinateMetric(kind='matrix', matrix=np.array([[0, 3], [3, 0]]), labels=('green', 'red'))
        with pytest.raises(MissingPairError):
            metric.distance_ids(space, 'red', 'blue')

    def test_absdiff_needs_embedding(self):
        space = CoordinateSpace(name='colour', atoms=('red', 'blue'))
        with pytest.raises(NoEmbeddingError):
            CoordinateMetric(kind='absdiff').pairwise(space, space)

    def test_unknown_kind(self):
        with pytest.raises(CausalOTValidationError):
            CoordinateMetric(kind='manhattan')


class TestGroundCost:
    @pytest.fixture
    def pair(self):
        spaces = (CoordinateSpace.real_line('X1', (0, 1)), CoordinateSpace.real_line('X2', (0, 2)))
        mu = DiscreteMeasure.from_atoms(spaces, [((0, 0), 1)])
        nu = DiscreteMeasure.from_atoms(spaces, [((1, 2), Fraction(1, 2)), ((0, 0), Fraction(1, 2))])
        return mu, nu

    def test_additive(self, pair):
        mu, nu = pair
        d = GroundCost.additive(CoordinateMetric('absdiff')).distances(mu, nu)
        assert d.tolist() == [[0.0, 3.0]]

    def test_euclidean_cost_matrix_is_squared(self, pair):
        mu, nu = pair
        c = cost_matrix(GroundCost.euclidean(p=2), mu, nu)
        assert c[0].tolist() == pytest.approx([0.0, 5.0])

    def test_separable(self):
        assert GroundCost.additive(p=1).separable
        assert not GroundCost.additive(p=2).separable
        assert GroundCost.euclidean(p=2).separable
        assert not GroundCost.euclidean(p=1).separable

    def test_joint_missing_entry(self, pair):
        mu, nu = pair
        cost = GroundCost.joint_from_matrix([[0, 1], [1, 0]], [(0, 0), (1, 2)])
        assert cost.distances(mu, nu).tolist() == [[0.0, 1.0]]
        with pytest.raises(MissingPairError):
            GroundCost.joint_from_matrix([[0]], [(0, 0)]).distances(mu, nu)

    def test_order_below_one(self):
        with pytest.raises(CausalOTValidationError):
            GroundCost.euclidean(p=0.5)
