"""Tests for model files, reports and bundled fixtures."""

import json
from fractions import Fraction

import numpy as np
import pytest

from causal_ot.exceptions import CausalOTFileError, CausalOTValidationError, CycleDetectedError
from causal_ot.fixtures import appendix_b, ate_discontinuity_pair, example_markov, random_scm_pair
from causal_ot.model import is_g_compatible, scm_pushforward
from causal_ot.model_io import dumps_report, load_graph, load_model, parse_graph, parse_model, write_report

WALK_MODEL = {
    "spaces": [
        {"name": "X1", "atoms": [-1, 1], "embedding": [[-1], [1]]},
        {"name": "X2", "atoms": [-2, 0, 2], "embedding": [[-2], [0], [2]]},
    ],
    "graph": {"preset": "markov"},
    "scms": {
        "walk": {
            "mechanisms": [{"affine": {}}, {"affine": {"coefficients": [1]}}],
            "noises": [[[-1, "1/2"], [1, "1/2"]], [[-1, "1/2"], [1, "1/2"]]],
            "lipschitz": [1, 1],
        },
    },
    "measures": {
        "point": {"support": [{"atoms": [1, 2], "weight": 1}]},
    },
    "cost": {"kind": "euclidean", "p": 2},
}


class TestLoadModel:
    def test_appendix_b_bundle(self):
        bundle = appendix_b()
        assert list(bundle.measures) == ['mu', 'nu', 'eta']
        assert bundle.dag.graph_class == 'Markov'
        assert bundle.cost.kind == 'joint'
        assert bundle.cost.matrix.shape == (12, 12)
        assert bundle.cost.matrix[0, 1] == pytest.approx(0.53)
        assert all(w == Fraction(1, 4) for w in bundle.measure('mu').weights)

    def test_bundled_measures_are_compatible(self):
        for bundle in (appendix_b(), example_markov()):
            for m in bundle.measures.values():
                assert is_g_compatible(m, bundle.dag).compatible

    def test_ate_section(self):
        _, _, spec = ate_discontinuity_pair()
        assert (spec.treatment, spec.outcome, spec.delta) == (2, 3, 0.2)

    def test_inline_scm(self):
        bundle = parse_model(WALK_MODEL)
        m = scm_pushforward(bundle.scm('walk'))
        assert len(m) == 4
        assert bundle.measure('point').weight_map == {(1, 2): 1}

    def test_unknown_measure_name(self):
        with pytest.raises(CausalOTValidationError):
            parse_model(WALK_MODEL).measure('absent')

    def test_missing_section(self):
        with pytest.raises(CausalOTValidationError):
            parse_model({"graph": {"n": 1, "edges": []}})

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "walk.json"
        path.write_text(json.dumps(WALK_MODEL))
        assert load_model(str(path)).path == str(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(CausalOTFileError):
            load_model(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CausalOTFileError):
            load_model(str(tmp_path / "absent.json"))


class TestGraphs:
    def test_preset_name(self):
        assert load_graph('linear', 4).graph_class == 'Linear'

    def test_preset_without_count(self):
        with pytest.raises(CausalOTValidationError):
            parse_graph('markov')

    def test_graph_file(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text('{"n": 3, "edges": [[1, 3]]}')
        assert load_graph(str(path)).graph_class == 'General'

    def test_cyclic_graph_file(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text('{"graph": {"n": 2, "edges": [[1, 2], [2, 1]]}}')
        with pytest.raises(CycleDetectedError):
            load_graph(str(path))


class TestReports:
    def test_fractions_and_numpy_values(self):
        text = dumps_report({'weight': Fraction(1, 3), 'whole': Fraction(2, 1),
                             'flag': np.bool_(True), 'row': np.array([1.5, 2.0])})
        data = json.loads(text)
        assert data == {'weight': '1/3', 'whole': 2, 'flag': True, 'row': [1.5, 2.0]}

    def test_keys_are_sorted(self):
        assert dumps_report({'b': 1, 'a': 2}).index('"a"') < dumps_report({'b': 1, 'a': 2}).index('"b"')

    def test_write(self, tmp_path):
        path = tmp_path / "out.json"
        write_report({'value': 1}, str(path))
        assert json.loads(path.read_text()) == {'value': 1}

    def test_unserializable(self):
        with pytest.raises(TypeError):
            dumps_report({'value': object()})


class TestRandomScmPair:
    def test_unperturbed_pair_has_equal_laws(self, rng):
        sa, sb = random_scm_pair(rng, 'diamond', perturb=False)
        assert scm_pushforward(sa).same_distribution(scm_pushforward(sb))

    def test_unknown_shape(self, rng):
        with pytest.raises(CausalOTValidationError):
            random_scm_pair(rng, 'star')
