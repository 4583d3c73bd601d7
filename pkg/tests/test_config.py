"""Tests for configuration layering."""

import pytest

from causal_ot.config import SolverConfig
from causal_ot.exceptions import CausalOTConfigError, CausalOTFileError


class TestSolverConfig:
    def test_defaults(self):
        config = SolverConfig()
        assert config.seed == 0
        assert config.workers == 1
        assert config.restarts == 16
        assert not config.exact

    def test_replace_skips_none(self):
        config = SolverConfig().replace(seed=5, restarts=None)
        assert config.seed == 5
        assert config.restarts == 16

    def test_unknown_key(self):
        with pytest.raises(CausalOTConfigError):
            SolverConfig().replace(threads=4)

    @pytest.mark.parametrize("field,value", [
        ('tol', 0),
        ('workers', 0),
        ('max_enum', 2.5),
        ('restarts', True),
        ('seed', -1),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(CausalOTConfigError):
            SolverConfig(**{field: value})


class TestFromEnv:
    def test_variables_override_base(self):
        environ = {
            'CAUSAL_OT_WORKERS': '4',
            'CAUSAL_OT_SEED': '9',
            'CAUSAL_OT_TOL': '1e-6',
            'CAUSAL_OT_EXACT': 'yes',
        }
        config = SolverConfig.from_env(SolverConfig(restarts=3), environ)
        assert config.workers == 4
        assert config.seed == 9
        assert config.tol == 1e-6
        assert config.exact
        assert config.restarts == 3

    def test_empty_values_are_ignored(self):
        assert SolverConfig.from_env(environ={'CAUSAL_OT_SEED': ''}).seed == 0

    def test_malformed_value(self):
        with pytest.raises(CausalOTConfigError):
            SolverConfig.from_env(environ={'CAUSAL_OT_EXACT': 'maybe'})

    def test_reads_process_environment(self, monkeypatch):
        monkeypatch.setenv('CAUSAL_OT_RESTARTS', '7')
        assert SolverConfig.from_env().restarts == 7


class TestFromFile:
    def test_toml_section(self, tmp_path):
        path = tmp_path / "solver.toml"
        path.write_text("[causal_ot]\nseed = 11\nmax_enum = 1000\n")
        config = SolverConfig.from_file(str(path))
        assert config.seed == 11
        assert config.max_enum == 1000

    def test_json_flat(self, tmp_path):
        path = tmp_path / "solver.json"
        path.write_text('{"restarts": 2, "exact": true}')
        config = SolverConfig.from_file(str(path), base=SolverConfig(seed=3))
        assert config.restarts == 2
        assert config.exact
        assert config.seed == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(CausalOTFileError):
            SolverConfig.from_file(str(tmp_path / "absent.toml"))

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "solver.toml"
        path.write_text("seed = = 1\n")
        with pytest.raises(CausalOTFileError):
            SolverConfig.from_file(str(path))

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "solver.json"
        path.write_text('{"threads": 2}')
        with pytest.raises(CausalOTConfigError):
            SolverConfig.from_file(str(path))
