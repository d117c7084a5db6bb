"""
Unit tests for configuration loading
Verifies seed precedence and scenario validation
"""

from pathlib import Path

import numpy as np
import pytest
import yaml
from pydantic import ValidationError

from src.config import (ScenarioConfig, SvmConfig, TrimmingConfig, load_config, load_scenario, resolve_seed,
                        setup_logging)

ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = ROOT / 'data' / 'scenarios'


def _scenario_dict(**changes):
    base = {
        'name': 'tiny',
        'p': 1,
        't': 2,
        'mu0': [0.0, 0.0],
        'mu1': [1.0, 1.0],
        'cov': [[1.0, 0.5], [0.5, 1.0]],
        'n_train': [10, 10],
    }
    base.update(changes)
    return base


class TestSeedResolution:
    """Seed precedence: flag, environment, scenario file, config.yaml"""

    def setup_method(self):
        self.config = {'random': {'seed': 11, 'seed_env': 'RMCLASS_TEST_SEED'}}

    def test_cli_flag_wins(self, monkeypatch):
        """Test that an explicit seed beats every other source"""
        monkeypatch.setenv('RMCLASS_TEST_SEED', '22')
        assert resolve_seed(self.config, cli_seed=33, scenario_seed=44) == 33

    def test_environment_before_scenario(self, monkeypatch):
        monkeypatch.setenv('RMCLASS_TEST_SEED', '22')
        assert resolve_seed(self.config, scenario_seed=44) == 22

    def test_scenario_before_config(self, monkeypatch):
        monkeypatch.delenv('RMCLASS_TEST_SEED', raising=False)
        assert resolve_seed(self.config, scenario_seed=44) == 44
        assert resolve_seed(self.config) == 11

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv('RMCLASS_TEST_SEED', 'abc')
        with pytest.raises(ValueError, match="not an integer seed"):
            resolve_seed(self.config)


class TestLoadConfig:
    """load_config and logging setup"""

    def test_repository_config(self):
        """Test that the shipped config.yaml parses and has every section"""
        config = load_config(str(ROOT / 'config.yaml'))
        for section in ('random', 'trimming', 'flipflop', 'gee', 'lda', 'svm', 'bootstrap', 'harness', 'paths'):
            assert section in config
        assert len(config['svm']['c_grid']) == 13

    def test_explicit_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(str(tmp_path / 'absent.yaml'))

    def test_default_missing_file(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert load_config() == {}

    def test_setup_logging_returns_named_logger(self):
        assert setup_logging({'logging': {'level': 'DEBUG'}}).name == 'rmclass'


class TestScenarioConfig:
    """ScenarioConfig validation"""

    def test_minimal_scenario(self):
        scenario = ScenarioConfig(**_scenario_dict())
        assert scenario.replicates == 2000
        assert scenario.n_test == (1000, 1000)
        assert scenario.class_params(1).mean.tolist() == [1.0, 1.0]

    def test_mean_length_checked(self):
        with pytest.raises(ValidationError, match="p\\*t = 2"):
            ScenarioConfig(**_scenario_dict(mu0=[0.0]))

    def test_truncnorm_needs_bounds(self):
        with pytest.raises(ValidationError, match="bounds"):
            ScenarioConfig(**_scenario_dict(distribution='truncnorm'))

    def test_bounds_ordered(self):
        with pytest.raises(ValidationError, match="below its upper bound"):
            ScenarioConfig(**_scenario_dict(bounds={'lower': [0.0, 2.0], 'upper': [1.0, 1.0]}))

    def test_unknown_classifier(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(**_scenario_dict(classifiers=['qda']))

    def test_keep_fraction_range(self):
        with pytest.raises(ValidationError):
            TrimmingConfig(keep_fraction=0.5)
        assert TrimmingConfig(keep_fraction=1.0).keep_fraction == 1.0

    def test_empty_c_grid(self):
        with pytest.raises(ValidationError, match="at least one value"):
            SvmConfig(c_grid=[])

    def test_covariance_repaired(self):
        scenario = ScenarioConfig(**_scenario_dict(cov=[[1.0, 1.2], [1.2, 1.0]]))
        assert np.linalg.eigvalsh(scenario.class_params(0).cov).min() > 0

    def test_covariance_kept_without_repair(self):
        cov = [[1.0, 1.2], [1.2, 1.0]]
        scenario = ScenarioConfig(**_scenario_dict(cov=cov, repair_cov=False))
        assert scenario.class_params(0).cov.tolist() == cov

    def test_estimator_config_layout(self):
        config = ScenarioConfig(**_scenario_dict(priors='equal')).estimator_config()
        assert config['lda'] == {'priors': 'equal'}
        assert config['gee']['kron_order'] == 'pt'
        assert config['gee']['priors'] == 'equal'
        assert config['svm']['alpha_solver'] == 'libsvm'


class TestLoadScenario:
    """load_scenario merging"""

    @pytest.mark.parametrize('name,p,t,n_train', [
        ('dataset1', 4, 2, (93, 93)),
        ('dataset2', 4, 2, (42, 142)),
        ('dataset3', 4, 4, (254, 1682)),
    ])
    def test_shipped_scenarios(self, name, p, t, n_train, monkeypatch):
        monkeypatch.delenv('RMCLASS_SEED', raising=False)
        scenario = load_scenario(str(SCENARIO_DIR / f'{name}.yaml'))
        assert (scenario.p, scenario.t, scenario.n_train) == (p, t, n_train)
        assert scenario.truncation_bounds() is not None

    def test_config_defaults_and_overrides(self, tmp_path, monkeypatch):
        monkeypatch.delenv('RMCLASS_SEED', raising=False)
        path = tmp_path / 'tiny.yaml'
        path.write_text(yaml.safe_dump(_scenario_dict(seed=5)))
        config = {'trimming': {'keep_fraction': 0.8}, 'harness': {'classifiers': ['lda_pooled']},
                  'lda': {'priors': 'equal'}}
        overrides = {'replicates': 3, 'classifiers': None, 'trimming': {'methods': ['mcd'], 'keep_fraction': None}}

        scenario = load_scenario(str(path), config, overrides)
        assert scenario.replicates == 3
        assert scenario.classifiers == ['lda_pooled']
        assert scenario.trimming.methods == ['mcd']
        assert scenario.trimming.keep_fraction == 0.8
        assert scenario.priors == 'equal'
        assert scenario.seed == 5

    def test_override_seed(self, tmp_path):
        path = tmp_path / 'tiny.yaml'
        path.write_text(yaml.safe_dump(_scenario_dict(seed=5)))
        assert load_scenario(str(path), {}, {'seed': 9}).seed == 9

    def test_descriptive_factors_ignored(self, tmp_path):
        path = tmp_path / 'tiny.yaml'
        path.write_text(yaml.safe_dump(_scenario_dict(sigma_t=[[1.0, 0.3], [0.3, 1.0]], sigma_p=[[1.0]])))
        assert load_scenario(str(path), {}, {'seed': 1}).name == 'tiny'


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
