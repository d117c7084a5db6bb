"""
Configuration loading and scenario validation
Merges config.yaml defaults, scenario parameter files and command-line overrides
"""

import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, Field, conint, confloat, field_validator, model_validator

from src.covariance import ensure_positive_definite
from src.dists import MvnParams, TruncationBounds

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = 'config.yaml'
DEFAULT_SEED_ENV = 'RMCLASS_SEED'

ClassifierName = Literal['lda_pooled', 'lda_kp', 'lda_gee', 'lsvm', 'constant']
TrimMethod = Literal['none', 'mve', 'mcd']
Distribution = Literal['normal', 'lognormal', 'truncnorm']


def load_config(path: Optional[str] = None) -> Dict:
    """Load config.yaml; a missing file yields an empty config"""
    config_path = Path(path or DEFAULT_CONFIG_PATH)
    if not config_path.exists():
        if path is not None:
            raise FileNotFoundError(f"Config file not found: {config_path}")
        logger.warning(f"{config_path} not found, using built-in defaults")
        return {}
    with open(config_path, 'r') as f:
        return yaml.safe_load(f) or {}


def setup_logging(config: Optional[Dict] = None, level: Optional[str] = None) -> logging.Logger:
    """Configure root logging from the 'logging' section"""
    log_config = (config or {}).get('logging', {})
    logging.basicConfig(
        level=getattr(logging, (level or log_config.get('level', 'INFO')).upper(), logging.INFO),
        format=log_config.get('format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
    )
    return logging.getLogger('rmclass')


def resolve_seed(config: Dict, cli_seed: Optional[int] = None, scenario_seed: Optional[int] = None) -> int:
    """CLI flag, then environment variable, then scenario file, then config.yaml"""
    if cli_seed is not None:
        return int(cli_seed)
    random_config = config.get('random', {})
    env_name = random_config.get('seed_env', DEFAULT_SEED_ENV)
    env_value = os.getenv(env_name)
    if env_value:
        try:
            return int(env_value)
        except ValueError:
            raise ValueError(f"{env_name}={env_value!r} is not an integer seed")
    if scenario_seed is not None:
        return int(scenario_seed)
    return int(random_config.get('seed', 0))


class TrimmingConfig(BaseModel):
    methods: List[TrimMethod] = ['none']
    keep_fraction: confloat(gt=0.5, le=1.0) = 0.9
    n_starts: conint(ge=1) = 500
    c_steps: conint(ge=0) = 2
    n_refine: conint(ge=1) = 10
    exhaustive_limit: conint(ge=0) = 12


class FlipFlopConfig(BaseModel):
    tol: confloat(gt=0) = 1e-4
    max_iter: conint(ge=1) = 100


class GeeConfig(BaseModel):
    tol: confloat(gt=0) = 1e-8
    max_iter: conint(ge=1) = 50
    kron_order: Literal['pt', 'tp'] = 'pt'
    correlation_clip: confloat(gt=0, lt=1) = 0.99
    working: Literal['unstructured', 'independence'] = 'unstructured'
    priors: Literal['empirical', 'equal'] = 'equal'


class SvmConfig(BaseModel):
    c_grid: List[confloat(gt=0)] = Field(default_factory=lambda: np.logspace(-3, 3, 13).tolist())
    folds: conint(ge=2) = 5
    tol: confloat(gt=0) = 1e-8
    max_iter: conint(ge=1) = 100
    qp_tol: confloat(gt=0) = 1e-8
    decision_threshold: float = 1.0
    alpha_solver: Literal['libsvm', 'pairwise'] = 'libsvm'
    qp_max_iter: Optional[conint(ge=1)] = None

    @field_validator('c_grid')
    @classmethod
    def grid_not_empty(cls, v):
        if not v:
            raise ValueError("c_grid must contain at least one value")
        return v


class ScenarioConfig(BaseModel):
    """Everything one simulation run needs"""
    name: str = 'scenario'
    p: conint(ge=1)
    t: conint(ge=1)
    variable_names: List[str] = []
    distribution: Distribution = 'normal'
    mu0: List[float]
    mu1: List[float]
    cov: List[List[float]]
    cov1: Optional[List[List[float]]] = None
    bounds: Optional[Dict[str, List[float]]] = None
    n_train: Tuple[conint(ge=2), conint(ge=2)]
    n_test: Tuple[conint(ge=1), conint(ge=1)] = (1000, 1000)
    trimming: TrimmingConfig = TrimmingConfig()
    classifiers: List[ClassifierName] = ['lda_pooled', 'lda_kp', 'lda_gee', 'lsvm']
    replicates: conint(ge=1) = 2000
    seed: int = 0
    priors: Literal['empirical', 'equal'] = 'empirical'
    repair_cov: bool = True
    svm: SvmConfig = SvmConfig()
    flipflop: FlipFlopConfig = FlipFlopConfig()
    gee: GeeConfig = GeeConfig()

    @model_validator(mode='after')
    def check_dimensions(self):
        dim = self.p * self.t
        if len(self.mu0) != dim or len(self.mu1) != dim:
            raise ValueError(f"mu0/mu1 must have p*t = {dim} entries")
        for name, matrix in (('cov', self.cov), ('cov1', self.cov1)):
            if matrix is not None and (len(matrix) != dim or any(len(row) != dim for row in matrix)):
                raise ValueError(f"{name} must be a {dim} x {dim} matrix")
        if self.variable_names and len(self.variable_names) != self.p:
            raise ValueError(f"variable_names must list p = {self.p} names")
        if self.distribution == 'truncnorm' and self.bounds is None:
            raise ValueError("truncnorm scenarios need bounds with lower and upper vectors")
        if self.bounds is not None:
            lower, upper = self.bounds.get('lower'), self.bounds.get('upper')
            if lower is None or upper is None or len(lower) != dim or len(upper) != dim:
                raise ValueError(f"bounds need lower and upper vectors of length {dim}")
            if any(lo >= hi for lo, hi in zip(lower, upper)):
                raise ValueError("every lower bound must be below its upper bound")
        return self

    def class_params(self, label: int) -> MvnParams:
        mean = self.mu0 if label == 0 else self.mu1
        matrix = self.cov1 if (label == 1 and self.cov1 is not None) else self.cov
        cov = np.asarray(matrix, dtype=float)
        if self.repair_cov:
            cov, _ = ensure_positive_definite(cov)
        return MvnParams(mean=np.asarray(mean, dtype=float), cov=cov)

    def truncation_bounds(self) -> Optional[TruncationBounds]:
        if self.bounds is None:
            return None
        return TruncationBounds(lower=np.asarray(self.bounds['lower']), upper=np.asarray(self.bounds['upper']))

    def estimator_config(self) -> Dict[str, Any]:
        """Config dict in the layout the estimator classes read"""
        return {
            'trimming': self.trimming.model_dump(),
            'flipflop': self.flipflop.model_dump(),
            'gee': self.gee.model_dump(),
            'svm': self.svm.model_dump(),
            'lda': {'priors': self.priors},
        }


def _deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = copy.deepcopy(value)
    return merged


def load_scenario(path: str, config: Optional[Dict] = None, overrides: Optional[Dict] = None) -> ScenarioConfig:
    """
    Build a ScenarioConfig from a scenario file

    Args:
        path: scenario YAML (parameters, sizes, optional sections)
        config: loaded config.yaml supplying estimator defaults
        overrides: values from the command line; None entries are ignored

    Returns:
        Validated ScenarioConfig
    """
    config = config or {}
    with open(path, 'r') as f:
        scenario_data = yaml.safe_load(f) or {}

    defaults = {
        'trimming': config.get('trimming', {}),
        'flipflop': config.get('flipflop', {}),
        'gee': config.get('gee', {}),
        'svm': config.get('svm', {}),
        'priors': config.get('lda', {}).get('priors'),
        'classifiers': config.get('harness', {}).get('classifiers'),
    }
    defaults = {k: v for k, v in defaults.items() if v is not None}
    # descriptive entries that the sampler does not use
    scenario_data = {k: v for k, v in scenario_data.items() if k not in ('sigma_t', 'sigma_p')}
    merged = _deep_merge(_deep_merge(defaults, scenario_data), overrides or {})
    merged['seed'] = resolve_seed(config, (overrides or {}).get('seed'), scenario_data.get('seed'))

    scenario = ScenarioConfig(**merged)
    for label in (0, 1):
        matrix = scenario.cov1 if (label == 1 and scenario.cov1 is not None) else scenario.cov
        _, repaired = ensure_positive_definite(np.asarray(matrix, dtype=float))
        if repaired and scenario.repair_cov:
            logger.warning(f"Scenario '{scenario.name}': class {label} covariance is not positive definite; "
                           f"eigenvalues below the floor are raised")
    logger.info(f"Loaded scenario '{scenario.name}' from {path}: p={scenario.p}, t={scenario.t}, "
                f"n_train={scenario.n_train}, distribution={scenario.distribution}")
    return scenario
