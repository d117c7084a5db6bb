"""
Classifier pipelines
Optional training-set trimming followed by one of the repeated-measures classifiers
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import logging
import numpy as np

from src.covariance import kronecker_group_params, pooled_group_params
from src.dataset import LongitudinalDataset
from src.gee import GeeDesign, JointGeeEstimator, gee_lda_params
from src.lda import LdaModel, lda_predict, lda_train
from src.lsvm import LongitudinalSVM, LsvmModel, lsvm_predict, select_c_grid
from src.robust import TRIM_METHODS, trim_dataset

logger = logging.getLogger(__name__)

CLASSIFIERS = ('lda_pooled', 'lda_kp', 'lda_gee', 'lsvm', 'constant')


@dataclass
class FittedClassifier:
    """A trained model together with the classifier that produced it"""
    name: str
    model: Any
    converged: bool = True
    details: Dict = field(default_factory=dict)

    def predict(self, ds: LongitudinalDataset) -> np.ndarray:
        if self.name == 'constant':
            return np.full(ds.n, int(self.model))
        if self.name == 'lsvm':
            return np.asarray(lsvm_predict(self.model, ds.values))
        return np.asarray(lda_predict(self.model, ds.flat()))

    def to_dict(self) -> Dict:
        model = self.model if self.name == 'constant' else self.model.to_dict()
        return {'classifier': self.name, 'converged': self.converged, 'details': self.details, 'model': model}

    @classmethod
    def from_dict(cls, data: Dict) -> 'FittedClassifier':
        name = data['classifier']
        if name not in CLASSIFIERS:
            raise ValueError(f"Unknown classifier '{name}' in saved model")
        if name == 'constant':
            model = int(data['model'])
        elif name == 'lsvm':
            model = LsvmModel.from_dict(data['model'])
        else:
            model = LdaModel.from_dict(data['model'])
        return cls(name=name, model=model, converged=bool(data.get('converged', True)),
                   details=data.get('details', {}))


def _priors(config: Dict) -> str:
    return config.get('lda', {}).get('priors', 'empirical')


def fit_lda_pooled(train: LongitudinalDataset, config: Dict, seed: int) -> FittedClassifier:
    params = pooled_group_params(train.flat(), train.labels, _priors(config))
    return FittedClassifier('lda_pooled', lda_train(params))


def fit_lda_kp(train: LongitudinalDataset, config: Dict, seed: int) -> FittedClassifier:
    params = kronecker_group_params(train.flat(), train.labels, train.p, train.t, config, _priors(config))
    return FittedClassifier('lda_kp', lda_train(params), converged=params.cov.converged,
                            details={'flipflop_iterations': params.cov.iterations})


def fit_lda_gee(train: LongitudinalDataset, config: Dict, seed: int) -> FittedClassifier:
    design = GeeDesign(t=train.t, p=train.p)
    estimator = JointGeeEstimator(config)
    fit0 = estimator.fit(train.class_flat(0), design)
    fit1 = estimator.fit(train.class_flat(1), design)
    params = gee_lda_params(fit0, train.n0, fit1, train.n1, config.get('gee', {}).get('priors', 'equal'))
    return FittedClassifier('lda_gee', lda_train(params), converged=fit0.converged and fit1.converged,
                            details={'gee_iterations': [fit0.iterations, fit1.iterations]})


def fit_lsvm_selected(train: LongitudinalDataset, config: Dict, seed: int) -> FittedClassifier:
    svm_config = config.get('svm', {})
    grid = svm_config.get('c_grid', np.logspace(-3, 3, 13).tolist())
    c_reg = select_c_grid(train, grid, folds=int(svm_config.get('folds', 5)), seed=seed, config=config)
    model = LongitudinalSVM(config).fit(train, c_reg)
    return FittedClassifier('lsvm', model, converged=model.converged,
                            details={'c_reg': c_reg, 'iterations': model.iterations})


def fit_constant(train: LongitudinalDataset, config: Dict, seed: int) -> FittedClassifier:
    """Majority class of the training data; ties go to class 1"""
    label = 0 if train.n0 > train.n1 else 1
    return FittedClassifier('constant', label)


CLASSIFIER_REGISTRY: Dict[str, Callable[[LongitudinalDataset, Dict, int], FittedClassifier]] = {
    'lda_pooled': fit_lda_pooled,
    'lda_kp': fit_lda_kp,
    'lda_gee': fit_lda_gee,
    'lsvm': fit_lsvm_selected,
    'constant': fit_constant,
}


class ClassifierPipeline:
    """
    Trimming + classifier, trainable repeatedly with different seeds

    Instances are picklable so bootstrap resamples can be fitted in worker processes.
    """

    def __init__(self, classifier: str, trimming: str = 'none', keep_fraction: float = 0.9,
                 config: Optional[Dict] = None):
        if classifier not in CLASSIFIER_REGISTRY:
            raise ValueError(f"Unknown classifier '{classifier}', expected one of {CLASSIFIERS}")
        if trimming not in TRIM_METHODS:
            raise ValueError(f"Unknown trimming method '{trimming}', expected one of {TRIM_METHODS}")
        self.classifier = classifier
        self.trimming = trimming
        self.keep_fraction = float(keep_fraction)
        self.config = config or {}

    @property
    def label(self) -> str:
        return f"{self.classifier}/{self.trimming}"

    def fit(self, ds: LongitudinalDataset, seed: int = 0) -> FittedClassifier:
        train = trim_dataset(ds, self.keep_fraction, self.trimming, seed, self.config)
        fitted = CLASSIFIER_REGISTRY[self.classifier](train, self.config, int(seed))
        fitted.details['n_train'] = train.n
        return fitted

    def __repr__(self) -> str:
        return f"ClassifierPipeline({self.label}, keep_fraction={self.keep_fraction})"


def build_pipelines(config: Dict, classifiers=None, trimming_methods=None, keep_fraction=None):
    """All classifier x trimming combinations from the config sections"""
    classifiers = classifiers or config.get('harness', {}).get('classifiers', ['lda_pooled'])
    trim_config = config.get('trimming', {})
    trimming_methods = trimming_methods or trim_config.get('methods', ['none'])
    if keep_fraction is None:
        keep_fraction = float(trim_config.get('keep_fraction', 0.9))
    return [ClassifierPipeline(c, m, keep_fraction, config) for c in classifiers for m in trimming_methods]
