"""
Performance evaluation
Confusion-based metrics, Mardia's multivariate skewness test and the .632+ bootstrap
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import logging
import numpy as np
from scipy.stats import chi2

from src.dataset import LongitudinalDataset
from src.errors import EstimationError

logger = logging.getLogger(__name__)

MEASURES = ('accuracy', 'youden', 'sensitivity', 'specificity')
CI_METHODS = ('displayed', 'basic')
MIN_BOOTSTRAP = 50
MAX_REDRAWS = 10


def default_workers(threads: Optional[int]) -> int:
    """Worker processes for a threads setting; unset means one per CPU"""
    return max(1, int(threads)) if threads else (os.cpu_count() or 1)


@dataclass(frozen=True)
class MetricSet:
    """Discrimination measures for one train/test evaluation"""
    accuracy: float
    youden: float
    sensitivity: float
    specificity: float
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity_undefined: bool = False
    specificity_undefined: bool = False

    def value(self, measure: str) -> float:
        if measure not in MEASURES:
            raise ValueError(f"Unknown measure '{measure}', expected one of {MEASURES}")
        return float(getattr(self, measure))

    def to_dict(self) -> Dict:
        return asdict(self)


def confusion_metrics(truth: Sequence[int], pred: Sequence[int], positive_class: int = 1) -> MetricSet:
    """
    Accuracy, Youden index |sens + spec - 1|, sensitivity and specificity

    0/0 rates are reported as 0 and flagged.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"Length mismatch: truth {truth.shape} vs pred {pred.shape}")
    if truth.size < 1:
        raise ValueError("metrics need at least one observation")

    positive_truth = truth == positive_class
    positive_pred = pred == positive_class
    tp = int(np.sum(positive_truth & positive_pred))
    fn = int(np.sum(positive_truth & ~positive_pred))
    tn = int(np.sum(~positive_truth & ~positive_pred))
    fp = int(np.sum(~positive_truth & positive_pred))

    sens_undefined = (tp + fn) == 0
    spec_undefined = (tn + fp) == 0
    sensitivity = 0.0 if sens_undefined else tp / (tp + fn)
    specificity = 0.0 if spec_undefined else tn / (tn + fp)

    return MetricSet(
        accuracy=(tp + tn) / truth.size,
        youden=abs(sensitivity + specificity - 1.0),
        sensitivity=sensitivity,
        specificity=specificity,
        tp=tp, fp=fp, tn=tn, fn=fn,
        sensitivity_undefined=sens_undefined,
        specificity_undefined=spec_undefined,
    )


@dataclass(frozen=True)
class MardiaResult:
    b1p: float
    chi2: float
    df: int
    pvalue: float
    n: int
    d: int


def mardia_skewness(data: np.ndarray) -> MardiaResult:
    """
    Mardia's multivariate skewness b_{1,p} and its chi-square test

    Uses the maximum likelihood (divisor n) covariance.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if n <= d:
        raise ValueError(f"Mardia's test needs n > d, got n={n}, d={d}")
    centered = data - data.mean(axis=0)
    S = centered.T @ centered / n
    if np.linalg.matrix_rank(S) < d:
        raise EstimationError("singular sample covariance in Mardia's test")
    S_inv = np.linalg.inv(S)

    G = centered @ S_inv @ centered.T
    b1p = float(np.sum(G ** 3) / n ** 2)
    statistic = n * b1p / 6.0
    df = d * (d + 1) * (d + 2) // 6
    return MardiaResult(b1p=b1p, chi2=statistic, df=df, pvalue=float(chi2.sf(statistic, df)), n=n, d=d)


@dataclass(frozen=True)
class BootstrapEstimate:
    """.632+ point estimate with the per-resample weight interval"""
    measure: str
    theta_632plus: float
    apparent: float
    oob: float
    weight_w: float
    ci: Tuple[float, float]
    b_used: int
    relative_overfitting: float = 0.0
    no_information: float = 0.0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['ci_lo'], data['ci_hi'] = data.pop('ci')
        return data


def no_information_rate(measure: str, truth: np.ndarray, pred: np.ndarray, positive_class: int = 1) -> float:
    """
    Expected measure when predictions are permuted against the truth

    accuracy: sum_c p_c q_c; youden: 0; sensitivity: q_pos; specificity: q_neg
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    q_pos = float(np.mean(pred == positive_class))
    if measure == 'accuracy':
        p_pos = float(np.mean(truth == positive_class))
        return p_pos * q_pos + (1.0 - p_pos) * (1.0 - q_pos)
    if measure == 'youden':
        return 0.0
    if measure == 'sensitivity':
        return q_pos
    if measure == 'specificity':
        return 1.0 - q_pos
    raise ValueError(f"Unknown measure '{measure}'")


def relative_overfitting(apparent: float, oob: float, gamma: float) -> float:
    """R = (apparent - oob) / (apparent - gamma), clipped to [0, 1]"""
    if oob >= apparent or gamma >= apparent:
        return 0.0
    return float(np.clip((apparent - oob) / (apparent - gamma), 0.0, 1.0))


def weight_632plus(apparent: float, oob: float, gamma: float) -> float:
    """w = 0.632 / (1 - 0.368 R)"""
    return 0.632 / (1.0 - 0.368 * relative_overfitting(apparent, oob, gamma))


def stratified_resample(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with replacement within each class, preserving class sizes"""
    parts = []
    for label in (0, 1):
        members = np.flatnonzero(labels == label)
        if members.size:
            parts.append(rng.choice(members, size=members.size, replace=True))
    return np.concatenate(parts)


def _bootstrap_replicate(task) -> Optional[Dict]:
    """One resample: returns OOB and in-sample values per measure, or None when dropped"""
    ds, pipeline, measures, seed_seq, positive_class = task
    rng = np.random.Generator(np.random.Philox(seed_seq))

    for _ in range(MAX_REDRAWS):
        sample = stratified_resample(ds.labels, rng)
        oob_mask = np.ones(ds.n, dtype=bool)
        oob_mask[sample] = False
        if oob_mask.any():
            break
    else:
        return None

    train = ds.subset(sample)
    oob = ds.subset(np.flatnonzero(oob_mask))
    try:
        fitted = pipeline.fit(train, seed=int(rng.integers(0, 2 ** 31 - 1)))
        oob_metrics = confusion_metrics(oob.labels, fitted.predict(oob), positive_class)
        boot_metrics = confusion_metrics(train.labels, fitted.predict(train), positive_class)
    except Exception as e:
        logger.debug(f"Bootstrap replicate dropped: {e}")
        return None

    return {
        'oob': {m: oob_metrics.value(m) for m in measures},
        'boot': {m: boot_metrics.value(m) for m in measures},
    }


def _interval(theta: float, weights: np.ndarray, alpha: float, ci_method: str) -> Tuple[float, float]:
    xi_lo = float(np.quantile(weights, alpha / 2, method='linear'))
    xi_hi = float(np.quantile(weights, 1 - alpha / 2, method='linear'))
    if ci_method == 'basic':
        return theta - xi_hi, theta - xi_lo
    lo, hi = theta - xi_hi, theta + xi_lo
    return (lo, hi) if lo <= hi else (hi, lo)


class Bootstrap632Plus:
    """
    .632+ bootstrap of a classifier pipeline

    The pipeline exposes fit(ds, seed) returning an object with predict(ds).
    """

    def __init__(self, config: Optional[Dict] = None):
        boot_config = (config or {}).get('bootstrap', {})
        self.B = int(boot_config.get('B', 2000))
        self.alpha = float(boot_config.get('alpha', 0.05))
        self.ci_method = boot_config.get('ci_method', 'displayed')
        self.positive_class = int(boot_config.get('positive_class', 1))
        self.workers = default_workers((config or {}).get('harness', {}).get('threads'))
        self.logger = logging.getLogger(__name__)

    def run(self, ds: LongitudinalDataset, pipeline, measures: Sequence[str] = MEASURES,
            seed: int = 0) -> Dict[str, BootstrapEstimate]:
        if self.B < MIN_BOOTSTRAP:
            raise ValueError(f"B must be at least {MIN_BOOTSTRAP}, got {self.B}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.ci_method not in CI_METHODS:
            raise ValueError(f"Unknown ci_method '{self.ci_method}', expected one of {CI_METHODS}")
        for measure in measures:
            if measure not in MEASURES:
                raise ValueError(f"Unknown measure '{measure}'")

        fitted = pipeline.fit(ds, seed=int(seed))
        apparent_pred = fitted.predict(ds)
        apparent_metrics = confusion_metrics(ds.labels, apparent_pred, self.positive_class)

        children = np.random.SeedSequence(int(seed)).spawn(self.B)
        tasks = [(ds, pipeline, tuple(measures), child, self.positive_class) for child in children]
        if self.workers > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                outcomes = list(executor.map(_bootstrap_replicate, tasks, chunksize=max(1, self.B // (4 * self.workers))))
        else:
            outcomes = [_bootstrap_replicate(task) for task in tasks]

        kept = [o for o in outcomes if o is not None]
        if not kept:
            raise EstimationError("all bootstrap replicates failed")
        if len(kept) < self.B:
            self.logger.warning(f"{self.B - len(kept)} of {self.B} bootstrap replicates dropped")

        estimates = {}
        for measure in measures:
            apparent = apparent_metrics.value(measure)
            oob = float(np.mean([o['oob'][measure] for o in kept]))
            gamma = no_information_rate(measure, ds.labels, apparent_pred, self.positive_class)
            r = relative_overfitting(apparent, oob, gamma)
            w = weight_632plus(apparent, oob, gamma)
            theta = (1.0 - w) * apparent + w * oob
            weights = np.array([o['boot'][measure] - apparent for o in kept])
            estimates[measure] = BootstrapEstimate(
                measure=measure, theta_632plus=theta, apparent=apparent, oob=oob, weight_w=w,
                ci=_interval(theta, weights, self.alpha, self.ci_method), b_used=len(kept),
                relative_overfitting=r, no_information=gamma,
            )
            self.logger.debug(f"{measure}: apparent={apparent:.4f} oob={oob:.4f} w={w:.4f} theta={theta:.4f}")
        return estimates


def bootstrap_632plus(ds: LongitudinalDataset, pipeline, measure: str = 'accuracy', B: int = 2000,
                      alpha: float = 0.05, seed: int = 0, ci_method: str = 'displayed',
                      positive_class: int = 1, workers: int = 1) -> BootstrapEstimate:
    """Single-measure convenience wrapper around Bootstrap632Plus"""
    config = {
        'bootstrap': {'B': B, 'alpha': alpha, 'ci_method': ci_method, 'positive_class': positive_class},
        'harness': {'threads': workers},
    }
    return Bootstrap632Plus(config).run(ds, pipeline, measures=(measure,), seed=seed)[measure]
