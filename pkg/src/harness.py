"""
Simulation study harness
Data simulation -> training-set trimming -> classification -> performance measures
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import logging
import numpy as np
import pandas as pd

from src.classifiers import ClassifierPipeline
from src.config import ScenarioConfig
from src.covariance import correlation_from_covariance, flip_flop, pooled_group_params
from src.dataset import LongitudinalDataset
from src.dists import make_rng, replicate_seed, sample_distribution
from src.evaluation import (MEASURES, MIN_BOOTSTRAP, Bootstrap632Plus, MetricSet, confusion_metrics,
                            default_workers, mardia_skewness)
from src.ingest import load_long_csv

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ['replicate', 'classifier', 'trimming', 'accuracy', 'youden', 'sensitivity', 'specificity',
                  'tp', 'fp', 'tn', 'fn', 'converged', 'runtime_ms', 'error']


@dataclass
class ReplicateResult:
    """One (replicate x classifier x trimming) outcome; metrics is None when the fit failed"""
    replicate: int
    classifier: str
    trimming: str
    metrics: Optional[MetricSet]
    converged: bool
    runtime_ms: float
    error: str = ''
    n_test: int = 0

    @property
    def ok(self) -> bool:
        return self.metrics is not None

    def to_row(self) -> Dict:
        row = {'replicate': self.replicate, 'classifier': self.classifier, 'trimming': self.trimming}
        metrics = self.metrics.to_dict() if self.metrics else {}
        for name in ('accuracy', 'youden', 'sensitivity', 'specificity', 'tp', 'fp', 'tn', 'fn'):
            row[name] = metrics.get(name, np.nan)
        row.update({'converged': self.converged, 'runtime_ms': self.runtime_ms, 'error': self.error})
        return row


@dataclass
class ScenarioResult:
    scenario: str
    distribution: str
    seed: int
    rows: List[ReplicateResult]

    def frame(self) -> pd.DataFrame:
        return results_frame(self.rows)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.rows)


def results_frame(rows: Sequence[ReplicateResult]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in rows], columns=RESULT_COLUMNS)


def simulate_dataset(scenario: ScenarioConfig, distribution: Optional[str], sizes: Tuple[int, int],
                     seed: Union[int, np.random.Generator]) -> LongitudinalDataset:
    """
    Draw class 0 then class 1 from the scenario distribution

    Both classes share one generator, so a seed fixes the whole dataset.
    """
    rng = make_rng(seed)
    distribution = distribution or scenario.distribution
    bounds = scenario.truncation_bounds()
    flat0 = sample_distribution(distribution, scenario.class_params(0), int(sizes[0]), rng, bounds)
    flat1 = sample_distribution(distribution, scenario.class_params(1), int(sizes[1]), rng, bounds)
    return LongitudinalDataset.from_classes(flat0, flat1, scenario.p, scenario.t, scenario.variable_names)


def run_replicate(task) -> List[ReplicateResult]:
    """
    Simulate one train/test pair and evaluate every pipeline on it

    Pipelines share the simulated data and the fit seed, so classifier
    comparisons are paired within a replicate.
    """
    scenario, distribution, replicate, pipelines = task
    rng = make_rng(replicate_seed(scenario.seed, replicate))
    try:
        train = simulate_dataset(scenario, distribution, scenario.n_train, rng)
        test = simulate_dataset(scenario, distribution, scenario.n_test, rng)
    except Exception as e:
        logger.error(f"Replicate {replicate}: simulation failed: {e}")
        return [ReplicateResult(replicate, p.classifier, p.trimming, None, False, 0.0, str(e)) for p in pipelines]
    fit_seed = int(rng.integers(0, 2 ** 31 - 1))

    results = []
    for pipeline in pipelines:
        started = time.perf_counter()
        try:
            fitted = pipeline.fit(train, seed=fit_seed)
            metrics = confusion_metrics(test.labels, fitted.predict(test))
            converged, error = fitted.converged, ''
        except Exception as e:
            logger.debug(f"Replicate {replicate} {pipeline.label} failed: {e}")
            metrics, converged, error = None, False, str(e)
        elapsed = (time.perf_counter() - started) * 1000.0
        results.append(ReplicateResult(replicate, pipeline.classifier, pipeline.trimming, metrics,
                                       converged, elapsed, error, n_test=test.n))
    return results


class ScenarioRunner:
    """Monte Carlo replicates of one scenario, optionally across worker processes"""

    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}
        self.workers = default_workers(self.config.get('harness', {}).get('threads'))
        self.logger = logging.getLogger(__name__)

    def pipelines(self, scenario: ScenarioConfig,
                  trimming_methods: Optional[Sequence[str]] = None) -> List[ClassifierPipeline]:
        estimator_config = scenario.estimator_config()
        methods = list(trimming_methods or scenario.trimming.methods)
        return [ClassifierPipeline(c, m, scenario.trimming.keep_fraction, estimator_config)
                for c in scenario.classifiers for m in methods]

    def run(self, scenario: ScenarioConfig, distribution: Optional[str] = None,
            trimming_methods: Optional[Sequence[str]] = None) -> ScenarioResult:
        distribution = distribution or scenario.distribution
        pipelines = self.pipelines(scenario, trimming_methods)
        tasks = [(scenario, distribution, r, pipelines) for r in range(scenario.replicates)]
        self.logger.info(f"Running '{scenario.name}' ({distribution}): {scenario.replicates} replicates x "
                         f"{len(pipelines)} pipelines on {self.workers} worker(s)")

        if self.workers > 1 and scenario.replicates > 1:
            chunksize = max(1, scenario.replicates // (4 * self.workers))
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                batches = list(executor.map(run_replicate, tasks, chunksize=chunksize))
        else:
            batches = [run_replicate(task) for task in tasks]

        rows = [row for batch in batches for row in batch]
        result = ScenarioResult(scenario=scenario.name, distribution=distribution, seed=scenario.seed, rows=rows)
        if result.n_failed:
            self.logger.warning(f"'{scenario.name}' ({distribution}): {result.n_failed} of {len(rows)} fits failed")
        self.logger.info(f"Finished '{scenario.name}' ({distribution})")
        return result


def run_scenario(scenario: ScenarioConfig, distribution: Optional[str] = None,
                 trimming_methods: Optional[Sequence[str]] = None, threads: Optional[int] = 1) -> ScenarioResult:
    """Convenience function for scenario runs, in-process unless threads > 1"""
    return ScenarioRunner({'harness': {'threads': threads}}).run(scenario, distribution, trimming_methods)


def run_bootstrap(ds: Union[LongitudinalDataset, str, Path], pipelines: Sequence[ClassifierPipeline],
                  B: int = 2000, alpha: float = 0.05, seed: int = 0, config: Optional[Dict] = None,
                  measures: Sequence[str] = MEASURES) -> List[Dict]:
    """
    .632+ estimates for every pipeline x measure on one dataset

    A pipeline whose fit fails on the full data (for example degenerate
    trimming) yields NA cells carrying the error message; the run continues.

    Returns:
        One dict per pipeline x measure
    """
    if B < MIN_BOOTSTRAP:
        raise ValueError(f"B must be at least {MIN_BOOTSTRAP}, got {B}")
    if isinstance(ds, (str, Path)):
        ds = load_long_csv(ds)

    config = dict(config or {})
    config['bootstrap'] = {**config.get('bootstrap', {}), 'B': int(B), 'alpha': float(alpha)}
    bootstrap = Bootstrap632Plus(config)

    cells = []
    for pipeline in pipelines:
        logger.info(f"Bootstrapping {pipeline.label} with B={B}")
        try:
            estimates = bootstrap.run(ds, pipeline, measures=measures, seed=seed)
            error = ''
        except Exception as e:
            logger.warning(f"{pipeline.label}: bootstrap not computable: {e}")
            estimates, error = {}, str(e)
        for measure in measures:
            cell = {'classifier': pipeline.classifier, 'trimming': pipeline.trimming, 'measure': measure}
            if measure in estimates:
                cell.update(estimates[measure].to_dict())
                cell['error'] = ''
            else:
                cell.update({'theta_632plus': np.nan, 'apparent': np.nan, 'oob': np.nan, 'weight_w': np.nan,
                             'ci_lo': np.nan, 'ci_hi': np.nan, 'b_used': 0, 'error': error})
            cells.append(cell)
    return cells


def estimate_scenario(ds: LongitudinalDataset, name: str = 'estimated', config: Optional[Dict] = None) -> Dict:
    """
    Scenario parameters estimated from a reference dataset

    Means and pooled covariance are the plain sample estimates; the time and
    variable correlations come from flip-flop factors of the class-centred data.
    """
    config = config or {}
    ff_config = config.get('flipflop', {})
    flat = ds.flat()
    params = pooled_group_params(flat, ds.labels, 'empirical')

    centered = flat.copy()
    for label, mean in ((0, params.mu0), (1, params.mu1)):
        centered[ds.labels == label] -= mean
    factors = flip_flop(centered, ds.p, ds.t, tol=float(ff_config.get('tol', 1e-4)),
                        max_iter=int(ff_config.get('max_iter', 100)))

    logger.info(f"Estimated scenario '{name}' from n={ds.n} subjects")
    return {
        'name': name,
        'p': ds.p,
        't': ds.t,
        'variable_names': list(ds.variable_names),
        'n_train': [ds.n0, ds.n1],
        'mu0': params.mu0.tolist(),
        'mu1': params.mu1.tolist(),
        'cov': params.cov.tolist(),
        'sigma_t': correlation_from_covariance(factors.sigma_t).tolist(),
        'sigma_p': correlation_from_covariance(factors.sigma_p).tolist(),
        'bounds': {'lower': flat.min(axis=0).tolist(), 'upper': flat.max(axis=0).tolist()},
    }


def mardia_table(datasets: Dict[str, LongitudinalDataset]) -> pd.DataFrame:
    """Mardia skewness on the pooled flat data, one row per dataset"""
    rows = []
    for name, ds in datasets.items():
        try:
            result = mardia_skewness(ds.flat())
            rows.append({'dataset': name, 'b1p': result.b1p, 'chi2': result.chi2, 'df': result.df,
                         'pvalue': result.pvalue, 'n': result.n, 'd': result.d, 'error': ''})
        except Exception as e:
            logger.warning(f"Mardia test failed for {name}: {e}")
            rows.append({'dataset': name, 'b1p': np.nan, 'chi2': np.nan, 'df': np.nan, 'pvalue': np.nan,
                         'n': ds.n, 'd': ds.p * ds.t, 'error': str(e)})
    return pd.DataFrame(rows, columns=['dataset', 'b1p', 'chi2', 'df', 'pvalue', 'n', 'd', 'error'])
