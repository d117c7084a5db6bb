"""
Test suite for discrimination metrics, Mardia's skewness and the .632+ bootstrap
"""

import os

import numpy as np
import pytest

from src.classifiers import ClassifierPipeline
from src.dataset import LongitudinalDataset
from src.errors import EstimationError
from src.evaluation import (Bootstrap632Plus, bootstrap_632plus, confusion_metrics, default_workers,
                            mardia_skewness, no_information_rate, relative_overfitting, stratified_resample,
                            weight_632plus)
from src.harness import ScenarioRunner


def _toy_dataset(n_per_class, seed, shift=1.0):
    rng = np.random.default_rng(seed)
    flat0 = rng.normal(size=(n_per_class, 4)) + shift
    flat1 = rng.normal(size=(n_per_class, 4))
    return LongitudinalDataset.from_classes(flat0, flat1, p=2, t=2)


class FlakyPipeline:
    """Trains once, then fails on every resample"""

    def __init__(self):
        self.calls = 0
        self.inner = ClassifierPipeline('constant')

    def fit(self, ds, seed=0):
        self.calls += 1
        if self.calls > 1:
            raise EstimationError("resample rejected")
        return self.inner.fit(ds, seed)


class TestConfusionMetrics:
    """confusion_metrics"""

    def test_perfect_prediction(self):
        metrics = confusion_metrics([0, 1, 1, 0], [0, 1, 1, 0])
        assert metrics.accuracy == 1.0
        assert metrics.youden == 1.0

    def test_constant_prediction(self):
        metrics = confusion_metrics([0, 0, 1, 1], [1, 1, 1, 1])
        assert metrics.accuracy == 0.5
        assert metrics.youden == 0.0

    def test_hand_counts(self):
        truth = [1, 1, 1, 1, 0, 0, 0, 0]
        pred = [1, 1, 1, 0, 0, 0, 1, 1]
        metrics = confusion_metrics(truth, pred)
        assert (metrics.tp, metrics.fn, metrics.tn, metrics.fp) == (3, 1, 2, 2)
        assert metrics.sensitivity == 0.75
        assert metrics.specificity == 0.5
        assert metrics.youden == pytest.approx(0.25)
        assert metrics.accuracy == 0.625

    def test_youden_symmetric_under_label_swap(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 2, size=50)
        pred = rng.integers(0, 2, size=50)
        assert confusion_metrics(truth, pred).youden == pytest.approx(confusion_metrics(truth, 1 - pred).youden)

    def test_undefined_rate_flagged(self):
        metrics = confusion_metrics([0, 0, 0], [0, 1, 0])
        assert metrics.sensitivity == 0.0
        assert metrics.sensitivity_undefined
        assert not metrics.specificity_undefined

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="Length mismatch"):
            confusion_metrics([0, 1], [0])

    def test_unknown_measure(self):
        with pytest.raises(ValueError):
            confusion_metrics([0, 1], [0, 1]).value('auc')


class TestMardia:
    """mardia_skewness"""

    @pytest.mark.parametrize('d,df', [(8, 120), (16, 816)])
    def test_degrees_of_freedom(self, d, df):
        result = mardia_skewness(np.random.default_rng(d).normal(size=(200, d)))
        assert result.df == df
        assert 0.0 <= result.pvalue <= 1.0

    def test_statistic_relation(self):
        data = np.random.default_rng(1).lognormal(size=(186, 3))
        result = mardia_skewness(data)
        assert result.chi2 == pytest.approx(186 * result.b1p / 6)
        assert result.pvalue < 0.01

    def test_reflected_data_has_zero_skewness(self):
        half = np.random.default_rng(2).normal(size=(50, 3))
        data = np.vstack([half, -half])
        assert mardia_skewness(data).b1p == pytest.approx(0.0, abs=1e-10)

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        data = rng.exponential(size=(80, 4))
        A = rng.normal(size=(4, 4)) + 2 * np.eye(4)
        moved = data @ A.T + rng.normal(size=4)
        assert mardia_skewness(moved).b1p == pytest.approx(mardia_skewness(data).b1p, abs=1e-8)

    def test_needs_more_points_than_dimensions(self):
        with pytest.raises(ValueError, match="n > d"):
            mardia_skewness(np.ones((3, 3)))

    def test_singular_covariance(self):
        column = np.random.default_rng(4).normal(size=(20, 1))
        with pytest.raises(EstimationError, match="singular"):
            mardia_skewness(np.hstack([column, 2 * column]))


class TestBootstrapWeights:
    """No-information rate and .632+ weight"""

    def test_weight_without_overfitting(self):
        assert weight_632plus(0.8, 0.8, 0.5) == 0.632

    def test_weight_with_relative_overfitting(self):
        assert relative_overfitting(0.9, 0.7, 0.5) == pytest.approx(0.5)
        assert weight_632plus(0.9, 0.7, 0.5) == pytest.approx(0.632 / (1 - 0.368 * 0.5))

    def test_relative_overfitting_clipped(self):
        assert relative_overfitting(0.9, 0.2, 0.5) == 1.0
        assert relative_overfitting(0.5, 0.6, 0.3) == 0.0

    def test_accuracy_no_information(self):
        truth = np.array([1, 1, 1, 0])
        pred = np.array([1, 0, 0, 0])
        assert no_information_rate('accuracy', truth, pred) == pytest.approx(0.75 * 0.25 + 0.25 * 0.75)
        assert no_information_rate('youden', truth, pred) == 0.0

    def test_stratified_resample_keeps_class_sizes(self):
        labels = np.array([0] * 7 + [1] * 13)
        sample = stratified_resample(labels, np.random.default_rng(5))
        assert np.sum(labels[sample] == 0) == 7
        assert np.sum(labels[sample] == 1) == 13


class TestBootstrap632Plus:
    """Bootstrap632Plus.run and bootstrap_632plus"""

    def test_constant_classifier(self):
        estimate = bootstrap_632plus(_toy_dataset(100, 6), ClassifierPipeline('constant'), B=200, seed=1)
        assert estimate.apparent == 0.5
        assert estimate.weight_w == 0.632
        assert abs(estimate.oob - 0.5) < 0.02
        assert abs(estimate.theta_632plus - 0.5) < 0.02
        assert estimate.ci[0] <= estimate.ci[1]
        assert estimate.b_used == 200

    def test_too_few_replicates(self):
        with pytest.raises(ValueError, match="at least 50"):
            bootstrap_632plus(_toy_dataset(10, 7), ClassifierPipeline('constant'), B=10)

    def test_theta_between_apparent_and_oob(self):
        config = {'bootstrap': {'B': 60}, 'harness': {'threads': 1}}
        estimates = Bootstrap632Plus(config).run(_toy_dataset(30, 8), ClassifierPipeline('lda_pooled'), seed=2)
        for estimate in estimates.values():
            low, high = sorted((estimate.apparent, estimate.oob))
            assert low - 1e-12 <= estimate.theta_632plus <= high + 1e-12
            assert 0.632 <= estimate.weight_w <= 1.0
            assert estimate.theta_632plus == pytest.approx(
                (1 - estimate.weight_w) * estimate.apparent + estimate.weight_w * estimate.oob)

    def test_basic_interval_widens_with_smaller_alpha(self):
        ds = _toy_dataset(30, 9)
        pipeline = ClassifierPipeline('lda_pooled')
        wide = bootstrap_632plus(ds, pipeline, B=60, alpha=0.05, seed=3, ci_method='basic')
        narrow = bootstrap_632plus(ds, pipeline, B=60, alpha=0.3, seed=3, ci_method='basic')
        assert wide.ci[0] <= narrow.ci[0] <= narrow.ci[1] <= wide.ci[1]

    def test_seed_determinism(self):
        ds = _toy_dataset(25, 10)
        pipeline = ClassifierPipeline('lda_pooled')
        first = bootstrap_632plus(ds, pipeline, B=50, seed=4)
        second = bootstrap_632plus(ds, pipeline, B=50, seed=4)
        assert first == second

    def test_all_replicates_failed(self):
        with pytest.raises(EstimationError, match="all bootstrap replicates failed"):
            bootstrap_632plus(_toy_dataset(20, 11), FlakyPipeline(), B=50)

    def test_unknown_ci_method(self):
        with pytest.raises(ValueError, match="ci_method"):
            Bootstrap632Plus({'bootstrap': {'B': 50, 'ci_method': 'bca'}}).run(
                _toy_dataset(10, 12), ClassifierPipeline('constant'))

    def test_worker_count_follows_harness_threads(self):
        assert Bootstrap632Plus({'harness': {'threads': 3}}).workers == 3
        assert Bootstrap632Plus({'harness': {'threads': 1}}).workers == 1
        assert Bootstrap632Plus({}).workers == default_workers(None) == (os.cpu_count() or 1)

    def test_runner_and_bootstrap_agree_on_workers(self):
        config = {'harness': {'threads': None}}
        assert Bootstrap632Plus(config).workers == ScenarioRunner(config).workers

    def test_generalization_oracle(self):
        ds = _toy_dataset(60, 13, shift=0.7)
        pipeline = ClassifierPipeline('lda_pooled')
        estimate = bootstrap_632plus(ds, pipeline, B=200, seed=5)
        fitted = pipeline.fit(ds)
        large = _toy_dataset(50_000, 14, shift=0.7)
        true_accuracy = float(np.mean(fitted.predict(large) == large.labels))
        assert abs(estimate.theta_632plus - true_accuracy) < 0.05


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
