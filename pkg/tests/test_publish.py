"""
Test suite for result tables and exported files
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.evaluation import confusion_metrics
from src.harness import RESULT_COLUMNS, ReplicateResult, ScenarioResult
from src.publish import (ROC_COLUMNS, Publisher, accuracy_quantiles, bootstrap_roc_points, bootstrap_table,
                         convergence_table, emit_results_csv, emit_roc_points_csv, runtime_table, summary_table)


def _row(replicate, classifier, pred, trimming='none', converged=True, runtime_ms=10.0):
    truth = [0, 0, 1, 1]
    return ReplicateResult(replicate, classifier, trimming, confusion_metrics(truth, pred), converged, runtime_ms,
                           n_test=4)


def _failed(replicate, classifier, trimming='none'):
    return ReplicateResult(replicate, classifier, trimming, None, False, 1.0, error="singular pooled covariance")


@pytest.fixture
def rows():
    return [
        _row(0, 'lda_pooled', [0, 0, 1, 1]),
        _row(1, 'lda_pooled', [0, 1, 1, 1]),
        _row(2, 'lda_pooled', [1, 1, 1, 1]),
        _row(0, 'lsvm', [1, 1, 1, 1], converged=False, runtime_ms=30.0),
        _failed(1, 'lsvm'),
        _row(2, 'lsvm', [0, 0, 1, 1], runtime_ms=50.0),
    ]


class TestSummaryTables:
    """summary_table and the companion tables"""

    def test_mean_matches_rows(self, rows):
        summary = summary_table(rows).set_index('classifier')
        assert summary.loc['lda_pooled', 'accuracy_mean'] == pytest.approx(np.mean([1.0, 0.75, 0.5]))
        assert summary.loc['lda_pooled', 'accuracy_sd'] == pytest.approx(0.25)

    def test_mean_sd_format(self, rows):
        summary = summary_table(rows).set_index('classifier')
        assert summary.loc['lda_pooled', 'accuracy'] == "0.750 (0.250)"

    def test_failed_fits_counted_not_averaged(self, rows):
        summary = summary_table(rows).set_index('classifier')
        assert summary.loc['lsvm', 'n_ok'] == 2
        assert summary.loc['lsvm', 'n_failed'] == 1
        assert summary.loc['lsvm', 'accuracy_mean'] == pytest.approx(0.75)

    def test_all_failed_cell_is_na(self):
        summary = summary_table([_failed(0, 'lda_gee'), _failed(1, 'lda_gee')])
        assert summary.loc[0, 'accuracy'] == 'NA'

    def test_convergence_counts(self, rows):
        table = convergence_table(rows).set_index('classifier')
        assert table.loc['lda_pooled', 'converged'] == 3
        assert table.loc['lsvm', 'converged'] == 1
        assert table.loc['lsvm', 'failed'] == 1

    def test_runtime_totals(self, rows):
        table = runtime_table(rows).set_index('classifier')
        assert table.loc['lsvm', 'mean_ms'] == pytest.approx(27.0)
        assert table.loc['lsvm', 'total_hours'] == pytest.approx(81.0 / 3_600_000.0)

    def test_accuracy_quantiles(self, rows):
        table = accuracy_quantiles(rows).set_index('classifier')
        assert table.loc['lda_pooled', 'median'] == 0.75
        assert table.loc['lsvm', 'min'] == 0.5
        assert table.loc['lsvm', 'max'] == 1.0


class TestCsvExports:
    """emit_results_csv and emit_roc_points_csv"""

    def test_empty_results_keep_header(self, tmp_path):
        path = emit_results_csv([], str(tmp_path / 'empty.csv'))
        with open(path) as f:
            assert f.read() == ','.join(RESULT_COLUMNS) + '\n'

    def test_failed_rows_keep_error(self, tmp_path, rows):
        frame = pd.read_csv(emit_results_csv(rows, str(tmp_path / 'results.csv')), keep_default_na=False)
        assert len(frame) == 6
        assert frame.loc[4, 'error'] == "singular pooled covariance"
        assert frame.loc[4, 'accuracy'] == ''

    def test_reloaded_values_keep_six_significant_digits(self, tmp_path):
        metrics = confusion_metrics([0, 0, 1], [0, 1, 1])
        rows = [ReplicateResult(0, 'lda_kp', 'mve', metrics, True, 12.3456789, n_test=3)]
        frame = pd.read_csv(emit_results_csv(rows, str(tmp_path / 'results.csv')))
        expected = rows[0].to_row()
        for column in ('accuracy', 'youden', 'sensitivity', 'specificity', 'runtime_ms'):
            assert frame.loc[0, column] == float('%.6g' % expected[column])
        assert frame.loc[0, 'runtime_ms'] == 12.3457
        assert frame.loc[0, 'accuracy'] == pytest.approx(2 / 3, rel=1e-5)
        assert frame.loc[0, ['tp', 'fp', 'tn', 'fn']].tolist() == [1, 1, 1, 0]

    def test_roc_points(self, tmp_path, rows):
        frame = pd.read_csv(emit_roc_points_csv(rows, str(tmp_path / 'roc.csv')))
        assert list(frame.columns) == ROC_COLUMNS
        assert len(frame) == 5
        second = frame.iloc[1]
        # predictions [0, 1, 1, 1]: one false positive of two negatives
        assert (second['fpr'], second['tpr']) == (0.5, 1.0)


class TestBootstrapTables:
    """bootstrap_table and bootstrap_roc_points"""

    @pytest.fixture
    def cells(self):
        cells = []
        for measure, theta in (('accuracy', 0.61), ('sensitivity', 0.7), ('specificity', 0.52)):
            cells.append({'classifier': 'lda_pooled', 'trimming': 'none', 'measure': measure,
                          'theta_632plus': theta, 'ci_lo': theta - 0.1, 'ci_hi': theta + 0.05, 'b_used': 50})
            cells.append({'classifier': 'lda_gee', 'trimming': 'mcd', 'measure': measure,
                          'theta_632plus': np.nan, 'ci_lo': np.nan, 'ci_hi': np.nan, 'b_used': 0,
                          'error': 'not computable'})
        return cells

    def test_wide_layout(self, cells):
        table = bootstrap_table(cells)
        assert list(table.columns) == ['classifier', 'trimming', 'accuracy', 'sensitivity', 'specificity']
        assert table.loc[0, 'accuracy'] == "0.610 (0.510, 0.660)"
        assert table.loc[1, 'accuracy'] == 'NA'

    def test_roc_points_from_estimates(self, cells):
        points = bootstrap_roc_points(cells)
        assert points.loc[0, 'fpr'] == pytest.approx(0.48)
        assert points.loc[0, 'tpr'] == pytest.approx(0.7)
        assert np.isnan(points.loc[1, 'tpr'])


class TestPublisher:
    """Publisher output files"""

    def test_publish_scenario_files(self, tmp_path, rows):
        publisher = Publisher({'paths': {'exports': str(tmp_path / 'exports')}})
        paths = publisher.publish_scenario(ScenarioResult('dataset1', 'normal', 7, rows))
        assert set(paths) == {'results', 'roc_points', 'summary', 'convergence', 'runtime',
                              'accuracy_quantiles', 'metadata'}
        assert paths['summary'].endswith('dataset1_normal_summary.csv')
        with open(paths['metadata']) as f:
            metadata = json.load(f)
        assert metadata['seed'] == 7
        assert metadata['replicates'] == 3
        assert metadata['failed_fits'] == 1
        assert 'timestamp' in metadata

    def test_out_dir_overrides_config(self, tmp_path):
        publisher = Publisher({'paths': {'exports': str(tmp_path / 'unused')}}, out_dir=str(tmp_path / 'chosen'))
        path = publisher.publish_mardia(pd.DataFrame({'dataset': ['a'], 'b1p': [1.0]}))
        assert (tmp_path / 'chosen' / 'mardia.csv').exists()
        assert path['mardia'].endswith('mardia.csv')


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
