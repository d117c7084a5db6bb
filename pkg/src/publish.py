"""
Publication and export module
Writes per-replicate results, summary tables, ROC points and bootstrap tables as CSV/JSON
"""

import json
import os
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Union

import logging
import numpy as np
import pandas as pd

from src.evaluation import MEASURES
from src.harness import RESULT_COLUMNS, ReplicateResult, ScenarioResult, results_frame

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6g'
ROC_COLUMNS = ['replicate', 'classifier', 'trimming', 'fpr', 'tpr']
CELL_KEYS = ['classifier', 'trimming']

Rows = Union[Sequence[ReplicateResult], pd.DataFrame]


def _as_frame(rows: Rows) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows
    return results_frame(rows)


def _ok(frame: pd.DataFrame) -> pd.DataFrame:
    return frame[frame['accuracy'].notna()]


def _write_csv(frame: pd.DataFrame, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8', lineterminator='\n')
    return path


def emit_results_csv(rows: Rows, path: str) -> str:
    """One row per replicate x classifier x trimming; failed fits keep empty metric cells and the error"""
    frame = _as_frame(rows).reindex(columns=RESULT_COLUMNS)
    return _write_csv(frame, path)


def emit_roc_points_csv(rows: Rows, path: str) -> str:
    """Raw (1 - specificity, sensitivity) points of the successful fits"""
    frame = _ok(_as_frame(rows))
    roc = pd.DataFrame({
        'replicate': frame['replicate'],
        'classifier': frame['classifier'],
        'trimming': frame['trimming'],
        'fpr': 1.0 - frame['specificity'],
        'tpr': frame['sensitivity'],
    }, columns=ROC_COLUMNS)
    return _write_csv(roc, path)


def _format_mean_sd(mean: float, sd: float) -> str:
    if pd.isna(mean):
        return 'NA'
    if pd.isna(sd):
        return f"{mean:.3f} (NA)"
    return f"{mean:.3f} ({sd:.3f})"


def summary_table(rows: Rows) -> pd.DataFrame:
    """
    Mean and standard deviation (ddof 1) of every measure per classifier x trimming

    Failed fits are excluded from the moments and counted in n_failed.
    """
    frame = _as_frame(rows)
    records = []
    for (classifier, trimming), cell in frame.groupby(CELL_KEYS, sort=False):
        ok = _ok(cell)
        record = {
            'classifier': classifier,
            'trimming': trimming,
            'n_ok': len(ok),
            'n_failed': len(cell) - len(ok),
            'n_converged': int(cell['converged'].astype(bool).sum()),
        }
        for measure in MEASURES:
            values = ok[measure].astype(float)
            mean = float(values.mean()) if len(values) else np.nan
            sd = float(values.std(ddof=1)) if len(values) > 1 else np.nan
            record[f"{measure}_mean"] = mean
            record[f"{measure}_sd"] = sd
            record[measure] = _format_mean_sd(mean, sd)
        records.append(record)

    columns = ['classifier', 'trimming', 'n_ok', 'n_failed', 'n_converged']
    for measure in MEASURES:
        columns += [f"{measure}_mean", f"{measure}_sd", measure]
    return pd.DataFrame(records, columns=columns)


def convergence_table(rows: Rows) -> pd.DataFrame:
    """Converged fits out of all replicates per classifier x trimming"""
    frame = _as_frame(rows)
    table = frame.groupby(CELL_KEYS, sort=False).agg(
        replicates=('replicate', 'size'),
        converged=('converged', lambda s: int(s.astype(bool).sum())),
        failed=('accuracy', lambda s: int(s.isna().sum())),
    ).reset_index()
    return table


def runtime_table(rows: Rows) -> pd.DataFrame:
    """Mean fit time per classifier irrespective of trimming, in ms, plus the total in hours"""
    frame = _as_frame(rows)
    table = frame.groupby('classifier', sort=False).agg(
        mean_ms=('runtime_ms', 'mean'),
        total_ms=('runtime_ms', 'sum'),
    ).reset_index()
    table['total_hours'] = table['total_ms'] / 3_600_000.0
    return table.drop(columns='total_ms')


def accuracy_quantiles(rows: Rows) -> pd.DataFrame:
    """Five-number summary of accuracy per classifier x trimming"""
    frame = _ok(_as_frame(rows))
    records = []
    for (classifier, trimming), cell in frame.groupby(CELL_KEYS, sort=False):
        q = np.quantile(cell['accuracy'].astype(float), [0.0, 0.25, 0.5, 0.75, 1.0])
        records.append({'classifier': classifier, 'trimming': trimming,
                        'min': q[0], 'q1': q[1], 'median': q[2], 'q3': q[3], 'max': q[4]})
    return pd.DataFrame(records, columns=['classifier', 'trimming', 'min', 'q1', 'median', 'q3', 'max'])


def _format_estimate(cell: Dict) -> str:
    if pd.isna(cell.get('theta_632plus', np.nan)):
        return 'NA'
    return f"{cell['theta_632plus']:.3f} ({cell['ci_lo']:.3f}, {cell['ci_hi']:.3f})"


def bootstrap_table(cells: List[Dict]) -> pd.DataFrame:
    """Wide layout: one row per classifier x trimming, one 'mean (lo, hi)' column per measure"""
    records: Dict = {}
    measures: List[str] = []
    for cell in cells:
        key = (cell['classifier'], cell['trimming'])
        record = records.setdefault(key, {'classifier': key[0], 'trimming': key[1]})
        record[cell['measure']] = _format_estimate(cell)
        if cell['measure'] not in measures:
            measures.append(cell['measure'])
    return pd.DataFrame(list(records.values()), columns=['classifier', 'trimming', *measures])


def bootstrap_roc_points(cells: List[Dict]) -> pd.DataFrame:
    """(1 - specificity, sensitivity) from the .632+ estimates of each pipeline"""
    estimates: Dict = {}
    for cell in cells:
        key = (cell['classifier'], cell['trimming'])
        estimates.setdefault(key, {})[cell['measure']] = cell.get('theta_632plus', np.nan)

    records = []
    for (classifier, trimming), values in estimates.items():
        if 'sensitivity' not in values or 'specificity' not in values:
            continue
        records.append({'classifier': classifier, 'trimming': trimming,
                        'fpr': 1.0 - values['specificity'], 'tpr': values['sensitivity']})
    return pd.DataFrame(records, columns=['classifier', 'trimming', 'fpr', 'tpr'])


class Publisher:
    """Writes the output files of simulation, bootstrap and Mardia runs under the exports directory"""

    def __init__(self, config: Optional[Dict] = None, out_dir: Optional[str] = None):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)
        self.exports_dir = out_dir or self.config.get('paths', {}).get('exports', 'exports')
        os.makedirs(self.exports_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.exports_dir, filename)

    def write_metadata(self, stem: str, metadata: Dict) -> str:
        """Run metadata with a timestamp, kept out of the CSVs"""
        path = self._path(f"{stem}_metadata.json")
        payload = {'timestamp': datetime.now().isoformat(), **metadata}
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, ensure_ascii=False, default=str)
        return path

    def publish_scenario(self, result: ScenarioResult) -> Dict[str, str]:
        """
        Export one scenario run

        Returns:
            Dictionary with paths to every file written
        """
        stem = f"{result.scenario}_{result.distribution}"
        frame = result.frame()
        paths = {
            'results': emit_results_csv(frame, self._path(f"{stem}_results.csv")),
            'roc_points': emit_roc_points_csv(frame, self._path(f"{stem}_roc_points.csv")),
            'summary': _write_csv(summary_table(frame), self._path(f"{stem}_summary.csv")),
            'convergence': _write_csv(convergence_table(frame), self._path(f"{stem}_convergence.csv")),
            'runtime': _write_csv(runtime_table(frame), self._path(f"{stem}_runtime.csv")),
            'accuracy_quantiles': _write_csv(accuracy_quantiles(frame), self._path(f"{stem}_accuracy_quantiles.csv")),
        }
        paths['metadata'] = self.write_metadata(stem, {
            'scenario': result.scenario,
            'distribution': result.distribution,
            'seed': result.seed,
            'replicates': int(frame['replicate'].nunique()) if len(frame) else 0,
            'failed_fits': result.n_failed,
        })
        self.logger.info(f"Published {stem}: {len(frame)} result rows to {self.exports_dir}")
        return paths

    def publish_bootstrap(self, cells: List[Dict], stem: str, metadata: Optional[Dict] = None) -> Dict[str, str]:
        paths = {
            'bootstrap_long': _write_csv(pd.DataFrame(cells), self._path(f"{stem}_bootstrap_long.csv")),
            'bootstrap': _write_csv(bootstrap_table(cells), self._path(f"{stem}_bootstrap.csv")),
            'roc_points': _write_csv(bootstrap_roc_points(cells), self._path(f"{stem}_bootstrap_roc.csv")),
        }
        paths['metadata'] = self.write_metadata(f"{stem}_bootstrap", metadata or {})
        self.logger.info(f"Published bootstrap table for {stem} to {self.exports_dir}")
        return paths

    def publish_mardia(self, table: pd.DataFrame, stem: str = 'mardia') -> Dict[str, str]:
        path = _write_csv(table, self._path(f"{stem}.csv"))
        self.logger.info(f"Published Mardia table to {path}")
        return {'mardia': path}


def publish_scenario(result: ScenarioResult, config: Optional[Dict] = None, out_dir: Optional[str] = None) -> Dict:
    """Convenience function for scenario publishing"""
    return Publisher(config, out_dir).publish_scenario(result)
