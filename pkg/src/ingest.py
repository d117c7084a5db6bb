"""
Data ingestion module
Reads and writes long-format repeated-measures CSV files (one row per subject x time)
"""

from pathlib import Path
from typing import Dict, Optional, Union

import logging
import numpy as np
import pandas as pd

from src.dataset import LongitudinalDataset
from src.validation import KEY_COLUMNS, PanelValidator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class PanelIngester:
    """Assembles a LongitudinalDataset from a validated long-format CSV"""

    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)
        self.validator = PanelValidator(self.config)

    def load(self, path: PathLike) -> LongitudinalDataset:
        """
        Load `subject,group,time,<var1>,...,<varp>` into an (n, p, t) tensor

        Subjects keep the order of their first appearance in the file.

        Raises:
            DataFormatError: missing cells, non-binary groups or non-numeric values
        """
        path = Path(path)
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
        raw.columns = [str(c).strip() for c in raw.columns]
        clean, variables, t = self.validator.validate(raw, source=str(path))

        subjects = list(dict.fromkeys(clean['subject']))
        position = {subject: j for j, subject in enumerate(subjects)}
        values = np.empty((len(subjects), len(variables), t))
        rows = clean['subject'].map(position).to_numpy()
        times = clean['time'].to_numpy() - 1
        values[rows, :, times] = clean[variables].to_numpy(dtype=float)

        labels = clean.drop_duplicates('subject').set_index('subject').loc[subjects, 'group'].to_numpy()
        ds = LongitudinalDataset(values=values, labels=labels, variable_names=variables, subject_ids=subjects)
        self.logger.info(f"Loaded {path}: n={ds.n} (n0={ds.n0}, n1={ds.n1}), p={ds.p}, t={ds.t}")
        return ds

    def write(self, ds: LongitudinalDataset, path: PathLike, float_format: str = '%.10g') -> str:
        """Write the dataset back to long format, subject-major then time"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ids = ds.subject_ids or [f"s{j + 1}" for j in range(ds.n)]

        records = []
        for j in range(ds.n):
            for k in range(ds.t):
                records.append([ids[j], int(ds.labels[j]), k + 1, *ds.values[j, :, k]])
        frame = pd.DataFrame(records, columns=[*KEY_COLUMNS, *ds.variable_names])
        frame.to_csv(path, index=False, float_format=float_format, encoding='utf-8')
        self.logger.info(f"Wrote {ds.n * ds.t} rows to {path}")
        return str(path)


def load_long_csv(path: PathLike) -> LongitudinalDataset:
    return PanelIngester().load(path)


def write_long_csv(ds: LongitudinalDataset, path: PathLike) -> str:
    return PanelIngester().write(ds, path)
