"""
Panel data validation
Schema checks for long-format repeated-measures CSV rows
"""

from typing import Dict, List, Optional, Sequence, Tuple

import logging
import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError, conint, constr

from src.errors import DataFormatError

KEY_COLUMNS = ('subject', 'group', 'time')


class PanelRecord(BaseModel):
    """Key fields of one subject x time row"""
    subject: constr(strip_whitespace=True, min_length=1)
    group: conint(ge=0, le=1)
    time: conint(ge=1)


class PanelValidator:
    """
    Collects every problem in a long-format frame before raising

    Checks performed: header contract, key-field schema per row, numeric
    measurement cells, duplicate and missing (subject, time) cells, and a
    single group per subject.
    """

    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)

    def validate(self, df: pd.DataFrame, source: str = '<frame>') -> Tuple[pd.DataFrame, List[str], int]:
        """
        Validate a raw frame read with every column as text

        Returns:
            (clean frame with typed columns, variable names, number of time points)

        Raises:
            DataFormatError: listing all problems found
        """
        columns = list(df.columns)
        if tuple(columns[:3]) != KEY_COLUMNS:
            raise DataFormatError(
                f"{source}: header must start with subject,group,time",
                [f"found header {','.join(columns[:3])}"])
        variables = columns[3:]
        if not variables:
            raise DataFormatError(f"{source}: no measurement columns after subject,group,time")

        problems: List[str] = []
        problems.extend(self._check_keys(df))
        problems.extend(self._check_numeric(df, variables))
        if problems:
            raise DataFormatError(f"{source}: {len(problems)} invalid cells", problems)

        clean = df.copy()
        clean['subject'] = clean['subject'].astype(str).str.strip()
        clean['group'] = clean['group'].astype(float).astype(int)
        clean['time'] = clean['time'].astype(float).astype(int)
        for var in variables:
            clean[var] = pd.to_numeric(clean[var])

        t = int(clean['time'].max())
        problems.extend(self._check_panel(clean, t))
        if problems:
            raise DataFormatError(f"{source}: incomplete or inconsistent panel", problems)

        self.logger.debug(f"{source}: validated {len(clean)} rows, p={len(variables)}, t={t}")
        return clean, variables, t

    def _check_keys(self, df: pd.DataFrame) -> List[str]:
        problems = []
        # line numbers count the header as line 1
        for row_number, record in enumerate(df[list(KEY_COLUMNS)].to_dict('records'), start=2):
            try:
                PanelRecord(**{k: self._as_number(v) if k != 'subject' else v for k, v in record.items()})
            except ValidationError as e:
                for error in e.errors():
                    field = error['loc'][0] if error['loc'] else '?'
                    problems.append(f"line {row_number}, column '{field}': {error['msg']} "
                                    f"(value {record.get(field)!r})")
        return problems

    @staticmethod
    def _as_number(value):
        try:
            number = float(value)
        except (TypeError, ValueError):
            return value
        return int(number) if number.is_integer() else value

    @staticmethod
    def _check_numeric(df: pd.DataFrame, variables: Sequence[str]) -> List[str]:
        problems = []
        for var in variables:
            numeric = pd.to_numeric(df[var], errors='coerce')
            bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
            for index in np.flatnonzero(bad.to_numpy()):
                problems.append(f"line {index + 2}, column '{var}': non-numeric value {df[var].iloc[index]!r}")
        return problems

    @staticmethod
    def _check_panel(df: pd.DataFrame, t: int) -> List[str]:
        problems = []

        duplicated = df[df.duplicated(subset=['subject', 'time'], keep='first')]
        for subject, time in duplicated[['subject', 'time']].itertuples(index=False):
            problems.append(f"subject {subject}: duplicate row for time {time}")

        groups = df.groupby('subject', sort=False)['group'].nunique()
        for subject in groups[groups > 1].index:
            problems.append(f"subject {subject}: group changes between time points")

        observed = df.groupby('subject', sort=False)['time'].apply(set)
        expected = set(range(1, t + 1))
        for subject, times in observed.items():
            missing = sorted(expected - times)
            for time in missing:
                problems.append(f"subject {subject}: missing time {time}")

        return problems


def validate_panel(df: pd.DataFrame, source: str = '<frame>') -> Tuple[pd.DataFrame, List[str], int]:
    """Convenience wrapper around PanelValidator.validate"""
    return PanelValidator().validate(df, source)
