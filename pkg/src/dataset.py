"""
Longitudinal dataset container
Holds n subjects x p variables x t time points with binary group labels
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np


def tensor_to_flat(values: np.ndarray) -> np.ndarray:
    """
    Flatten an (n, p, t) tensor to (n, p*t) time-major rows

    Column k*p + l holds variable l at time k, i.e. all p variables at the
    first time point, then all p at the second, and so on.
    """
    n, p, t = values.shape
    return values.transpose(0, 2, 1).reshape(n, t * p)


def flat_to_tensor(flat: np.ndarray, p: int, t: int) -> np.ndarray:
    """Inverse of tensor_to_flat"""
    flat = np.atleast_2d(np.asarray(flat, dtype=float))
    if flat.shape[1] != p * t:
        raise ValueError(f"Flat rows have {flat.shape[1]} columns, expected p*t = {p * t}")
    return flat.reshape(flat.shape[0], t, p).transpose(0, 2, 1)


@dataclass
class LongitudinalDataset:
    """Complete repeated-measures panel with labels in {0, 1}"""
    values: np.ndarray
    labels: np.ndarray
    variable_names: List[str] = field(default_factory=list)
    subject_ids: Optional[List[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels).astype(int)

        if self.values.ndim != 3:
            raise ValueError(f"values must be an (n, p, t) tensor, got shape {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise ValueError(f"labels length {self.labels.shape} does not match n={self.values.shape[0]}")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be binary (0/1)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain missing or non-finite entries")

        if not self.variable_names:
            self.variable_names = [f"var{l + 1}" for l in range(self.p)]
        if len(self.variable_names) != self.p:
            raise ValueError(f"{len(self.variable_names)} variable names for p={self.p} variables")
        if self.subject_ids is not None and len(self.subject_ids) != self.n:
            raise ValueError("subject_ids length does not match n")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> int:
        return self.values.shape[2]

    @property
    def n0(self) -> int:
        return int(np.sum(self.labels == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.labels == 1))

    def flat(self) -> np.ndarray:
        """Time-major (n, p*t) matrix"""
        return tensor_to_flat(self.values)

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def class_flat(self, label: int) -> np.ndarray:
        return self.flat()[self.labels == label]

    def time_slice(self, k: int) -> np.ndarray:
        """(n, p) measurements at time index k (0-based)"""
        return self.values[:, :, k]

    def subset(self, indices: Sequence[int]) -> 'LongitudinalDataset':
        """Rows at the given indices; repeats allowed (bootstrap resamples)"""
        idx = np.asarray(indices, dtype=int)
        ids = [self.subject_ids[i] for i in idx] if self.subject_ids is not None else None
        return LongitudinalDataset(
            values=self.values[idx],
            labels=self.labels[idx],
            variable_names=list(self.variable_names),
            subject_ids=ids,
        )

    @classmethod
    def from_flat(cls, flat: np.ndarray, labels: Sequence[int], p: int, t: int,
                  variable_names: Optional[List[str]] = None) -> 'LongitudinalDataset':
        return cls(values=flat_to_tensor(flat, p, t), labels=np.asarray(labels),
                   variable_names=list(variable_names or []))

    @classmethod
    def from_classes(cls, flat0: np.ndarray, flat1: np.ndarray, p: int, t: int,
                     variable_names: Optional[List[str]] = None) -> 'LongitudinalDataset':
        """Stack class 0 rows above class 1 rows"""
        flat = np.vstack([flat0, flat1])
        labels = np.concatenate([np.zeros(len(flat0), dtype=int), np.ones(len(flat1), dtype=int)])
        return cls.from_flat(flat, labels, p, t, variable_names)

    def summary(self) -> dict:
        return {'n': self.n, 'p': self.p, 't': self.t, 'n0': self.n0, 'n1': self.n1}
