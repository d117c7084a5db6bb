"""
Robust subset estimators for outlier trimming
Minimum covariance determinant and minimum volume ellipsoid h-subset searches
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Optional, Tuple

import logging
import math
import numpy as np
from scipy.stats import chi2

from src.dataset import LongitudinalDataset
from src.dists import SeedLike, make_rng
from src.errors import DegenerateDataError

logger = logging.getLogger(__name__)

TRIM_METHODS = ('none', 'mve', 'mcd')
DEGENERATE_MESSAGE = "degenerate variable: unique quantiles undeterminable"


@dataclass
class TrimResult:
    """Best h-subset found by a robust estimator"""
    kept_indices: np.ndarray
    location: np.ndarray
    scatter: np.ndarray
    objective: float
    method: str = 'mcd'
    exhaustive: bool = False

    @property
    def h(self) -> int:
        return int(self.kept_indices.size)


class _Candidate:
    """Evaluated subset: sorted indices, location, covariance, inverse and objective"""
    __slots__ = ('indices', 'location', 'cov', 'inv', 'objective', 'scale')

    def __init__(self, indices, location, cov, inv, objective, scale=1.0):
        self.indices = indices
        self.location = location
        self.cov = cov
        self.inv = inv
        self.objective = objective
        self.scale = scale

    def key(self) -> Tuple:
        return tuple(self.indices.tolist())


def _mahalanobis_sq(data: np.ndarray, location: np.ndarray, inv: np.ndarray) -> np.ndarray:
    centered = data - location
    return np.einsum('ij,jk,ik->i', centered, inv, centered)


def _evaluate(data: np.ndarray, indices: np.ndarray, method: str) -> Optional[_Candidate]:
    """Objective of a subset, or None when its covariance is singular"""
    indices = np.sort(indices)
    subset = data[indices]
    location = subset.mean(axis=0)
    cov = np.atleast_2d(np.cov(subset, rowvar=False, ddof=1))
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        return None
    try:
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        return None

    if method == 'mcd':
        return _Candidate(indices, location, cov, inv, float(logdet))

    # Ellipsoid (x - m)' (c S)^-1 (x - m) <= 1 covering the subset; log volume up to a constant
    d = data.shape[1]
    c = float(_mahalanobis_sq(subset, location, inv).max())
    if c <= 0:
        return None
    return _Candidate(indices, location, cov, inv, 0.5 * (d * math.log(c) + logdet), scale=c)


def _better(candidate: _Candidate, best: Optional[_Candidate], rel_tol: float = 1e-12) -> bool:
    """Strictly lower objective, ties resolved by lexicographically smaller index set"""
    if best is None:
        return True
    margin = rel_tol * max(1.0, abs(best.objective))
    if candidate.objective < best.objective - margin:
        return True
    if abs(candidate.objective - best.objective) <= margin:
        return candidate.key() < best.key()
    return False


def _check_preconditions(data: np.ndarray, h: int) -> None:
    n, d = data.shape
    if n <= d + 1:
        raise ValueError(f"Need n > d + 1 observations, got n={n}, d={d}")
    if h <= d or h > n:
        raise ValueError(f"h must satisfy d < h <= n, got h={h}, d={d}, n={n}")
    if h < (n + d + 1) // 2:
        raise ValueError(f"h={h} is below the breakdown bound floor((n + d + 1) / 2) = {(n + d + 1) // 2}")
    spread = data.max(axis=0) - data.min(axis=0)
    if np.any(spread <= 0):
        constant = np.flatnonzero(spread <= 0).tolist()
        logger.warning(f"Constant columns {constant} prevent robust estimation")
        raise DegenerateDataError(DEGENERATE_MESSAGE)


class SubsetSearch:
    """
    h-subset search shared by MCD and MVE

    Small samples are enumerated exhaustively; larger ones use random
    (d + 1)-subsets grown to h points followed by concentration steps.
    """

    def __init__(self, method: str, config: Optional[Dict] = None):
        if method not in ('mcd', 'mve'):
            raise ValueError(f"Unknown subset method '{method}'")
        trim_config = (config or {}).get('trimming', {})
        self.method = method
        self.n_starts = int(trim_config.get('n_starts', 500))
        self.c_steps = int(trim_config.get('c_steps', 2))
        self.n_refine = int(trim_config.get('n_refine', 10))
        self.exhaustive_limit = int(trim_config.get('exhaustive_limit', 12))
        self.refine_tol = 1e-12
        self.max_refine_steps = 100
        self.logger = logging.getLogger(__name__)

    def search(self, data: np.ndarray, h: int, seed: SeedLike,
               exhaustive: Optional[bool] = None) -> TrimResult:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        _check_preconditions(data, h)
        n = data.shape[0]

        if exhaustive is None:
            exhaustive = n <= self.exhaustive_limit
        best = self._exhaustive(data, h) if exhaustive else self._concentration(data, h, make_rng(seed))

        if best is None:
            raise DegenerateDataError(DEGENERATE_MESSAGE)

        scatter = best.cov
        if self.method == 'mve':
            scatter = best.cov * best.scale / chi2.ppf(0.5, data.shape[1])

        self.logger.debug(f"{self.method.upper()} kept {h}/{n} points, objective {best.objective:.6g}")
        return TrimResult(kept_indices=best.indices, location=best.location, scatter=scatter,
                          objective=best.objective, method=self.method, exhaustive=exhaustive)

    def _exhaustive(self, data: np.ndarray, h: int) -> Optional[_Candidate]:
        best = None
        for subset in combinations(range(data.shape[0]), h):
            candidate = _evaluate(data, np.array(subset), self.method)
            if candidate is not None and _better(candidate, best):
                best = candidate
        return best

    def _initial_subset(self, data: np.ndarray, h: int, rng: np.random.Generator) -> Optional[_Candidate]:
        """Random (d + 1)-subset, enlarged until nonsingular, then grown to its h closest points"""
        n, d = data.shape
        order = rng.permutation(n)
        size = d + 1
        while size <= n:
            indices = order[:size]
            cov = np.atleast_2d(np.cov(data[indices], rowvar=False, ddof=1))
            sign, _ = np.linalg.slogdet(cov)
            if sign > 0:
                location = data[indices].mean(axis=0)
                distances = _mahalanobis_sq(data, location, np.linalg.inv(cov))
                return _evaluate(data, np.argsort(distances, kind='stable')[:h], self.method)
            size += 1
        return None

    def _concentrate(self, data: np.ndarray, candidate: _Candidate, h: int) -> Optional[_Candidate]:
        distances = _mahalanobis_sq(data, candidate.location, candidate.inv)
        return _evaluate(data, np.argsort(distances, kind='stable')[:h], self.method)

    def _concentration(self, data: np.ndarray, h: int, rng: np.random.Generator) -> Optional[_Candidate]:
        starts: List[_Candidate] = []
        for _ in range(self.n_starts):
            candidate = self._initial_subset(data, h, rng)
            if candidate is None:
                continue
            for _ in range(self.c_steps):
                stepped = self._concentrate(data, candidate, h)
                if stepped is None:
                    break
                if _better(stepped, candidate):
                    candidate = stepped
            starts.append(candidate)

        if not starts:
            return None

        unique: Dict[Tuple, _Candidate] = {}
        for candidate in starts:
            unique.setdefault(candidate.key(), candidate)
        ranked = sorted(unique.values(), key=lambda c: (c.objective, c.key()))

        best = None
        for candidate in ranked[:self.n_refine]:
            for _ in range(self.max_refine_steps):
                stepped = self._concentrate(data, candidate, h)
                if stepped is None or not _better(stepped, candidate):
                    break
                change = candidate.objective - stepped.objective
                candidate = stepped
                if change < self.refine_tol:
                    break
            if _better(candidate, best):
                best = candidate
        return best


def mcd_trim(data: np.ndarray, h: int, n_starts: int = 500, seed: SeedLike = 0,
             config: Optional[Dict] = None, exhaustive: Optional[bool] = None) -> TrimResult:
    """
    Minimum covariance determinant h-subset

    Args:
        data: (n, d) observations
        h: subset size
        n_starts: random starts for the concentration search
        seed: integer seed or Generator
        config: optional config with a 'trimming' section
        exhaustive: force (True) or forbid (False) full enumeration

    Returns:
        TrimResult with objective log det of the subset covariance
    """
    search = SubsetSearch('mcd', config)
    search.n_starts = int(n_starts)
    return search.search(data, h, seed, exhaustive=exhaustive)


def mve_trim(data: np.ndarray, h: int, n_starts: int = 500, seed: SeedLike = 0,
             config: Optional[Dict] = None, exhaustive: Optional[bool] = None) -> TrimResult:
    """Minimum volume ellipsoid h-subset; objective is the log volume of the covering ellipsoid"""
    search = SubsetSearch('mve', config)
    search.n_starts = int(n_starts)
    return search.search(data, h, seed, exhaustive=exhaustive)


def subset_size(keep_fraction: float, n: int) -> int:
    return int(math.ceil(keep_fraction * n - 1e-9))


def trim_dataset(ds: LongitudinalDataset, keep_fraction: float, method: str, seed: SeedLike,
                 config: Optional[Dict] = None) -> LongitudinalDataset:
    """
    Per-class robust trimming keeping ceil(keep_fraction * n_i) subjects of each class

    Returns:
        The input unchanged for method 'none' or keep_fraction 1, otherwise
        the union of kept rows in original order
    """
    if method not in TRIM_METHODS:
        raise ValueError(f"Unknown trimming method '{method}', expected one of {TRIM_METHODS}")
    if not 0.5 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0.5, 1], got {keep_fraction}")
    if method == 'none' or keep_fraction == 1.0:
        return ds

    estimator: Callable = mcd_trim if method == 'mcd' else mve_trim
    n_starts = int((config or {}).get('trimming', {}).get('n_starts', 500))
    rng = make_rng(seed)
    flat = ds.flat()

    kept = []
    for label in (0, 1):
        rows = ds.class_indices(label)
        h = subset_size(keep_fraction, rows.size)
        result = estimator(flat[rows], h, n_starts=n_starts, seed=rng, config=config)
        kept.append(rows[result.kept_indices])
        logger.debug(f"{method.upper()} class {label}: kept {h} of {rows.size}")

    return ds.subset(np.sort(np.concatenate(kept)))
