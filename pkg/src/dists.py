"""
Scenario distribution samplers
Multivariate normal, lognormal (log-scale parameters) and box-truncated normal draws
"""

from dataclasses import dataclass
from typing import Optional, Union

import logging
import numpy as np

from src.errors import EstimationError

logger = logging.getLogger(__name__)

DISTRIBUTIONS = ('normal', 'lognormal', 'truncnorm')
MAX_CONSECUTIVE_REJECTIONS = 1_000_000

SeedLike = Union[int, np.random.Generator]


@dataclass(frozen=True)
class MvnParams:
    """Mean vector and covariance of a d-dimensional normal"""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise ValueError("cov must be symmetric within 1e-10")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class TruncationBounds:
    """Componentwise box [lower, upper]"""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds must have the same length")
        if not np.all(lower < upper):
            bad = np.flatnonzero(~(lower < upper)).tolist()
            raise ValueError(f"lower must be strictly below upper; violated at components {bad}")
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Row mask of points inside the box"""
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based Philox generator; passes Generators through"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))


def replicate_seed(seed_base: int, replicate: int) -> int:
    return int(seed_base) + int(replicate)


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor of a covariance matrix

    Raises:
        EstimationError naming the first leading minor that is not positive
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass

    for order in range(1, cov.shape[0] + 1):
        try:
            np.linalg.cholesky(cov[:order, :order])
        except np.linalg.LinAlgError:
            raise EstimationError(
                f"covariance is not positive definite: leading minor of order {order} fails")
    raise EstimationError("covariance is not positive definite")


def sample_mvn(params: MvnParams, n: int, seed: SeedLike) -> np.ndarray:
    """
    Draw n i.i.d. rows from N(mean, cov) via the Cholesky factor

    Args:
        params: mean and covariance
        n: number of rows
        seed: integer seed or Generator

    Returns:
        (n, d) sample matrix
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    chol = cholesky_factor(params.cov)
    rng = make_rng(seed)
    z = rng.standard_normal((n, params.dim))
    return params.mean + z @ chol.T


def sample_mv_lognormal(params: MvnParams, n: int, seed: SeedLike) -> np.ndarray:
    """exp() of an MVN draw; mean and cov are log-scale parameters"""
    return np.exp(sample_mvn(params, n, seed))


def sample_mv_truncnorm(params: MvnParams, bounds: TruncationBounds, n: int, seed: SeedLike,
                        max_rejections: int = MAX_CONSECUTIVE_REJECTIONS) -> np.ndarray:
    """
    Rejection sampler for N(mean, cov) conditioned on a box

    Full MVN proposals are accepted iff every component is inside the box.
    Proposals are drawn in batches but the consecutive-rejection count is
    tracked per proposal.

    Raises:
        EstimationError: max_rejections consecutive proposals rejected
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if bounds.lower.size != params.dim:
        raise ValueError(f"bounds have {bounds.lower.size} components, params have {params.dim}")

    chol = cholesky_factor(params.cov)
    rng = make_rng(seed)

    out = np.empty((n, params.dim))
    filled = 0
    consecutive = 0
    while filled < n:
        batch = int(min(max(4 * (n - filled), 1024), 262_144))
        draws = params.mean + rng.standard_normal((batch, params.dim)) @ chol.T
        accepted = np.flatnonzero(bounds.contains(draws))

        if accepted.size == 0:
            consecutive += batch
            if consecutive >= max_rejections:
                raise EstimationError("truncation region too improbable")
            continue

        gaps = np.diff(np.concatenate(([-1], accepted))) - 1
        gaps[0] += consecutive
        take = accepted[:n - filled]
        if np.any(gaps[:take.size] >= max_rejections):
            raise EstimationError("truncation region too improbable")

        out[filled:filled + take.size] = draws[take]
        filled += take.size
        consecutive = batch - 1 - accepted[-1]

    return out


def sample_distribution(distribution: str, params: MvnParams, n: int, seed: SeedLike,
                        bounds: Optional[TruncationBounds] = None) -> np.ndarray:
    """Dispatch to the sampler for a scenario distribution name"""
    if distribution == 'normal':
        return sample_mvn(params, n, seed)
    if distribution == 'lognormal':
        return sample_mv_lognormal(params, n, seed)
    if distribution == 'truncnorm':
        if bounds is None:
            raise ValueError("truncnorm requires truncation bounds")
        return sample_mv_truncnorm(params, bounds, n, seed)
    raise ValueError(f"Unknown distribution '{distribution}', expected one of {DISTRIBUTIONS}")
