"""
Repeated-measures linear discriminant rule
Shared by the pooled, Kronecker and GEE covariance variants
"""

from dataclasses import dataclass
from typing import Tuple, Union

import logging
import numpy as np
from scipy.linalg import LinAlgError, solve

from src.covariance import GroupParams, KroneckerCov
from src.errors import EstimationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LdaModel:
    """
    Assign class 0 iff (x - midpoint)' direction > threshold

    direction = Sigma^-1 (mu0 - mu1), midpoint = (mu0 + mu1) / 2,
    threshold = log(pi1 / pi0). A degenerate model (mu0 == mu1) has a zero
    direction and labels every point 1.
    """
    direction: np.ndarray
    midpoint: np.ndarray
    threshold: float
    priors: Tuple[float, float] = (0.5, 0.5)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            'direction': self.direction.tolist(),
            'midpoint': self.midpoint.tolist(),
            'threshold': self.threshold,
            'priors': list(self.priors),
            'degenerate': self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LdaModel':
        return cls(direction=np.asarray(data['direction'], dtype=float),
                   midpoint=np.asarray(data['midpoint'], dtype=float),
                   threshold=float(data['threshold']),
                   priors=tuple(data.get('priors', (0.5, 0.5))),
                   degenerate=bool(data.get('degenerate', False)))


def _check_positive_definite(sigma: np.ndarray, name: str) -> None:
    eigvals = np.linalg.eigvalsh(sigma)
    smallest = float(eigvals[0])
    if smallest <= 1e-12 * max(1.0, float(eigvals[-1])):
        raise EstimationError(f"singular {name} covariance: smallest eigenvalue {smallest:.3e}")


def _solve_pos(sigma: np.ndarray, rhs: np.ndarray, name: str) -> np.ndarray:
    _check_positive_definite(sigma, name)
    try:
        return solve(sigma, rhs, assume_a='pos')
    except LinAlgError:
        smallest = float(np.linalg.eigvalsh(sigma)[0])
        raise EstimationError(f"singular {name} covariance: smallest eigenvalue {smallest:.3e}")


def lda_train(params: GroupParams) -> LdaModel:
    """
    Build the discriminant direction by solving against the covariance

    Kronecker covariances use (A (x) B)^-1 = A^-1 (x) B^-1 on the t x p
    reshaped mean difference, so the full pt x pt matrix is never formed.
    """
    diff = params.mu0 - params.mu1
    midpoint = (params.mu0 + params.mu1) / 2
    pi0, pi1 = params.priors
    threshold = float(np.log(pi1 / pi0))

    if isinstance(params.cov, KroneckerCov):
        _check_positive_definite(params.cov.sigma_t, 'time factor')
        _check_positive_definite(params.cov.sigma_p, 'variable factor')
    else:
        _check_positive_definite(np.asarray(params.cov, dtype=float), 'pooled')

    if np.array_equal(params.mu0, params.mu1):
        logger.warning("Class means are identical; discriminant direction is degenerate")
        return LdaModel(direction=np.zeros_like(diff), midpoint=midpoint, threshold=threshold,
                        priors=params.priors, degenerate=True)

    if isinstance(params.cov, KroneckerCov):
        t, p = params.cov.t, params.cov.p
        D = diff.reshape(t, p)
        left = _solve_pos(params.cov.sigma_t, D, 'time factor')
        direction = _solve_pos(params.cov.sigma_p, left.T, 'variable factor').T.ravel()
    else:
        direction = _solve_pos(np.asarray(params.cov, dtype=float), diff, 'pooled')

    return LdaModel(direction=direction, midpoint=midpoint, threshold=threshold, priors=params.priors)


def lda_decision_statistic(model: LdaModel, x: np.ndarray) -> np.ndarray:
    """(x - midpoint)' direction for one vector or the rows of a matrix"""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.direction.size:
        raise ValueError(f"Dimension mismatch: x has {x.shape[-1]} entries, model has {model.direction.size}")
    return (x - model.midpoint) @ model.direction


def lda_predict(model: LdaModel, x: np.ndarray) -> Union[int, np.ndarray]:
    """Label 0 iff the statistic exceeds the threshold; ties go to 1"""
    statistic = lda_decision_statistic(model, x)
    labels = np.where(statistic > model.threshold, 0, 1)
    if np.ndim(labels) == 0:
        return int(labels)
    return labels
