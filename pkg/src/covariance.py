"""
Covariance estimation for repeated-measures LDA
Pooled unstructured covariance and Kronecker product covariance via the flip-flop algorithm
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import logging
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.errors import EstimationError

logger = logging.getLogger(__name__)


@dataclass
class KroneckerCov:
    """Sigma = sigma_t (x) sigma_p with sigma_t[0, 0] = 1"""
    sigma_t: np.ndarray
    sigma_p: np.ndarray
    converged: bool = True
    iterations: int = 0
    loglik_path: List[float] = field(default_factory=list)

    @property
    def t(self) -> int:
        return self.sigma_t.shape[0]

    @property
    def p(self) -> int:
        return self.sigma_p.shape[0]

    def full(self) -> np.ndarray:
        return kron(self.sigma_t, self.sigma_p)


@dataclass
class GroupParams:
    """Class means, shared covariance and priors feeding the LDA rule"""
    mu0: np.ndarray
    mu1: np.ndarray
    cov: Union[np.ndarray, KroneckerCov]
    priors: Tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        self.mu0 = np.asarray(self.mu0, dtype=float)
        self.mu1 = np.asarray(self.mu1, dtype=float)
        if self.mu0.shape != self.mu1.shape:
            raise ValueError(f"mu0 {self.mu0.shape} and mu1 {self.mu1.shape} differ in shape")
        pi0, pi1 = (float(v) for v in self.priors)
        if pi0 <= 0 or pi1 <= 0 or abs(pi0 + pi1 - 1.0) > 1e-12:
            raise ValueError(f"priors must be positive and sum to 1, got ({pi0}, {pi1})")
        self.priors = (pi0, pi1)
        dim = self.mu0.size
        cov_dim = self.cov.p * self.cov.t if isinstance(self.cov, KroneckerCov) else np.shape(self.cov)[0]
        if cov_dim != dim:
            raise ValueError(f"covariance dimension {cov_dim} does not match mean length {dim}")

    def full_cov(self) -> np.ndarray:
        if isinstance(self.cov, KroneckerCov):
            return self.cov.full()
        return np.asarray(self.cov, dtype=float)


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product; kron(A, B)[i*c + k, j*d + m] = A[i, j] * B[k, m]"""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def kronecker_param_count(p: int, t: int) -> Tuple[int, int]:
    """Free parameters of an unstructured versus a Kronecker covariance"""
    if p < 1 or t < 1:
        raise ValueError(f"p and t must be positive, got p={p}, t={t}")
    pt = p * t
    return pt * (pt + 1) // 2, p * (p + 1) // 2 + t * (t + 1) // 2


def sample_covariance(x: np.ndarray) -> np.ndarray:
    """Unbiased (n - 1) covariance of the rows of x"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("at least two observations are needed for a covariance")
    return np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def pooled_covariance(cov0: np.ndarray, n0: int, cov1: np.ndarray, n1: int) -> np.ndarray:
    """
    ((n0 - 1) cov0 + (n1 - 1) cov1) / ((n0 - 1) + (n1 - 1))

    Args:
        cov0, cov1: class covariance matrices of equal dimension
        n0, n1: class sizes, each at least 2

    Returns:
        Symmetric pooled covariance
    """
    cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    if cov0.shape != cov1.shape:
        raise ValueError(f"Dimension mismatch: {cov0.shape} vs {cov1.shape}")
    if n0 < 2 or n1 < 2:
        raise ValueError(f"Class sizes must be at least 2, got n0={n0}, n1={n1}")
    pooled = ((n0 - 1) * cov0 + (n1 - 1) * cov1) / ((n0 - 1) + (n1 - 1))
    return (pooled + pooled.T) / 2


def correlation_from_covariance(cov: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        raise EstimationError("correlation undefined for zero-variance coordinates")
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr


def ensure_positive_definite(cov: np.ndarray, floor: float = 1e-6) -> Tuple[np.ndarray, bool]:
    """
    Raise eigenvalues below floor to floor

    Returns:
        (matrix, repaired flag)
    """
    cov = (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T) / 2
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() >= floor:
        return cov, False
    repaired = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    return (repaired + repaired.T) / 2, True


def _factor_inverse(sigma: np.ndarray, name: str, iteration: int) -> np.ndarray:
    try:
        factor = cho_factor(sigma, lower=True)
    except LinAlgError:
        raise EstimationError(f"flip-flop {name} factor singular at iteration {iteration}")
    return cho_solve(factor, np.eye(sigma.shape[0]))


def matrix_normal_loglik(X: np.ndarray, sigma_t: np.ndarray, sigma_p: np.ndarray) -> float:
    """
    Zero-mean Gaussian log-likelihood of subjects X (n, t, p) under sigma_t (x) sigma_p
    """
    n, t, p = X.shape
    _, logdet_t = np.linalg.slogdet(sigma_t)
    _, logdet_p = np.linalg.slogdet(sigma_p)
    inv_t = np.linalg.inv(sigma_t)
    inv_p = np.linalg.inv(sigma_p)
    quad = np.einsum('jkl,kq,jqm,lm->', X, inv_t, X, inv_p)
    return float(-0.5 * n * (p * t * np.log(2 * np.pi) + p * logdet_t + t * logdet_p) - 0.5 * quad)


def flip_flop(data_centered: np.ndarray, p: int, t: int, tol: float = 1e-4, max_iter: int = 100,
              init_sigma_p: Optional[np.ndarray] = None) -> KroneckerCov:
    """
    Maximum likelihood Kronecker factors by alternating closed-form updates

    Args:
        data_centered: (n, p*t) rows centered by their group mean, time-major
        p: number of variables
        t: number of time points
        tol: stop when ||kron_m - kron_{m-1}||_F <= tol
        max_iter: iteration cap; the last iterate is returned unconverged
        init_sigma_p: starting variable factor (identity by default)

    Returns:
        KroneckerCov normalized to sigma_t[0, 0] = 1
    """
    data_centered = np.atleast_2d(np.asarray(data_centered, dtype=float))
    n = data_centered.shape[0]
    if data_centered.shape[1] != p * t:
        raise ValueError(f"data has {data_centered.shape[1]} columns, expected p*t = {p * t}")
    if n * p <= t or n * t <= p:
        raise EstimationError(f"Kronecker factors not estimable from n={n} subjects (p={p}, t={t})")

    X = data_centered.reshape(n, t, p)
    sigma_p = np.eye(p) if init_sigma_p is None else np.asarray(init_sigma_p, dtype=float).copy()
    sigma_t = np.eye(t)
    previous = None
    loglik_path = []
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        inv_p = _factor_inverse(sigma_p, 'variable', iteration)
        sigma_t = np.einsum('jkl,lm,jqm->kq', X, inv_p, X) / (n * p)
        sigma_t = (sigma_t + sigma_t.T) / 2

        inv_t = _factor_inverse(sigma_t, 'time', iteration)
        sigma_p = np.einsum('jkl,kq,jqm->lm', X, inv_t, X) / (n * t)
        sigma_p = (sigma_p + sigma_p.T) / 2

        current = kron(sigma_t, sigma_p)
        loglik_path.append(matrix_normal_loglik(X, sigma_t, sigma_p))

        if previous is not None and np.linalg.norm(current - previous, 'fro') <= tol:
            converged = True
            break
        previous = current

    if converged:
        logger.debug(f"Flip-flop converged in {iteration} iterations")
    else:
        logger.warning(f"Flip-flop did not converge after {max_iter} iterations")

    scale = sigma_t[0, 0]
    return KroneckerCov(sigma_t=sigma_t / scale, sigma_p=sigma_p * scale,
                        converged=converged, iterations=iteration, loglik_path=loglik_path)


def class_means(flat: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return flat[labels == 0].mean(axis=0), flat[labels == 1].mean(axis=0)


def empirical_priors(n0: int, n1: int, mode: str = 'empirical') -> Tuple[float, float]:
    if mode == 'equal':
        return 0.5, 0.5
    if mode != 'empirical':
        raise ValueError(f"Unknown prior mode '{mode}'")
    total = n0 + n1
    return n0 / total, n1 / total


def pooled_group_params(flat: np.ndarray, labels: np.ndarray, priors: str = 'empirical') -> GroupParams:
    """Class means and unstructured pooled covariance"""
    x0, x1 = flat[labels == 0], flat[labels == 1]
    cov = pooled_covariance(sample_covariance(x0), len(x0), sample_covariance(x1), len(x1))
    return GroupParams(mu0=x0.mean(axis=0), mu1=x1.mean(axis=0), cov=cov,
                       priors=empirical_priors(len(x0), len(x1), priors))


def kronecker_group_params(flat: np.ndarray, labels: np.ndarray, p: int, t: int,
                           config: Optional[Dict] = None, priors: str = 'empirical') -> GroupParams:
    """
    Per-class flip-flop factors pooled factorwise with (n_i - 1) weights
    """
    ff_config = (config or {}).get('flipflop', {})
    tol = float(ff_config.get('tol', 1e-4))
    max_iter = int(ff_config.get('max_iter', 100))

    factors = []
    sizes = []
    for label in (0, 1):
        x = flat[labels == label]
        factors.append(flip_flop(x - x.mean(axis=0), p, t, tol=tol, max_iter=max_iter))
        sizes.append(len(x))

    sigma_t = pooled_covariance(factors[0].sigma_t, sizes[0], factors[1].sigma_t, sizes[1])
    sigma_p = pooled_covariance(factors[0].sigma_p, sizes[0], factors[1].sigma_p, sizes[1])
    pooled = KroneckerCov(
        sigma_t=sigma_t, sigma_p=sigma_p,
        converged=factors[0].converged and factors[1].converged,
        iterations=max(factors[0].iterations, factors[1].iterations),
    )
    mu0, mu1 = class_means(flat, labels)
    return GroupParams(mu0=mu0, mu1=mu1, cov=pooled, priors=empirical_priors(sizes[0], sizes[1], priors))
