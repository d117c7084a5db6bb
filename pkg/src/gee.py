"""
Joint generalized estimating equations for multivariate repeated measures
Identity link, (intercept, time) covariates per variable and Kronecker working correlation
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import logging
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.covariance import GroupParams, empirical_priors, kron, pooled_covariance
from src.errors import EstimationError

logger = logging.getLogger(__name__)

KRON_ORDERS = ('pt', 'tp')
WORKING_STRUCTURES = ('unstructured', 'independence')


class LayoutAdapter:
    """
    Maps flat vectors between the external time-major layout and the
    internal layout of the working correlation

    Order 'pt' (R_p (x) R_t) is variable-major internally: entry l*t + k
    holds variable l at time k. Order 'tp' (R_t (x) R_p) is time-major,
    identical to the external layout.
    """

    def __init__(self, p: int, t: int, order: str = 'pt'):
        if order not in KRON_ORDERS:
            raise ValueError(f"Unknown Kronecker order '{order}', expected one of {KRON_ORDERS}")
        self.p = p
        self.t = t
        self.order = order
        if order == 'pt':
            self.perm = np.array([k * p + l for l in range(p) for k in range(t)])
        else:
            self.perm = np.arange(p * t)
        self.inverse = np.argsort(self.perm)

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.perm]

    def to_external(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.inverse]

    def cov_to_external(self, cov: np.ndarray) -> np.ndarray:
        return cov[np.ix_(self.inverse, self.inverse)]

    def working_correlation(self, r_p: np.ndarray, r_t: np.ndarray) -> np.ndarray:
        return kron(r_p, r_t) if self.order == 'pt' else kron(r_t, r_p)


@dataclass(frozen=True)
class GeeDesign:
    """Per-variable covariates (1, time) with time = 1..t, replicated block-diagonally"""
    t: int
    p: int

    def __post_init__(self):
        if self.t < 2:
            raise ValueError(f"the time covariate needs t >= 2, got t={self.t}")
        if self.p < 1:
            raise ValueError(f"p must be positive, got p={self.p}")

    def block(self) -> np.ndarray:
        """t x 2 covariate block Z_l"""
        return np.column_stack([np.ones(self.t), np.arange(1, self.t + 1, dtype=float)])

    def matrix(self, layout: Optional[LayoutAdapter] = None) -> np.ndarray:
        """
        Design matrix of shape (p*t, 2p)

        Rows follow the layout's internal order (time-major when no layout is
        given); column pair (2l, 2l + 1) belongs to variable l.
        """
        variable_major = kron(np.eye(self.p), self.block())
        if layout is None:
            layout = LayoutAdapter(self.p, self.t, 'tp')
        # variable-major row l*t + k -> external row k*p + l -> internal row
        external = np.empty_like(variable_major)
        for l in range(self.p):
            for k in range(self.t):
                external[k * self.p + l] = variable_major[l * self.t + k]
        return layout.to_internal(external.T).T


@dataclass
class GeeFit:
    """
    Joint GEE estimates for one class

    fitted_mu and model_cov are in the external time-major layout;
    model_cov = psi * A^1/2 (R) A^1/2 with R the working correlation.
    """
    beta: np.ndarray
    r_p: np.ndarray
    r_t: np.ndarray
    psi: float
    a_diag: np.ndarray
    fitted_mu: np.ndarray
    model_cov: np.ndarray
    design_matrix: np.ndarray
    cov_robust: Optional[np.ndarray] = None
    converged: bool = False
    iterations: int = 0
    degenerate: bool = False
    kron_order: str = 'pt'
    beta_path: List[np.ndarray] = field(default_factory=list)


def _moment_correlations(std_resid: np.ndarray, t: int, p: int, clip: float):
    """
    Unstructured r_t and r_p from standardized residuals in external layout

    r_t averages row products over variables and subjects, r_p column
    products over times and subjects; both get unit diagonals.
    """
    n = std_resid.shape[0]
    E = std_resid.reshape(n, t, p)
    r_t = np.einsum('jkl,jql->kq', E, E) / (n * p)
    r_p = np.einsum('jkl,jkm->lm', E, E) / (n * t)

    def normalize(r):
        r = (r + r.T) / 2
        scale = np.sqrt(np.clip(np.diag(r), 1e-300, None))
        r = r / np.outer(scale, scale)
        r = np.clip(r, -clip, clip)
        np.fill_diagonal(r, 1.0)
        return r

    return normalize(r_t), normalize(r_p)


class JointGeeEstimator:
    """Fisher scoring for the joint GEE with moment re-estimation of the working covariance"""

    def __init__(self, config: Optional[Dict] = None):
        gee_config = (config or {}).get('gee', {})
        self.tol = float(gee_config.get('tol', 1e-8))
        self.max_iter = int(gee_config.get('max_iter', 50))
        self.kron_order = gee_config.get('kron_order', 'pt')
        self.clip = float(gee_config.get('correlation_clip', 0.99))
        self.working = gee_config.get('working', 'unstructured')
        if self.working not in WORKING_STRUCTURES:
            raise ValueError(f"Unknown working structure '{self.working}'")
        self.logger = logging.getLogger(__name__)

    def fit(self, class_data: np.ndarray, design: GeeDesign) -> GeeFit:
        """
        Fit the joint model to one class

        Args:
            class_data: (n_i, p*t) time-major observations
            design: covariate design

        Returns:
            GeeFit with converged/degenerate flags
        """
        X = np.atleast_2d(np.asarray(class_data, dtype=float))
        n, width = X.shape
        p, t = design.p, design.t
        if width != p * t:
            raise ValueError(f"class data has {width} columns, expected p*t = {p * t}")
        if n < 3:
            raise ValueError(f"joint GEE needs at least 3 subjects, got {n}")
        if not np.all(np.isfinite(X)):
            raise ValueError("joint GEE requires complete data")

        layout = LayoutAdapter(p, t, self.kron_order)
        Z = design.matrix(layout)
        Y = layout.to_internal(X)
        y_bar = Y.mean(axis=0)
        dof = n * p * t - 2 * p

        beta = np.linalg.lstsq(Z, y_bar, rcond=None)[0]
        beta_path = [beta.copy()]
        state = self._working_covariance(Y, Z, beta, layout, dof)
        if state is None:
            return self._degenerate_fit(beta, Z, layout, p, t, beta_path)

        converged = False
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            V = state['V']
            try:
                factor = cho_factor(V, lower=True)
            except LinAlgError:
                raise EstimationError(f"GEE working covariance singular at iteration {iteration}")

            # U = sum_j Z' V^-1 (y_j - mu); information = n Z' V^-1 Z
            Vinv_Z = cho_solve(factor, Z)
            information = Z.T @ Vinv_Z
            score = Vinv_Z.T @ (y_bar - Z @ beta)
            beta_new = beta + np.linalg.solve(information, score)
            step = float(np.max(np.abs(beta_new - beta)))
            beta = beta_new
            beta_path.append(beta.copy())

            state = self._working_covariance(Y, Z, beta, layout, dof)
            if state is None:
                return self._degenerate_fit(beta, Z, layout, p, t, beta_path)
            if step < self.tol:
                converged = True
                break

        if converged:
            self.logger.debug(f"Joint GEE converged in {iteration} iterations")
        else:
            self.logger.warning(f"Joint GEE did not converge after {self.max_iter} iterations")

        cov_robust = self._sandwich(Y, Z, beta, state['V'])
        return GeeFit(
            beta=beta,
            r_p=state['r_p'],
            r_t=state['r_t'],
            psi=state['psi'],
            a_diag=layout.to_external(state['a_diag']),
            fitted_mu=layout.to_external(Z @ beta),
            model_cov=layout.cov_to_external(state['V']),
            design_matrix=layout.to_external(Z.T).T,
            cov_robust=cov_robust,
            converged=converged,
            iterations=iteration,
            kron_order=self.kron_order,
            beta_path=beta_path,
        )

    def _working_covariance(self, Y, Z, beta, layout: LayoutAdapter, dof: int) -> Optional[Dict]:
        """psi, A, r_t, r_p and V = psi A^1/2 R A^1/2 from current residuals"""
        p, t = layout.p, layout.t
        resid = Y - Z @ beta
        # rounding-level residuals count as zero
        floor = 1e-20 * max(1.0, float(np.mean(Y ** 2)))

        if self.working == 'independence':
            psi = float(np.sum(resid ** 2) / dof)
            if psi <= floor:
                return None
            a_diag = np.ones(p * t)
            r_t, r_p = np.eye(t), np.eye(p)
        else:
            a_diag = np.mean(resid ** 2, axis=0)
            if np.any(a_diag <= floor):
                return None
            std_resid = resid / np.sqrt(a_diag)
            r_t, r_p = _moment_correlations(layout.to_external(std_resid), t, p, self.clip)
            psi = float(np.sum(std_resid ** 2) / dof)

        sqrt_a = np.sqrt(a_diag)
        R = layout.working_correlation(r_p, r_t)
        V = psi * (sqrt_a[:, None] * R * sqrt_a[None, :])
        return {'V': (V + V.T) / 2, 'psi': psi, 'a_diag': a_diag, 'r_t': r_t, 'r_p': r_p}

    @staticmethod
    def _sandwich(Y, Z, beta, V) -> np.ndarray:
        """Robust covariance of beta: B^-1 M B^-1 with B = sum Z'V^-1Z and M = sum Z'V^-1 e e' V^-1 Z"""
        n = Y.shape[0]
        Vinv_Z = np.linalg.solve(V, Z)
        bread = n * (Z.T @ Vinv_Z)
        scores = (Y - Z @ beta) @ Vinv_Z
        meat = scores.T @ scores
        bread_inv = np.linalg.inv(bread)
        return bread_inv @ meat @ bread_inv

    def _degenerate_fit(self, beta, Z, layout: LayoutAdapter, p, t, beta_path) -> GeeFit:
        self.logger.warning("Joint GEE residuals vanish; scale is zero and the fit is degenerate")
        size = p * t
        return GeeFit(
            beta=beta,
            r_p=np.eye(p),
            r_t=np.eye(t),
            psi=0.0,
            a_diag=np.zeros(size),
            fitted_mu=layout.to_external(Z @ beta),
            model_cov=np.zeros((size, size)),
            design_matrix=layout.to_external(Z.T).T,
            converged=True,
            iterations=len(beta_path) - 1,
            degenerate=True,
            kron_order=self.kron_order,
            beta_path=beta_path,
        )


def fit_joint_gee(class_data: np.ndarray, design: GeeDesign, tol: float = 1e-8, max_iter: int = 50,
                  config: Optional[Dict] = None) -> GeeFit:
    """Convenience wrapper around JointGeeEstimator; tol and max_iter override config"""
    merged = dict(config or {})
    merged['gee'] = {**merged.get('gee', {}), 'tol': tol, 'max_iter': max_iter}
    return JointGeeEstimator(merged).fit(class_data, design)


def gee_lda_params(fit0: GeeFit, n0: int, fit1: GeeFit, n1: int, priors: str = 'empirical') -> GroupParams:
    """Class means from the fitted GEE means and the pooled model covariance"""
    if fit0.fitted_mu.shape != fit1.fitted_mu.shape:
        raise ValueError("GEE fits have incompatible dimensions")
    cov = pooled_covariance(fit0.model_cov, n0, fit1.model_cov, n1)
    return GroupParams(mu0=fit0.fitted_mu, mu1=fit1.fitted_mu, cov=cov,
                       priors=empirical_priors(n0, n1, priors))
