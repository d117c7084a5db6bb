"""
Longitudinal linear SVM
Alternating optimization of Lagrange multipliers alpha and temporal weights beta
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import logging
import numpy as np
from scipy.linalg import solve
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import StratifiedKFold
from sklearn.svm import SVC

from src.dataset import LongitudinalDataset
from src.errors import DegenerateDataError, EstimationError
from src.qp import QpProblem, solve_qp

logger = logging.getLogger(__name__)

BETA_RIDGE = 1e-10
ALPHA_SOLVERS = ('libsvm', 'pairwise')


@dataclass
class StandardizationStats:
    """Per (variable, time) training mean and standard deviation, shape (p, t)"""
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {'mean': self.mean.tolist(), 'scale': self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'StandardizationStats':
        return cls(mean=np.asarray(data['mean'], dtype=float), scale=np.asarray(data['scale'], dtype=float))


@dataclass
class LsvmModel:
    """
    Fitted longitudinal SVM

    Class 0 is the positive label (+1) and class 1 the negative label (-1).
    h(x) = w' (x' beta) + b; label -1 iff h(x) < threshold.
    """
    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    b: float
    c_reg: float
    converged: bool
    iterations: int
    threshold: float = 1.0
    standardization: Optional[StandardizationStats] = None
    alpha_m_steps: List[float] = field(default_factory=list)
    alpha_path: List[np.ndarray] = field(default_factory=list, repr=False)
    beta_path: List[np.ndarray] = field(default_factory=list, repr=False)

    def alpha_m(self) -> np.ndarray:
        """(alpha, beta_1 alpha, ..., beta_{t-1} alpha) stacked time-block-wise"""
        return np.kron(self.beta, self.alpha)

    def to_dict(self) -> dict:
        return {
            'alpha': self.alpha.tolist(),
            'beta': self.beta.tolist(),
            'w': self.w.tolist(),
            'b': self.b,
            'c_reg': self.c_reg,
            'converged': self.converged,
            'iterations': self.iterations,
            'threshold': self.threshold,
            'standardization': self.standardization.to_dict() if self.standardization else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LsvmModel':
        stats = data.get('standardization')
        return cls(alpha=np.asarray(data['alpha'], dtype=float),
                   beta=np.asarray(data['beta'], dtype=float),
                   w=np.asarray(data['w'], dtype=float),
                   b=float(data['b']),
                   c_reg=float(data['c_reg']),
                   converged=bool(data['converged']),
                   iterations=int(data['iterations']),
                   threshold=float(data.get('threshold', 1.0)),
                   standardization=StandardizationStats.from_dict(stats) if stats else None)


def to_svm_labels(labels: np.ndarray) -> np.ndarray:
    """Class 0 -> +1, class 1 -> -1"""
    return np.where(np.asarray(labels) == 0, 1.0, -1.0)


def from_svm_labels(y: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(y) > 0, 0, 1)


def standardize(train: LongitudinalDataset) -> Tuple[LongitudinalDataset, StandardizationStats]:
    """
    Per-coordinate (variable x time) standardization to mean 0, variance 1

    Raises:
        DegenerateDataError: a coordinate has zero variance
    """
    if train.n < 2:
        raise ValueError("standardization needs at least two subjects")
    mean = train.values.mean(axis=0)
    scale = train.values.std(axis=0, ddof=1)
    if np.any(scale <= 0):
        bad = [(train.variable_names[l], k + 1) for l, k in zip(*np.nonzero(scale <= 0))]
        raise DegenerateDataError(f"zero-variance coordinates (variable, time): {bad}")
    stats = StandardizationStats(mean=mean, scale=scale)
    standardized = LongitudinalDataset(values=stats.apply(train.values), labels=train.labels.copy(),
                                       variable_names=list(train.variable_names),
                                       subject_ids=train.subject_ids)
    return standardized, stats


def _labeled_blocks(ds: LongitudinalDataset) -> np.ndarray:
    """X[:, :, k] = rows y_j x_jk, shape (n, p, t)"""
    y = to_svm_labels(ds.labels)
    return y[:, None, None] * ds.values


def build_gram_blocks(data: LongitudinalDataset) -> np.ndarray:
    """
    Block Gram matrix G[k1, k2] = X_k1 X_k2' with X_k = (y_j x_jk)_j

    Returns:
        (t, t, n, n) array
    """
    X = _labeled_blocks(data)
    return np.einsum('iak,jal->klij', X, X)


def _beta_step(M: np.ndarray) -> np.ndarray:
    """minimize 0.5 beta'M beta with beta_0 = 1"""
    t = M.shape[0]
    if t == 1:
        return np.ones(1)
    M22 = M[1:, 1:]
    rhs = -M[1:, 0]
    eigvals = np.linalg.eigvalsh(M22)
    if eigvals[0] <= BETA_RIDGE * max(1.0, float(eigvals[-1])):
        M22 = M22 + BETA_RIDGE * np.eye(t - 1)
    return np.concatenate(([1.0], solve(M22, rhs, assume_a='sym')))


class LongitudinalSVM:
    """Alternating alpha/beta optimization of the longitudinal SVM dual"""

    def __init__(self, config: Optional[Dict] = None):
        svm_config = (config or {}).get('svm', {})
        self.tol = float(svm_config.get('tol', 1e-8))
        self.max_iter = int(svm_config.get('max_iter', 100))
        self.qp_tol = float(svm_config.get('qp_tol', 1e-8))
        self.threshold = float(svm_config.get('decision_threshold', 1.0))
        self.alpha_solver = svm_config.get('alpha_solver', 'libsvm')
        if self.alpha_solver not in ALPHA_SOLVERS:
            raise ValueError(f"alpha_solver must be one of {ALPHA_SOLVERS}, got {self.alpha_solver!r}")
        self.qp_max_iter = svm_config.get('qp_max_iter')
        self.logger = logging.getLogger(__name__)

    def _alpha_step(self, Q: np.ndarray, y: np.ndarray, c_reg: float,
                    alpha: Optional[np.ndarray]) -> np.ndarray:
        """
        Solve min 0.5 a'Qa - 1'a s.t. 0 <= a <= C, y'a = 0

        libsvm works on the unlabeled kernel Q * yy' with labels y; the pairwise
        solver takes Q directly and warm-starts from the previous alpha.
        """
        if self.alpha_solver == 'pairwise':
            problem = QpProblem(Q=Q, linear=-np.ones(len(y)), lo=0.0, hi=c_reg, a=y, s=0.0)
            return solve_qp(problem, tol=self.qp_tol, x0=alpha, max_iter=self.qp_max_iter)

        kernel = Q * np.outer(y, y)
        svc = SVC(kernel='precomputed', C=c_reg, tol=self.qp_tol, shrinking=True,
                  max_iter=int(self.qp_max_iter or -1))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', ConvergenceWarning)
            svc.fit(kernel, y)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            self.logger.warning(f"libsvm alpha-step stopped before tol={self.qp_tol:g} (C={c_reg:g})")

        result = np.zeros(len(y))
        result[svc.support_] = np.abs(svc.dual_coef_[0])
        result = np.clip(result, 0.0, c_reg)
        # round-off in y'a goes to the free coordinates
        free = (result > 0.0) & (result < c_reg)
        if free.any():
            result[free] -= y[free] * float(result @ y) / free.sum()
            result = np.clip(result, 0.0, c_reg)
        return result

    def fit(self, data: LongitudinalDataset, c_reg: float, standardize_data: bool = True) -> LsvmModel:
        if c_reg <= 0:
            raise ValueError(f"C must be positive, got {c_reg}")
        if data.n0 == 0 or data.n1 == 0:
            raise EstimationError("longitudinal SVM needs both classes in the training data")

        stats = None
        if standardize_data:
            data, stats = standardize(data)

        y = to_svm_labels(data.labels)
        X = _labeled_blocks(data)
        t = data.t

        beta = np.ones(t)
        alpha = None
        previous = None
        steps = []
        alpha_path, beta_path = [], []
        converged = False
        iteration = 0

        for iteration in range(1, self.max_iter + 1):
            # alpha-step: kernel sum_k1k2 beta_k1 beta_k2 G^k1k2 = X~ X~'
            X_tilde = X @ beta
            alpha = self._alpha_step(X_tilde @ X_tilde.T, y, c_reg, alpha)
            alpha_path.append(alpha.copy())
            beta_path.append(beta.copy())

            balance = float(alpha @ y)
            if abs(balance) > 1e-8:
                self.logger.warning(f"alpha-step equality residual {balance:.3e} exceeds 1e-8")

            # beta-step: M[k1, k2] = alpha' G^k1k2 alpha = V_k1 . V_k2 with V_k = X_k' alpha
            V = np.einsum('jpt,j->tp', X, alpha)
            beta = _beta_step(V @ V.T)
            if abs(balance * beta.sum()) > 1e-6:
                self.logger.warning("beta-step side constraint is not vacuous for this alpha")

            current = np.kron(beta, alpha)
            if previous is not None:
                step = float(np.linalg.norm(current - previous))
                steps.append(step)
                if step < self.tol:
                    converged = True
                    break
            previous = current

        if converged:
            self.logger.debug(f"Longitudinal SVM converged in {iteration} iterations (C={c_reg:g})")
        else:
            self.logger.warning(f"Longitudinal SVM did not converge after {self.max_iter} iterations (C={c_reg:g})")

        # w = sum_j y_j alpha_j x~_j; b = mean_j (w' x_j' beta - y_j)
        w = (X @ beta).T @ alpha
        raw_tilde = data.values @ beta
        b = float(np.mean(raw_tilde @ w - y))

        return LsvmModel(alpha=alpha, beta=beta, w=w, b=b, c_reg=float(c_reg), converged=converged,
                         iterations=iteration, threshold=self.threshold, standardization=stats,
                         alpha_m_steps=steps, alpha_path=alpha_path, beta_path=beta_path)


def fit_lsvm(data: LongitudinalDataset, c_reg: float, tol: float = 1e-8, max_iter: int = 100,
             standardize_data: bool = True, config: Optional[Dict] = None) -> LsvmModel:
    """
    Fit the longitudinal SVM for a fixed C

    Args:
        data: training dataset (raw scale unless standardize_data is False)
        c_reg: regularization parameter C
        tol: Euclidean distance between consecutive alpha_m
        max_iter: maximum alternating iterations
        standardize_data: standardize per coordinate and keep the statistics
        config: optional config with an 'svm' section

    Returns:
        LsvmModel; converged is False when max_iter is reached
    """
    merged = dict(config or {})
    merged['svm'] = {**merged.get('svm', {}), 'tol': tol, 'max_iter': max_iter}
    return LongitudinalSVM(merged).fit(data, c_reg, standardize_data=standardize_data)


def lsvm_decision_function(model: LsvmModel, values: np.ndarray,
                           train_standardization: Optional[StandardizationStats] = None) -> np.ndarray:
    """
    h(x) for one (p, t) subject or a stack of shape (n, p, t)
    """
    stats = train_standardization or model.standardization
    values = np.asarray(values, dtype=float)
    if stats is not None:
        values = stats.apply(values)
    return values @ model.beta @ model.w + model.b


def lsvm_predict(model: LsvmModel, x: np.ndarray,
                 train_standardization: Optional[StandardizationStats] = None) -> Union[int, np.ndarray]:
    """
    Class labels (0/1) for one t x p subject matrix or an (n, p, t) stack

    The single-subject form takes the t x p layout (rows are time points);
    h(x) < threshold maps to the negative label -1, i.e. class 1.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        h = lsvm_decision_function(model, x.T, train_standardization)
        return int(from_svm_labels(np.where(h < model.threshold, -1.0, 1.0)))
    h = lsvm_decision_function(model, x, train_standardization)
    return from_svm_labels(np.where(h < model.threshold, -1.0, 1.0))


def support_vectors(model: LsvmModel, eps: float = 1e-10) -> np.ndarray:
    """Indices j whose alpha_m entries are nonzero at every time block"""
    alpha_m = model.alpha_m().reshape(model.beta.size, model.alpha.size)
    return np.flatnonzero(np.all(np.abs(alpha_m) > eps * max(1.0, model.c_reg), axis=0))


def select_c_grid(data: LongitudinalDataset, grid: Sequence[float], folds: int = 5, seed: int = 0,
                  config: Optional[Dict] = None) -> float:
    """
    Stratified k-fold cross-validated choice of C; ties go to the smallest C

    Folds whose training or test part lacks a class are skipped.
    """
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise ValueError("C grid must not be empty")
    if grid[0] <= 0:
        raise ValueError("C grid values must be positive")
    if len(grid) == 1:
        return grid[0]

    n_splits = min(int(folds), data.n0, data.n1)
    if n_splits < 2:
        raise EstimationError(f"cannot cross-validate with class sizes ({data.n0}, {data.n1})")

    splitter = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=int(seed) % (2 ** 32))
    svm = LongitudinalSVM(config)
    scores = {c: [] for c in grid}
    for fold, (train_idx, test_idx) in enumerate(splitter.split(np.zeros(data.n), data.labels)):
        train, test = data.subset(train_idx), data.subset(test_idx)
        if train.n0 == 0 or train.n1 == 0 or test.n == 0:
            logger.debug(f"Skipping fold {fold}: single class")
            continue
        for c in grid:
            model = svm.fit(train, c)
            predicted = lsvm_predict(model, test.values)
            scores[c].append(float(np.mean(predicted == test.labels)))

    if not any(scores.values()):
        raise EstimationError("all cross-validation folds were skipped")

    best_c = grid[0]
    best_score = -np.inf
    for c in grid:
        mean_score = float(np.mean(scores[c]))
        if mean_score > best_score:
            best_c, best_score = c, mean_score
    logger.debug(f"Selected C={best_c:g} with CV accuracy {best_score:.4f}")
    return best_c
