"""
Dense convex QP with box constraints and one linear equality
Pairwise (SMO-style) updates with maximal-violating-pair selection
"""

from dataclasses import dataclass
from typing import Optional

import logging
import numpy as np
from scipy.linalg import eigh

from src.errors import EstimationError, QpInfeasibleError

logger = logging.getLogger(__name__)

PSD_CLIP_TOL = 1e-8
ETA_FLOOR = 1e-12


@dataclass
class QpProblem:
    """minimize 0.5 x'Qx + linear'x  s.t.  lo <= x <= hi,  a'x = s"""
    Q: np.ndarray
    linear: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    a: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = self.Q.shape[0]
        self.linear = np.broadcast_to(np.asarray(self.linear, dtype=float), (n,)).copy()
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()
        self.a = np.broadcast_to(np.asarray(self.a, dtype=float), (n,)).copy()
        self.s = float(self.s)

        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be square, got {self.Q.shape}")
        if not np.allclose(self.Q, self.Q.T, rtol=0.0, atol=1e-10):
            raise ValueError("Q must be symmetric within 1e-10")
        if np.any(self.lo > self.hi):
            raise ValueError("box lower bounds exceed upper bounds")
        if np.any(self.a == 0):
            raise ValueError("equality coefficients must be nonzero")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.linear @ x)


def _psd_matrix(Q: np.ndarray) -> np.ndarray:
    """Clip slightly negative eigenvalues to zero; reject clearly indefinite Q"""
    smallest = float(eigh(Q, eigvals_only=True, subset_by_index=[0, 0])[0])
    # rounding-level negatives leave the solution unchanged
    if smallest >= -1e-12:
        return Q
    if smallest < -PSD_CLIP_TOL:
        raise EstimationError(f"Q is not positive semidefinite: smallest eigenvalue {smallest:.3e}")
    eigvals, eigvecs = np.linalg.eigh(Q)
    clipped = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
    return (clipped + clipped.T) / 2


class PairwiseQpSolver:
    """
    Solves QpProblem in the scaled variable u = a * x, where the equality
    becomes sum(u) = s and each update moves mass between two coordinates
    """

    def __init__(self, tol: float = 1e-8, max_iter: Optional[int] = None):
        self.tol = float(tol)
        self.max_iter = max_iter
        self.logger = logging.getLogger(__name__)
        self.iterations = 0
        self.converged = False

    def solve(self, problem: QpProblem, x0: Optional[np.ndarray] = None) -> np.ndarray:
        a = problem.a
        Q = _psd_matrix(problem.Q) / np.outer(a, a)
        c = problem.linear / a
        lower = np.where(a > 0, a * problem.lo, a * problem.hi)
        upper = np.where(a > 0, a * problem.hi, a * problem.lo)

        feas_tol = 1e-9 * max(1.0, abs(problem.s), float(np.abs(lower).sum()), float(np.abs(upper).sum()))
        if lower.sum() > problem.s + feas_tol or upper.sum() < problem.s - feas_tol:
            raise QpInfeasibleError(
                f"box and equality constraints are infeasible: sum range "
                f"[{lower.sum():.6g}, {upper.sum():.6g}] excludes {problem.s:.6g}")

        u = self._start(lower, upper, problem.s, None if x0 is None else a * np.asarray(x0, dtype=float))
        g = Q @ u + c

        n = problem.n
        max_iter = self.max_iter or max(10_000, 200 * n)
        self.converged = False
        for iteration in range(max_iter):
            up = u < upper
            down = u > lower
            if not up.any() or not down.any():
                self.converged = True
                break
            i = int(np.flatnonzero(up)[np.argmin(g[up])])
            j = int(np.flatnonzero(down)[np.argmax(g[down])])
            violation = g[j] - g[i]
            if violation <= self.tol:
                self.converged = True
                break

            eta = max(Q[i, i] + Q[j, j] - 2.0 * Q[i, j], ETA_FLOOR)
            room_i = upper[i] - u[i]
            room_j = u[j] - lower[j]
            delta = min(violation / eta, room_i, room_j)

            u[i] = upper[i] if delta == room_i else u[i] + delta
            u[j] = lower[j] if delta == room_j else u[j] - delta
            g += delta * (Q[:, i] - Q[:, j])
        else:
            iteration = max_iter
        self.iterations = iteration

        if not self.converged:
            self.logger.warning(f"QP solver stopped after {max_iter} pair updates without meeting tol={self.tol}")
        else:
            self.logger.debug(f"QP solved in {iteration} pair updates")
        return u / a

    @staticmethod
    def _start(lower: np.ndarray, upper: np.ndarray, s: float, u0: Optional[np.ndarray]) -> np.ndarray:
        """Warm start when it is feasible, otherwise fill from the lower bounds greedily"""
        if u0 is not None:
            u = np.clip(u0, lower, upper)
            if abs(u.sum() - s) <= 1e-10 * max(1.0, abs(s), float(np.abs(u).sum())):
                return u
        u = lower.copy()
        remaining = s - u.sum()
        for k in range(u.size):
            if remaining <= 0:
                break
            add = min(upper[k] - lower[k], remaining)
            u[k] += add
            remaining -= add
        return u


def solve_qp(problem: QpProblem, tol: float = 1e-8, x0: Optional[np.ndarray] = None,
             max_iter: Optional[int] = None) -> np.ndarray:
    """
    KKT-optimal solution of a box + single-equality convex QP

    Args:
        problem: QpProblem
        tol: maximal KKT violation at termination
        x0: optional warm start (used when feasible)
        max_iter: cap on pair updates

    Returns:
        Solution vector x
    """
    return PairwiseQpSolver(tol=tol, max_iter=max_iter).solve(problem, x0=x0)
