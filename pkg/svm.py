"""Fixed-kernel SVM dual solved by sequential minimal optimization.

Maximises  Q(a) = sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij
subject to sum(a * y) = 0 and 0 <= a <= C, updating the maximal violating
pair each step.  Internally we minimise f = -Q with gradient G = Qa - e.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config import SVM_C, SVM_TOL, SVM_MAX_ITER_FACTOR
from errors import ConvergenceError, DataError

logger = logging.getLogger(__name__)

_TAU = 1e-12  # curvature floor for non-positive-definite pairs


@dataclass
class DualSolution:
    alpha: np.ndarray
    b: float
    objective: float
    C: float
    iterations: int = 0
    violation: float = 0.0
    objective_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)


def _check_problem(K, y) -> tuple[np.ndarray, np.ndarray]:
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1 or -1")
    if np.all(y == 1) or np.all(y == -1):
        raise DataError("both classes must be present to train an SVM")
    scale = max(1.0, float(np.abs(K).max()))
    if np.abs(K - K.T).max() > 1e-8 * scale:
        raise ValueError("kernel matrix is not symmetric")
    return K, y


def _bias(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, C: float) -> float:
    """Average over free support vectors, else midpoint of the feasible interval."""
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(-yG[free].mean())
    at_upper = alpha >= C
    at_lower = ~at_upper
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float(-(ub + lb) / 2)


def _dual_objective(alpha: np.ndarray, G: np.ndarray) -> float:
    # f = 1/2 a'(G + e) - e'a ; Q = -f
    return float(alpha.sum() / 2 - alpha.dot(G) / 2)


def solve_dual(
    K,
    y,
    C: float = SVM_C,
    tol: float = SVM_TOL,
    max_iter: int | None = None,
    alpha0=None,
) -> DualSolution:
    """Solve the SVM dual for a fixed Gram matrix.

    ``alpha0`` must be feasible for (y, C); it warm-starts the solver.
    """
    K, y = _check_problem(K, y)
    if not C > 0:
        raise ValueError(f"C must be > 0, got {C}")
    n = y.shape[0]
    max_iter = max_iter or SVM_MAX_ITER_FACTOR * n * n

    if alpha0 is None:
        alpha = np.zeros(n)
        G = -np.ones(n)
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=float), 0.0, C)
        G = y * (K @ (alpha * y)) - 1.0

    diag = np.diag(K)
    trace = [_dual_objective(alpha, G)]
    violation = np.inf
    it = 0
    while True:
        score = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            violation = 0.0
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        violation = score[i] - score[j]
        if violation <= tol:
            break
        if it >= max_iter:
            best = DualSolution(alpha, _bias(alpha, y, G, C), trace[-1], C, it, violation, trace)
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} pair updates (violation {violation:.3g})",
                best=best,
            )

        eta = diag[i] + diag[j] - 2 * K[i, j]
        step = violation / max(eta, _TAU)
        bound_i = C - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = C - alpha[j] if y[j] < 0 else alpha[j]
        step = min(step, bound_i, bound_j)

        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        # snap onto the box so bound checks stay exact
        for k, bound in ((i, bound_i), (j, bound_j)):
            if step == bound or alpha[k] < 0 or alpha[k] > C:
                alpha[k] = min(max(round(alpha[k] / C) * C, 0.0), C)
        G += step * y * (K[:, i] - K[:, j])
        trace.append(_dual_objective(alpha, G))
        it += 1

    sol = DualSolution(alpha, _bias(alpha, y, G, C), trace[-1], C, it, float(violation), trace)
    logger.debug("SMO converged in %d updates, %d support vectors", it, sol.support_indices.size)
    return sol


def decision(sol: DualSolution, y, kernel_row) -> float:
    """sum_i a_i y_i k(x_i, x) + b for one query's combined kernel row."""
    y = np.asarray(y, dtype=float)
    row = np.asarray(kernel_row, dtype=float)
    if row.shape != sol.alpha.shape or y.shape != sol.alpha.shape:
        raise ValueError(
            f"kernel row of length {row.shape} does not match {sol.alpha.shape[0]} training samples"
        )
    return float((sol.alpha * y).dot(row) + sol.b)
