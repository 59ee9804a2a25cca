"""L2-regularised logistic regression fitted by damped Newton steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # feature weights followed by the intercept
    converged: bool
    n_iter: int

    @property
    def coef(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def intercept(self) -> float:
        return float(self.weights[-1])

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        """Probability of the positive class."""
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)


def _objective(w, Xa, y, l2):
    z = Xa @ w
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    return loss + 0.5 * l2 * float(w[:-1] @ w[:-1])


def logistic_fit(X, y, l2: float = 1e-4, max_iter: int = 100, tol: float = 1e-6) -> LogisticModel:
    """Minimise mean log loss + ``l2/2 * |coef|^2`` (intercept unpenalised).

    Converged once the gradient's max-norm drops below ``tol``; otherwise the
    best iterate seen is returned with ``converged=False``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, f = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    reg = np.full(f + 1, l2)
    reg[-1] = 0.0
    w = np.zeros(f + 1)
    obj = _objective(w, Xa, y, l2)
    best_w, best_obj = w, obj
    for it in range(1, max_iter + 1):
        p = sigmoid(Xa @ w)
        grad = Xa.T @ (p - y) / n + reg * w
        if np.max(np.abs(grad)) < tol:
            return LogisticModel(w, True, it - 1)
        h = p * (1.0 - p)
        H = (Xa * h[:, None]).T @ Xa / n + np.diag(reg) + 1e-10 * np.eye(f + 1)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while t > 1e-10:
            cand = w - t * step
            cand_obj = _objective(cand, Xa, y, l2)
            if cand_obj <= obj - 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            break
        w, obj = cand, cand_obj
        if obj < best_obj:
            best_w, best_obj = w, obj
    p = sigmoid(Xa @ best_w)
    grad = Xa.T @ (p - y) / n + reg * best_w
    return LogisticModel(best_w, bool(np.max(np.abs(grad)) < tol), max_iter)
