"""Top principal components by power iteration with deflation."""
from __future__ import annotations

import numpy as np

_TOL = 1e-14
_MAX_ITER = 20000


def _orthogonalize(v, basis):
    for b in basis:
        v = v - (b @ v) * b
    return v


def pca_components(X, n_components: int = 2):
    """Return ``(components, eigenvalues, mean)``; components are unit rows.

    Each component's largest-magnitude loading is made positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, f = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / max(n - 1, 1)
    rng = np.random.default_rng(0)
    comps, vals = [], []
    for _ in range(min(n_components, f)):
        v = _orthogonalize(rng.standard_normal(f), comps)
        v /= np.linalg.norm(v)
        for _ in range(_MAX_ITER):
            w = _orthogonalize(C @ v, comps)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            w /= norm
            done = np.linalg.norm(w - v) < _TOL
            v = w
            if done:
                break
        v = _orthogonalize(v, comps)
        v /= np.linalg.norm(v)
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        lam = float(v @ C @ v)
        comps.append(v)
        vals.append(lam)
        C = C - lam * np.outer(v, v)
    return np.array(comps), np.array(vals), mean


def pca2(X) -> np.ndarray:
    """n x 2 scores on the top two principal components."""
    comps, _, mean = pca_components(X, 2)
    scores = (np.asarray(X, dtype=np.float64) - mean) @ comps.T
    if scores.shape[1] < 2:
        scores = np.hstack([scores, np.zeros((len(scores), 2 - scores.shape[1]))])
    return scores
