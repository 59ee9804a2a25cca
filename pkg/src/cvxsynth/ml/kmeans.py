"""Lloyd's k-means with k-means++ seeding."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 300


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return _assign(np.asarray(X, dtype=np.float64), self.centroids)[0]


def _sq_dists(X, C):
    return np.maximum(
        np.einsum("ij,ij->i", X, X)[:, None] - 2.0 * X @ C.T + np.einsum("ij,ij->i", C, C)[None, :], 0.0
    )


def _assign(X, C):
    d = _sq_dists(X, C)
    labels = np.argmin(d, axis=1)
    return labels, float(d[np.arange(len(X)), labels].sum())


def _plus_plus(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = _sq_dists(X, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans_fit(X, k: int, seed: int, max_iter: int = MAX_ITER) -> KMeansModel:
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise ValueError("k must lie between 1 and the number of rows")
    rng = np.random.default_rng(seed)
    C = _plus_plus(X, k, rng)
    labels, inertia = _assign(X, C)
    history = [inertia]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        newC = C.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                newC[c] = X[members].mean(axis=0)
        C = newC
        new_labels, inertia = _assign(X, C)
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansModel(C, labels, inertia, n_iter, history)
