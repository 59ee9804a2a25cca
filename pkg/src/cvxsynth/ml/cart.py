"""Greedy CART trees: Gini impurity for classification, squared error for regression.

Split ties go to the lower feature index, then the lower threshold.  Rows
with ``x <= threshold`` go left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASSIFY = "classify"
REGRESS = "regress"
_MIN_GAIN = 1e-12


@dataclass
class _Node:
    value: np.ndarray | float
    n: int
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class CartTree:
    kind: str
    root: _Node
    max_depth: int | None
    n_classes: int = 0

    def _leaves(self, X) -> list:
        X = np.asarray(X, dtype=np.float64)
        out = [None] * len(X)

        def route(node, idx):
            if node.is_leaf:
                for i in idx:
                    out[i] = node
                return
            go_left = X[idx, node.feature] <= node.threshold
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(len(X)))
        return out

    def predict_value(self, X) -> np.ndarray:
        """Leaf payloads: class histograms (n x C) or means (n,)."""
        leaves = self._leaves(X)
        if self.kind == REGRESS:
            return np.array([leaf.value for leaf in leaves], dtype=np.float64)
        return np.array([leaf.value for leaf in leaves], dtype=np.float64).reshape(len(leaves), self.n_classes)

    def predict(self, X) -> np.ndarray:
        vals = self.predict_value(X)
        if self.kind == REGRESS:
            return vals
        return np.argmax(vals, axis=1)

    def route_one(self, row) -> _Node:
        node = self.root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node

    @property
    def depth(self) -> int:
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def n_leaves(self) -> int:
        def walk(node):
            return 1 if node.is_leaf else walk(node.left) + walk(node.right)

        return walk(self.root)


def _best_split_classify(X, Y):
    n, f = X.shape
    total = Y.sum(axis=0)
    best = (np.inf, -1, 0.0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    for j in range(f):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cl = np.cumsum(Y[order], axis=0)[:-1]
        cr = total - cl
        gl = nl - np.sum(cl * cl, axis=1) / nl
        gr = nr - np.sum(cr * cr, axis=1) / nr
        score = np.where(valid, gl + gr, np.inf)
        i = int(np.argmin(score))
        if score[i] < best[0] - _MIN_GAIN:
            best = (score[i], j, _threshold(xs[i], xs[i + 1]))
    return best


def _best_split_regress(X, y):
    n, f = X.shape
    best = (np.inf, -1, 0.0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    total, total_sq = y.sum(), (y * y).sum()
    for j in range(f):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        ys = y[order]
        sl = np.cumsum(ys)[:-1]
        ql = np.cumsum(ys * ys)[:-1]
        sse = (ql - sl * sl / nl) + ((total_sq - ql) - (total - sl) ** 2 / nr)
        score = np.where(valid, sse, np.inf)
        i = int(np.argmin(score))
        if score[i] < best[0] - _MIN_GAIN:
            best = (score[i], j, _threshold(xs[i], xs[i + 1]))
    return best


def _threshold(lo, hi):
    mid = 0.5 * (lo + hi)
    return lo if mid >= hi else mid


def cart_fit(X, y, kind: str = CLASSIFY, max_depth: int | None = None, min_samples_leaf: int = 1,
             n_classes: int | None = None) -> CartTree:
    """Fit a tree.  Classification labels must be integer codes ``0..C-1``."""
    if kind not in (CLASSIFY, REGRESS):
        raise ValueError(f"unknown tree kind {kind!r}")
    X = np.asarray(X, dtype=np.float64)
    if kind == CLASSIFY:
        y = np.asarray(y, dtype=np.int64)
        C = int(n_classes if n_classes is not None else (y.max() + 1 if y.size else 1))
        target = np.eye(C)[y] if y.size else np.zeros((0, C))
    else:
        C = 0
        target = np.asarray(y, dtype=np.float64)

    def payload(idx):
        if kind == CLASSIFY:
            return target[idx].sum(axis=0)
        return float(target[idx].mean()) if idx.size else 0.0

    def impurity(idx):
        if kind == CLASSIFY:
            c = target[idx].sum(axis=0)
            return idx.size - float(c @ c) / idx.size
        t = target[idx]
        return float(((t - t.mean()) ** 2).sum())

    def grow(idx, depth):
        node = _Node(payload(idx), int(idx.size))
        if idx.size < 2 * min_samples_leaf or (max_depth is not None and depth >= max_depth):
            return node
        parent = impurity(idx)
        if parent <= _MIN_GAIN:
            return node
        finder = _best_split_classify if kind == CLASSIFY else _best_split_regress
        score, j, thr = finder(X[idx], target[idx])
        if j < 0 or parent - score <= _MIN_GAIN:
            return node
        left = idx[X[idx, j] <= thr]
        right = idx[X[idx, j] > thr]
        if left.size < min_samples_leaf or right.size < min_samples_leaf:
            return node
        node.feature, node.threshold = j, float(thr)
        node.left = grow(left, depth + 1)
        node.right = grow(right, depth + 1)
        return node

    return CartTree(kind, grow(np.arange(len(X)), 0), max_depth, C)
