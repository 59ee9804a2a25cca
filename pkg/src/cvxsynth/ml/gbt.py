"""Gradient-boosted logistic classifiers on CART regression trees.

Two classes use one boosted model; more classes use one-vs-rest models.
Each tree is fitted to the pseudo-residuals ``y - p`` and contributes its
leaf means scaled by the learning rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cart import REGRESS, cart_fit
from .logistic import sigmoid

_EPS = 1e-12


@dataclass
class GbtModel:
    classes: np.ndarray
    init: np.ndarray
    trees: list = field(default_factory=list)  # one list of trees per binary model
    learning_rate: float = 0.1

    @property
    def n_trees(self) -> int:
        return len(self.trees[0]) if self.trees else 0

    def decision_function(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        scores = np.tile(self.init, (len(X), 1))
        for m, trees in enumerate(self.trees):
            for tree in trees[:n_trees]:
                scores[:, m] += self.learning_rate * tree.predict(X)
        return scores

    def predict_proba(self, X, n_trees: int | None = None) -> np.ndarray:
        if len(self.classes) == 1:
            return np.ones((len(X), 1))
        p = sigmoid(self.decision_function(X, n_trees))
        if len(self.classes) == 2:
            return np.column_stack([1.0 - p[:, 0], p[:, 0]])
        return p / np.maximum(p.sum(axis=1, keepdims=True), _EPS)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def log_loss(self, X, y, n_trees: int | None = None) -> float:
        """Mean negative log-likelihood of the binary models' own targets."""
        y = np.asarray(y)
        scores = self.decision_function(X, n_trees)
        total = 0.0
        for m, target in enumerate(self._targets(y)):
            z = scores[:, m]
            total += float(np.mean(np.logaddexp(0.0, z) - target * z))
        return total

    def _targets(self, y):
        if len(self.classes) == 2:
            return [(y == self.classes[1]).astype(np.float64)]
        return [(y == c).astype(np.float64) for c in self.classes]


def gbt_fit(X, y, n_trees: int = 100, lr: float = 0.1, max_depth: int = 3) -> GbtModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    model = GbtModel(classes, np.zeros(0), [], lr)
    if len(classes) == 1:
        return model
    targets = model._targets(y)
    init = []
    for target in targets:
        prior = np.clip(target.mean(), _EPS, 1.0 - _EPS)
        init.append(np.log(prior / (1.0 - prior)))
    model.init = np.array(init)
    for m, target in enumerate(targets):
        F = np.full(len(X), model.init[m])
        trees = []
        for _ in range(n_trees):
            residual = target - sigmoid(F)
            tree = cart_fit(X, residual, REGRESS, max_depth=max_depth)
            F += lr * tree.predict(X)
            trees.append(tree)
        model.trees.append(trees)
    return model
