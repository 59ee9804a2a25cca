"""Utility measures comparing a real table with a synthetic one.

Encoded views always use the *real* table's observed ranges.  Metrics that
involve fitting or random partitioning first sort their inputs into a
canonical row order, so results do not depend on how either table is
ordered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import Schema, Table, encode, fit_ranges
from .errors import ClassTooSmall, NoCategoricalFeatures, NoContinuousFeatures, TargetClassMissing
from .ml import f1_macro, gbt_fit, kmeans_fit, logistic_fit, pca2, stratified_folds
from .stats import student_ttest

LOG_FLOOR = 1e-12
GBT_TREES, GBT_LR, GBT_DEPTH = 100, 0.1, 3

UTILITY_METRICS = ("ttest", "kl", "propensity", "log_cluster", "cv", "holdout", "crossclass", "ks2d")


def _fitted(real: Table) -> Schema:
    return fit_ranges(real)


def _canonical_order(values: np.ndarray) -> np.ndarray:
    return np.lexsort(values.T[::-1]) if len(values) else np.arange(0)


def _encoded(table: Table, fitted: Schema) -> np.ndarray:
    return encode(table, fitted).values


# --- univariate fidelity ---------------------------------------------------


def ttest_pvalues(real: Table, synth: Table) -> dict[str, float]:
    names = real.schema.continuous
    if not names:
        raise NoContinuousFeatures("the t-test needs at least one continuous feature")
    return {n: student_ttest(real.column(n), synth.column(n))[2] for n in names}


def ttest_mean_p(real: Table, synth: Table) -> float:
    """Mean two-sided pooled-variance t-test p-value over continuous features."""
    return float(np.mean(list(ttest_pvalues(real, synth).values())))


def kl_divergences(real: Table, synth: Table) -> dict[str, float]:
    names = real.schema.categorical
    if not names:
        raise NoCategoricalFeatures("KL divergence needs at least one categorical feature")
    out = {}
    for n in names:
        m = real.schema.feature(n).n_levels
        p = np.bincount(real.class_codes(n), minlength=m) + 1.0
        q = np.bincount(synth.class_codes(n), minlength=m) + 1.0
        p /= p.sum()
        q /= q.sum()
        out[n] = float(np.sum(p * np.log(p / q)))
    return out


def kl_mean(real: Table, synth: Table) -> float:
    """Mean add-one-smoothed KL(real || synthetic) over categorical features."""
    return float(np.mean(list(kl_divergences(real, synth).values())))


# --- distinguishability ----------------------------------------------------


def propensity_from_probs(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(np.mean((p - 0.5) ** 2))


def propensity(real: Table, synth: Table, l2: float = 1e-4) -> float:
    """Mean squared deviation from 0.5 of an in-sample logistic real-vs-synthetic score."""
    fitted = _fitted(real)
    X = np.vstack([_encoded(real, fitted), _encoded(synth, fitted)])
    y = np.r_[np.ones(real.n_rows), np.zeros(synth.n_rows)]
    order = _canonical_order(np.column_stack([X, y]))
    X, y = X[order], y[order]
    model = logistic_fit(X, y, l2=l2)
    return propensity_from_probs(model.predict_proba(X))


def log_cluster_from_labels(clusters, is_real, k: int) -> float:
    clusters = np.asarray(clusters)
    is_real = np.asarray(is_real, dtype=bool)
    c = is_real.mean()
    terms = []
    for i in range(k):
        members = clusters == i
        if members.any():
            terms.append((is_real[members].mean() - c) ** 2)
    return float(math.log(max(float(np.mean(terms)), LOG_FLOOR)))


def log_cluster(real: Table, synth: Table, k: int = 2, seed: int = 0) -> float:
    """Log of the mean squared gap between per-cluster and overall real proportions."""
    fitted = _fitted(real)
    X = np.vstack([_encoded(real, fitted), _encoded(synth, fitted)])
    is_real = np.r_[np.ones(real.n_rows, dtype=bool), np.zeros(synth.n_rows, dtype=bool)]
    order = _canonical_order(X)
    model = kmeans_fit(X[order], k, seed)
    return log_cluster_from_labels(model.labels, is_real[order], k)


# --- machine-learning efficacy ---------------------------------------------


def _xy(table: Table, fitted: Schema, target: str):
    X = _encoded(table, fitted)
    j = fitted.index(target)
    y = table.class_codes(target)
    X = np.delete(X, j, axis=1)
    order = _canonical_order(np.column_stack([X, y]))
    return X[order], y[order]


def _cv_f1(X, y, folds: int, seed: int) -> float:
    _, counts = np.unique(y, return_counts=True)
    if counts.min() < folds:
        raise ClassTooSmall(f"a target class has {counts.min()} rows, fewer than {folds} folds")
    scores = []
    for tr, te in stratified_folds(y, folds, np.random.default_rng(seed)):
        model = gbt_fit(X[tr], y[tr], GBT_TREES, GBT_LR, GBT_DEPTH)
        scores.append(f1_macro(y[te], model.predict(X[te])))
    return float(np.mean(scores))


def cv_abs_diff(real_train: Table, synth: Table, target: str | None = None, folds: int = 5, seed: int = 0) -> float:
    """|mean CV macro-F1 on real - mean CV macro-F1 on synthetic|."""
    target = target or real_train.schema.target
    fitted = _fitted(real_train)
    Xr, yr = _xy(real_train, fitted, target)
    Xs, ys = _xy(synth, fitted, target)
    return abs(_cv_f1(Xr, yr, folds, seed) - _cv_f1(Xs, ys, folds, seed))


def _holdout_f1(X, y, Xh, yh) -> float:
    model = gbt_fit(X, y, GBT_TREES, GBT_LR, GBT_DEPTH)
    return f1_macro(yh, model.predict(Xh))


def holdout_f1_abs_diff(real_train: Table, synth: Table, holdout: Table, target: str | None = None) -> float:
    """|F1(train on real, test on holdout) - F1(train on synthetic, test on holdout)|."""
    target = target or real_train.schema.target
    fitted = _fitted(real_train)
    Xr, yr = _xy(real_train, fitted, target)
    Xs, ys = _xy(synth, fitted, target)
    Xh, yh = _xy(holdout, fitted, target)
    missing = sorted(set(np.unique(yr).tolist()) - set(np.unique(yh).tolist()))
    if missing:
        cats = real_train.schema.feature(target).categories
        raise TargetClassMissing(f"holdout lacks target class(es) {[cats[c] for c in missing]}")
    return abs(_holdout_f1(Xr, yr, Xh, yh) - _holdout_f1(Xs, ys, Xh, yh))


def crossclass_diffs(real_train: Table, synth: Table, holdout: Table) -> dict[str, float]:
    names = real_train.schema.categorical
    if not names:
        raise NoCategoricalFeatures("cross-classification needs categorical features")
    fitted = _fitted(real_train)
    out = {}
    for t in names:
        Xr, yr = _xy(real_train, fitted, t)
        Xs, ys = _xy(synth, fitted, t)
        Xh, yh = _xy(holdout, fitted, t)
        out[t] = abs(_holdout_f1(Xr, yr, Xh, yh) - _holdout_f1(Xs, ys, Xh, yh))
    return out


def crossclass_abs_diff(real_train: Table, synth: Table, holdout: Table) -> float:
    """Mean over categorical features of the holdout F1 gap when predicting that feature."""
    return float(np.mean(list(crossclass_diffs(real_train, synth, holdout).values())))


# --- two-dimensional KS ----------------------------------------------------


# Full coordinate grid (Peacock) up to this many cells, sample points as origins beyond.
KS_GRID_LIMIT = 2_000_000


class _QuadrantCounter:
    """Quadrant fraction differences around candidate origins via a 2-D cumulative count grid."""

    def __init__(self, pts: np.ndarray):
        ux, rx = np.unique(pts[:, 0], return_inverse=True)
        uy, ry = np.unique(pts[:, 1], return_inverse=True)
        self.shape = (ux.size, uy.size)
        self.cell = rx * uy.size + ry
        self.origins = None if ux.size * uy.size <= KS_GRID_LIMIT else (rx, ry)
        self.total = self._lower_left(np.ones(len(pts), dtype=bool))

    def _lower_left(self, mask: np.ndarray):
        """Counts with x <= X and y <= Y, with x <= X, and with y <= Y, per origin."""
        grid = np.bincount(self.cell[mask], minlength=self.shape[0] * self.shape[1]).reshape(self.shape)
        cum = grid.cumsum(axis=0).cumsum(axis=1).astype(np.float64)
        if self.origins is None:
            return cum, cum[:, -1:], cum[-1:, :]
        rx, ry = self.origins
        return cum[rx, ry], cum[rx, -1], cum[-1, ry]

    def statistic(self, mask: np.ndarray) -> float:
        n_a = float(mask.sum())
        n_b = mask.size - n_a
        parts = []
        for a, t in zip(self._lower_left(mask), self.total):
            parts.append(a / n_a - (t - a) / n_b)
        both, x_le, y_le = parts
        # The four quadrants are linear in these three; the whole-plane difference is 0.
        return float(max(np.max(np.abs(both)), np.max(np.abs(x_le - both)), np.max(np.abs(y_le - both)),
                         np.max(np.abs(both - x_le - y_le))))


def ks2d(real: Table, synth: Table, permutations: int = 200, seed: int = 0) -> tuple[float, float]:
    """Two-sample 2-D KS statistic on the top two principal components, with a permutation p-value.

    Origins range over every (x_i, y_j) pair of pooled coordinates, so fully
    separated samples reach a statistic of exactly 1.
    """
    fitted = _fitted(real)
    X = np.vstack([_encoded(real, fitted), _encoded(synth, fitted)])
    is_real = np.r_[np.ones(real.n_rows, dtype=bool), np.zeros(synth.n_rows, dtype=bool)]
    order = _canonical_order(np.column_stack([X, is_real]))
    X, is_real = X[order], is_real[order]
    return ks2d_points(pca2(X), is_real, permutations, seed)


def ks2d_points(pts: np.ndarray, is_real: np.ndarray, permutations: int = 200, seed: int = 0) -> tuple[float, float]:
    counter = _QuadrantCounter(np.asarray(pts, dtype=np.float64))
    is_real = np.asarray(is_real, dtype=bool)
    stat = counter.statistic(is_real)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(permutations):
        if counter.statistic(rng.permutation(is_real)) >= stat - 1e-12:
            hits += 1
    return stat, (1 + hits) / (1 + permutations)


# --- report ----------------------------------------------------------------


@dataclass
class UtilityReport:
    ttest_mean_p: float | None = None
    kl_mean: float | None = None
    propensity: float | None = None
    log_cluster: float | None = None
    cv_abs_diff: float | None = None
    holdout_f1_abs_diff: float | None = None
    crossclass_abs_diff: float | None = None
    ks2d_stat: float | None = None
    ks2d_p: float | None = None
    per_feature: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "per_feature"}
        out = {k: v for k, v in out.items() if v is not None}
        if self.per_feature:
            out["per_feature"] = self.per_feature
        return out


def utility_report(real_train: Table, synth: Table, holdout: Table | None = None, metrics=None, seed: int = 0,
                   permutations: int = 200) -> UtilityReport:
    chosen = set(UTILITY_METRICS if metrics is None else metrics)
    rep = UtilityReport()
    if "ttest" in chosen:
        per = ttest_pvalues(real_train, synth)
        rep.ttest_mean_p = float(np.mean(list(per.values())))
        rep.per_feature["ttest_p"] = per
    if "kl" in chosen:
        per = kl_divergences(real_train, synth)
        rep.kl_mean = float(np.mean(list(per.values())))
        rep.per_feature["kl"] = per
    if "propensity" in chosen:
        rep.propensity = propensity(real_train, synth)
    if "log_cluster" in chosen:
        rep.log_cluster = log_cluster(real_train, synth, 2, seed)
    if "cv" in chosen:
        rep.cv_abs_diff = cv_abs_diff(real_train, synth, seed=seed)
    if holdout is not None and "holdout" in chosen:
        rep.holdout_f1_abs_diff = holdout_f1_abs_diff(real_train, synth, holdout)
    if holdout is not None and "crossclass" in chosen:
        per = crossclass_diffs(real_train, synth, holdout)
        rep.crossclass_abs_diff = float(np.mean(list(per.values())))
        rep.per_feature["crossclass"] = per
    if "ks2d" in chosen:
        rep.ks2d_stat, rep.ks2d_p = ks2d(real_train, synth, permutations, seed)
    return rep
