"""Distance-based privacy measures, exact copies, and two inference attacks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import CONTINUOUS, Schema, Table, encode, fit_ranges
from .errors import EmptyTable, NoQuasiIdentifiers
from .ml import cart_fit, f1_macro

CONT_TOL = 0.05
MIA_THRESHOLDS = (0.1, 0.2, 0.3, 0.4)
MIA_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
GOOD_PRIVACY_PRECISION = 0.5
UNDEFINED = "NA"

PRIVACY_METRICS = ("distance", "exact_match", "mia", "aia")

_CHUNK = 512


def _require_rows(*tables: Table):
    for t in tables:
        if t.n_rows == 0:
            raise EmptyTable("privacy measures need non-empty tables")


def _canonical(X: np.ndarray) -> np.ndarray:
    return X[np.lexsort(X.T[::-1])] if len(X) else X


# --- distances -------------------------------------------------------------


def _euclid_block(A, B):
    d = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * A @ B.T
    d = np.sqrt(np.maximum(d, 0.0))
    # The expansion leaves ~1e-8 residue on identical rows; recompute near-zero entries exactly.
    near = np.argwhere(d < 1e-6)
    if near.size:
        d[near[:, 0], near[:, 1]] = np.linalg.norm(A[near[:, 0]] - B[near[:, 1]], axis=1)
    return d


def distance_matrices(A: np.ndarray, B: np.ndarray):
    """Yield ``(rows, euclid, cosine)`` blocks of the |A| x |B| distance and similarity matrices."""
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    for start in range(0, len(A), _CHUNK):
        rows = slice(start, min(start + _CHUNK, len(A)))
        eu = _euclid_block(A[rows], B)
        denom = na[rows, None] * nb[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(denom > 0, (A[rows] @ B.T) / np.where(denom > 0, denom, 1.0), 0.0)
        yield rows, eu, cos


def distance_trio(real: Table, synth: Table) -> tuple[float, float, float]:
    """``(mean Euclidean, symmetric Hausdorff, mean cosine similarity)`` on encoded rows."""
    _require_rows(real, synth)
    fitted = fit_ranges(real)
    A = _canonical(encode(real, fitted).values)
    B = _canonical(encode(synth, fitted).values)
    eu_sum = cos_sum = 0.0
    a_to_b = np.empty(len(A))
    b_to_a = np.full(len(B), np.inf)
    for rows, eu, cos in distance_matrices(A, B):
        eu_sum += eu.sum()
        cos_sum += cos.sum()
        a_to_b[rows] = eu.min(axis=1)
        b_to_a = np.minimum(b_to_a, eu.min(axis=0))
    pairs = len(A) * len(B)
    return float(eu_sum / pairs), float(max(a_to_b.max(), b_to_a.max())), float(cos_sum / pairs)


def exact_match_pct(real: Table, synth: Table) -> float:
    """Percentage of synthetic rows equal, in raw values, to at least one real row."""
    if synth.n_rows == 0:
        raise EmptyTable("exact-match score needs synthetic rows")
    seen = set(real.rows())
    hits = sum(1 for r in synth.rows() if r in seen)
    return 100.0 * hits / synth.n_rows


# --- membership inference --------------------------------------------------


def mixed_hamming(a, b, schema: Schema, cont_tol: float = CONT_TOL) -> float:
    """Fraction of features on which two raw rows differ.

    Continuous values differ when they are more than ``cont_tol`` of the
    feature's observed range apart.
    """
    diff = 0
    for j, spec in enumerate(schema.features):
        if spec.kind == CONTINUOUS:
            diff += abs(float(a[j]) - float(b[j])) > cont_tol * spec.span
        else:
            diff += a[j] != b[j]
    return diff / len(schema)


def _min_hamming(query: Table, ref: Table, schema: Schema, cont_tol: float) -> np.ndarray:
    """Min mixed Hamming distance from each query row to any reference row."""
    out = np.empty(query.n_rows)
    f = len(schema)
    for start in range(0, query.n_rows, _CHUNK):
        rows = slice(start, min(start + _CHUNK, query.n_rows))
        mism = np.zeros((len(range(*rows.indices(query.n_rows))), ref.n_rows), dtype=np.int64)
        for spec in schema.features:
            q = query.column(spec.name)[rows]
            r = ref.column(spec.name)
            if spec.kind == CONTINUOUS:
                mism += np.abs(q[:, None] - r[None, :]) > cont_tol * spec.span
            else:
                mism += q[:, None] != r[None, :]
        out[rows] = mism.min(axis=1) / f
    return out


@dataclass
class MiaResult:
    thresholds: tuple
    access_fractions: tuple
    precision: list  # rows follow access_fractions; None where nothing is flagged
    flagged: list
    annotations: list = field(default_factory=list)

    def cell(self, fraction: float, threshold: float):
        return self.precision[self.access_fractions.index(fraction)][self.thresholds.index(threshold)]

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "access_fractions": list(self.access_fractions),
            "precision": self.precision,
            "flagged": self.flagged,
            "annotations": self.annotations,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["access_fraction"] + [repr(float(t)) for t in self.thresholds])
            for frac, row in zip(self.access_fractions, self.precision):
                w.writerow([repr(float(frac))] + [UNDEFINED if v is None else repr(v) for v in row])


def mia(synth: Table, attacker_real: Table, train_membership, thresholds=MIA_THRESHOLDS,
        access_fractions=MIA_FRACTIONS, seed: int = 0, cont_tol: float = CONT_TOL) -> MiaResult:
    """Distance-threshold membership inference over a grid of attacker access levels.

    One seeded subset is drawn per access fraction and reused for every
    threshold, so flagged counts grow with the threshold.
    """
    _require_rows(synth, attacker_real)
    member = np.asarray(train_membership, dtype=bool)
    if member.shape != (attacker_real.n_rows,):
        raise ValueError("train_membership needs one flag per attacker row")
    schema = fit_ranges(attacker_real)
    dist = _min_hamming(attacker_real, synth, schema, cont_tol)
    rng = np.random.default_rng(seed)
    n = attacker_real.n_rows
    thresholds, access_fractions = tuple(thresholds), tuple(access_fractions)
    precision, flagged, notes = [], [], []
    for frac in access_fractions:
        size = min(n, max(1, math.floor(frac * n + 0.5)))
        sub = rng.choice(n, size=size, replace=False)
        p_row, f_row = [], []
        for thr in thresholds:
            hit = sub[dist[sub] < thr]
            f_row.append(int(hit.size))
            if hit.size == 0:
                p_row.append(None)
                continue
            p = float(member[hit].mean())
            p_row.append(p)
            if p < GOOD_PRIVACY_PRECISION:
                notes.append({"access_fraction": frac, "threshold": thr, "precision": p,
                              "note": "precision below 0.5: good privacy preservation"})
        precision.append(p_row)
        flagged.append(f_row)
    return MiaResult(thresholds, access_fractions, precision, flagged, notes)


# --- attribute inference ---------------------------------------------------


def aia(synth: Table, real: Table, schema: Schema | None = None, seed: int = 0) -> dict:
    """Predict each sensitive feature of real rows from quasi-identifiers with a tree fit on synthetic rows.

    Returns ``{feature: {"metric": "f1" | "rmse", "value": float}}``.  The
    tree is deterministic, so ``seed`` only exists for interface symmetry.
    """
    schema = schema or real.schema
    quasi = list(schema.quasi_identifiers)
    if not quasi:
        raise NoQuasiIdentifiers("attribute inference needs quasi-identifiers in the schema")
    _require_rows(synth, real)
    fitted = fit_ranges(real)
    qi_cols = [fitted.index(q) for q in quasi]
    sensitive = [n for n in fitted.names if n not in quasi and n != fitted.target]
    Xs_all = encode(synth, fitted).values
    Xr = encode(real, fitted).values[:, qi_cols]
    out = {}
    for s in sensitive:
        spec = fitted.feature(s)
        if spec.kind == CONTINUOUS:
            ys = synth.column(s)
            yr = real.column(s)
        else:
            ys = synth.class_codes(s)
            yr = real.class_codes(s)
        order = np.lexsort(np.column_stack([Xs_all, ys]).T[::-1])
        Xs, ys = Xs_all[order][:, qi_cols], ys[order]
        if spec.kind == CONTINUOUS:
            tree = cart_fit(Xs, ys, kind="regress")
            pred = tree.predict_value(Xr)
            out[s] = {"metric": "rmse", "value": float(np.sqrt(np.mean((pred - yr) ** 2)))}
        else:
            tree = cart_fit(Xs, ys, kind="classify", n_classes=spec.n_levels)
            out[s] = {"metric": "f1", "value": f1_macro(yr, tree.predict(Xr))}
    return out


# --- report ----------------------------------------------------------------


@dataclass
class PrivacyReport:
    euclid_mean: float | None = None
    hausdorff: float | None = None
    cosine_mean: float | None = None
    exact_match_pct: float | None = None
    mia: MiaResult | None = None
    aia: dict | None = None

    def to_dict(self) -> dict:
        out = {}
        for key in ("euclid_mean", "hausdorff", "cosine_mean", "exact_match_pct", "aia"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        if self.mia is not None:
            out["mia"] = self.mia.to_dict()
        return out


def privacy_report(real_train: Table, synth: Table, holdout: Table | None = None, metrics=None, seed: int = 0,
                   cont_tol: float = CONT_TOL) -> PrivacyReport:
    """MIA needs ``holdout``: the attacker pool is training rows (members) plus holdout rows."""
    chosen = set(PRIVACY_METRICS if metrics is None else metrics)
    rep = PrivacyReport()
    if "distance" in chosen:
        rep.euclid_mean, rep.hausdorff, rep.cosine_mean = distance_trio(real_train, synth)
    if "exact_match" in chosen:
        rep.exact_match_pct = exact_match_pct(real_train, synth)
    if "mia" in chosen and holdout is not None:
        pool = real_train.concat(holdout.with_schema(real_train.schema))
        flags = np.r_[np.ones(real_train.n_rows, dtype=bool), np.zeros(holdout.n_rows, dtype=bool)]
        rep.mia = mia(synth, pool, flags, seed=seed, cont_tol=cont_tol)
    if "aia" in chosen and real_train.schema.quasi_identifiers:
        rep.aia = aia(synth, real_train, seed=seed)
    return rep
