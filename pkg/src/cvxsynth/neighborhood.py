"""k-nearest-neighbor neighborhoods under a mixed-type distance.

The distance stands in for an embedding-based closeness: continuous and
ordinal columns contribute ``|a_j - b_j|`` on the encoded scale, nominal
columns contribute 0/1 mismatch, and the per-kind weights are normalised by
their total.  A precomputed embedding (one CSV row per record) can be used
instead, in which case neighbors are Euclidean in that space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CONTINUOUS, NOMINAL, ORDINAL, EncodedMatrix, Schema
from .errors import ComplementTooSmall, EmbeddingShapeMismatch, KTooLarge, ParseError

MIXED_DISTANCE = "mixed_distance"
EXTERNAL_FILE = "external_file"

_CHUNK = 256


@dataclass(frozen=True)
class EmbeddingSource:
    mode: str = MIXED_DISTANCE
    weights: dict = field(default_factory=lambda: {CONTINUOUS: 1.0, ORDINAL: 1.0, NOMINAL: 1.0})
    path: str | None = None

    def __post_init__(self):
        if self.mode not in (MIXED_DISTANCE, EXTERNAL_FILE):
            raise ValueError(f"unknown embedding mode {self.mode!r}")
        w = {CONTINUOUS: 1.0, ORDINAL: 1.0, NOMINAL: 1.0}
        unknown = set(self.weights) - set(w)
        if unknown:
            raise ValueError(f"unknown feature kinds in weights: {sorted(unknown)}")
        w.update({k: float(v) for k, v in self.weights.items()})
        if any(v < 0 for v in w.values()) or not any(v > 0 for v in w.values()):
            raise ValueError("kind weights must be non-negative and not all zero")
        object.__setattr__(self, "weights", w)
        if self.mode == EXTERNAL_FILE and not self.path:
            raise ValueError("external_file mode needs a path")


@dataclass(frozen=True, eq=False)
class NeighborhoodIndex:
    k: int
    neighbors: np.ndarray

    def __post_init__(self):
        nb = np.array(self.neighbors, dtype=np.int64)
        if nb.ndim != 2 or nb.shape[1] != self.k or self.k < 2:
            raise ValueError("neighbors must be an n x k matrix with k >= 2")
        nb.setflags(write=False)
        object.__setattr__(self, "neighbors", nb)

    @property
    def n_rows(self) -> int:
        return self.neighbors.shape[0]


def _feature_weights(schema: Schema, weights: dict) -> np.ndarray:
    return np.array([weights[f.kind] for f in schema.features], dtype=np.float64)


def mixed_distance(a, b, schema: Schema, weights: dict | None = None) -> float:
    """Weighted mean of per-feature dissimilarities between two encoded rows."""
    w = _feature_weights(schema, EmbeddingSource(weights=weights or {}).weights)
    total = 0.0
    for j, spec in enumerate(schema.features):
        if spec.kind == NOMINAL:
            diff = 0.0 if a[j] == b[j] else 1.0
        else:
            diff = abs(float(a[j]) - float(b[j]))
        total = total + w[j] * diff
    return total / float(w.sum())


def pairwise_mixed(A: np.ndarray, B: np.ndarray, schema: Schema, weights: dict | None = None) -> np.ndarray:
    """|A| x |B| matrix of :func:`mixed_distance`, accumulated in the same feature order."""
    w = _feature_weights(schema, EmbeddingSource(weights=weights or {}).weights)
    out = np.zeros((A.shape[0], B.shape[0]), dtype=np.float64)
    for j, spec in enumerate(schema.features):
        if spec.kind == NOMINAL:
            diff = (A[:, None, j] != B[None, :, j]).astype(np.float64)
        else:
            diff = np.abs(A[:, None, j] - B[None, :, j])
        out = out + w[j] * diff
    return out / float(w.sum())


def load_embedding(path) -> np.ndarray:
    path = Path(path)
    try:
        emb = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read embedding {path}: {exc}") from exc
    if not np.all(np.isfinite(emb)):
        raise ParseError(f"embedding {path} contains non-finite values")
    return emb


def _knn_from_distances(dist: np.ndarray, rows: np.ndarray, k: int) -> np.ndarray:
    # Self goes first; remaining ties fall to the lower row index via the stable sort.
    dist = dist.copy()
    dist[np.arange(len(rows)), rows] = -1.0
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def build_index(m: EncodedMatrix, k: int, source: EmbeddingSource | None = None) -> NeighborhoodIndex:
    """Exact k-NN for every row, each row listing itself first."""
    source = source or EmbeddingSource()
    n = m.n_rows
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of rows ({n})", k=k, n=n)
    if source.mode == EXTERNAL_FILE:
        emb = load_embedding(source.path)
        if emb.shape[0] != n:
            raise EmbeddingShapeMismatch(f"embedding has {emb.shape[0]} rows, data has {n}")
        sq = np.einsum("ij,ij->i", emb, emb)

        def block(rows):
            d = sq[rows, None] + sq[None, :] - 2.0 * emb[rows] @ emb.T
            return np.sqrt(np.maximum(d, 0.0))
    else:
        X = m.values

        def block(rows):
            return pairwise_mixed(X[rows], X, m.schema, source.weights)

    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, n))
        out[rows] = _knn_from_distances(block(rows), rows, k)
    return NeighborhoodIndex(k, out)


def outside_batch(m: EncodedMatrix, nbh, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` encoded rows drawn uniformly without replacement from outside ``nbh``."""
    mask = np.ones(m.n_rows, dtype=bool)
    mask[np.asarray(nbh, dtype=np.int64)] = False
    complement = np.flatnonzero(mask)
    if count > complement.size:
        raise ComplementTooSmall(
            f"cannot draw {count} rows from a complement of {complement.size}",
            count=count, available=int(complement.size),
        )
    return m.values[rng.choice(complement, size=count, replace=False)]


def shuffled_neighborhood(index: NeighborhoodIndex, m: EncodedMatrix, i: int, rng: np.random.Generator) -> np.ndarray:
    """The k neighbor rows of ``i`` in a fresh random order."""
    return m.values[rng.permutation(index.neighbors[i])]
