"""Typed tables, [0, 1] encoding, snapping, stratified splitting and a toy dataset.

Categorical values are kept as strings exactly as they appear in the CSV;
continuous values are 64-bit floats.  The encoded view maps every column to
[0, 1]: continuous columns by min-max scaling on the observed range, ordinal
and nominal columns by ``code / (m - 1)`` where ``code`` is the position in
the schema's category list.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ClassTooSmall,
    MissingColumn,
    MissingValue,
    NonSnappedCategorical,
    ParseError,
    SchemaError,
    SchemaNotFound,
    UnknownCategory,
)

CONTINUOUS = "continuous"
ORDINAL = "ordinal"
NOMINAL = "nominal"
KINDS = (CONTINUOUS, ORDINAL, NOMINAL)

# Tolerance on the [0, 1] scale when deciding that a categorical entry sits on its rank grid.
GRID_TOL = 1e-9
# Tolerance used when restoring the shortest decimal form of a decoded continuous value.
_RESTORE_TOL = 4 * np.finfo(np.float64).eps


class DegenerateContinuousWarning(UserWarning):
    """A continuous column has a single observed value and encodes to 0."""


def _category_label(value) -> str:
    if isinstance(value, bool):
        raise SchemaError(f"boolean category {value!r} is ambiguous; quote it as a string")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, (str, float)):
        return str(value)
    raise SchemaError(f"unsupported category value {value!r}")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    observed_min: float | None = None
    observed_max: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CONTINUOUS:
            if self.categories is not None:
                raise SchemaError(f"continuous feature {self.name!r} cannot declare categories")
            if (self.observed_min is None) != (self.observed_max is None):
                raise SchemaError(f"feature {self.name!r}: observed range must be given as a pair")
            if self.observed_min is not None and not self.observed_min <= self.observed_max:
                raise SchemaError(f"feature {self.name!r}: observed_min > observed_max")
        else:
            if not self.categories:
                raise SchemaError(f"{self.kind} feature {self.name!r} needs a non-empty category list")
            object.__setattr__(self, "categories", tuple(self.categories))
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
            if self.observed_min is not None or self.observed_max is not None:
                raise SchemaError(f"categorical feature {self.name!r} cannot carry an observed range")

    @property
    def is_categorical(self) -> bool:
        return self.kind != CONTINUOUS

    @property
    def n_levels(self) -> int:
        return len(self.categories) if self.categories else 0

    @property
    def span(self) -> float:
        return float(self.observed_max) - float(self.observed_min)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.categories is not None:
            out["categories"] = list(self.categories)
        if self.observed_min is not None:
            out["observed_min"] = self.observed_min
            out["observed_max"] = self.observed_max
        return out


_FEATURE_KEYS = {"name", "kind", "categories", "observed_min", "observed_max"}
_SCHEMA_KEYS = {"features", "target", "quasi_identifiers"}


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    target: str
    quasi_identifiers: tuple[str, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "quasi_identifiers", tuple(self.quasi_identifiers))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        index = {name: i for i, name in enumerate(names)}
        object.__setattr__(self, "_index", index)
        if self.target not in index:
            raise SchemaError(f"target {self.target!r} is not a feature")
        if not self.features[index[self.target]].is_categorical:
            raise SchemaError(f"target {self.target!r} must be ordinal or nominal")
        for q in self.quasi_identifiers:
            if q not in index:
                raise SchemaError(f"quasi-identifier {q!r} is not a feature")
            if q == self.target:
                raise SchemaError("the target cannot be a quasi-identifier")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __len__(self):
        return len(self.features)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def feature(self, name: str) -> FeatureSpec:
        return self.features[self.index(name)]

    def names_of_kind(self, *kinds: str) -> list[str]:
        return [f.name for f in self.features if f.kind in kinds]

    @property
    def continuous(self) -> list[str]:
        return self.names_of_kind(CONTINUOUS)

    @property
    def categorical(self) -> list[str]:
        return self.names_of_kind(ORDINAL, NOMINAL)

    @property
    def is_fitted(self) -> bool:
        return all(f.observed_min is not None for f in self.features if f.kind == CONTINUOUS)

    def without_ranges(self) -> "Schema":
        feats = [replace(f, observed_min=None, observed_max=None) for f in self.features]
        return Schema(feats, self.target, self.quasi_identifiers)

    def to_dict(self) -> dict:
        return {
            "features": [f.to_dict() for f in self.features],
            "target": self.target,
            "quasi_identifiers": list(self.quasi_identifiers),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Schema":
        if not isinstance(doc, Mapping):
            raise SchemaError("schema document must be a JSON object")
        unknown = set(doc) - _SCHEMA_KEYS
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        if "features" not in doc or "target" not in doc:
            raise SchemaError("schema requires 'features' and 'target'")
        feats = []
        for raw in doc["features"]:
            if not isinstance(raw, Mapping):
                raise SchemaError("each feature must be a JSON object")
            bad = set(raw) - _FEATURE_KEYS
            if bad:
                raise SchemaError(f"feature {raw.get('name')!r}: unknown keys {sorted(bad)}")
            if "name" not in raw or "kind" not in raw:
                raise SchemaError("each feature needs 'name' and 'kind'")
            cats = raw.get("categories")
            if cats is not None:
                cats = tuple(_category_label(c) for c in cats)
            feats.append(
                FeatureSpec(
                    name=str(raw["name"]),
                    kind=raw["kind"],
                    categories=cats,
                    observed_min=raw.get("observed_min"),
                    observed_max=raw.get("observed_max"),
                )
            )
        return cls(tuple(feats), str(doc["target"]), tuple(doc.get("quasi_identifiers", ())))

    @classmethod
    def load(cls, path) -> "Schema":
        path = Path(path)
        if not path.is_file():
            raise SchemaNotFound(f"schema file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.without_ranges().to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Table:
    """Raw records under a schema, stored column-wise.

    Continuous columns are float64 arrays, categorical columns object arrays
    of category strings.  Construction validates every value.
    """

    schema: Schema
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        cols = {}
        n = None
        for spec in self.schema.features:
            if spec.name not in self.columns:
                raise MissingColumn(f"column {spec.name!r} is missing", feature=spec.name)
            raw = self.columns[spec.name]
            if spec.kind == CONTINUOUS:
                col = np.array(raw, dtype=np.float64)
                if col.ndim != 1:
                    raise ParseError(f"column {spec.name!r} must be one-dimensional")
                bad = np.flatnonzero(~np.isfinite(col))
                if bad.size:
                    raise MissingValue(int(bad[0]), spec.name)
            else:
                col = np.empty(len(raw), dtype=object)
                col[:] = [str(v) if v is not None else None for v in raw]
                allowed = set(spec.categories)
                for i, v in enumerate(col):
                    if v is None or v == "":
                        raise MissingValue(i, spec.name)
                    if v not in allowed:
                        raise UnknownCategory(spec.name, v)
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise ParseError("columns have different lengths")
            col.setflags(write=False)
            cols[spec.name] = col
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence]) -> "Table":
        rows = list(rows)
        cols = {}
        for j, spec in enumerate(schema.features):
            cols[spec.name] = [r[j] for r in rows]
        return cls(schema, cols)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __len__(self):
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def rows(self) -> list[tuple]:
        cols = [self.columns[n] for n in self.schema.names]
        return [tuple(_py(v) for v in vals) for vals in zip(*cols)]

    def take(self, indices) -> "Table":
        idx = np.asarray(indices, dtype=np.int64)
        return Table(self.schema, {k: v[idx] for k, v in self.columns.items()})

    def with_schema(self, schema: Schema) -> "Table":
        return Table(schema, self.columns)

    def equals(self, other: "Table") -> bool:
        if self.schema.names != other.schema.names or self.n_rows != other.n_rows:
            return False
        return all(np.array_equal(self.columns[n], other.columns[n]) for n in self.schema.names)

    def class_codes(self, name: str | None = None) -> np.ndarray:
        """Integer category codes of a categorical column (default: the target)."""
        name = name or self.schema.target
        cats = self.schema.feature(name).categories
        lookup = {c: i for i, c in enumerate(cats)}
        return np.array([lookup[v] for v in self.columns[name]], dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_csv(self, fh)

    def concat(self, other: "Table") -> "Table":
        return Table(
            self.schema,
            {n: np.concatenate([self.columns[n], other.columns[n]]) for n in self.schema.names},
        )


def _py(v):
    if isinstance(v, np.floating):
        return float(v)
    return v


def write_csv(table: Table, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(table.schema.names)
    for row in table.rows():
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def load_csv(path, schema: Schema) -> Table:
    """Read a header-bearing CSV into a validated Table in schema column order."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        except csv.Error as exc:
            raise ParseError(str(exc)) from exc
        header = [h.strip() for h in header]
        positions = {}
        for spec in schema.features:
            if spec.name not in header:
                raise MissingColumn(f"column {spec.name!r} not in {path}", feature=spec.name)
            positions[spec.name] = header.index(spec.name)
        cols = {spec.name: [] for spec in schema.features}
        try:
            for r, row in enumerate(reader):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(f"row {r}: expected {len(header)} fields, got {len(row)}")
                for spec in schema.features:
                    cell = row[positions[spec.name]].strip()
                    if cell == "":
                        raise MissingValue(r, spec.name)
                    if spec.kind == CONTINUOUS:
                        try:
                            value = float(cell)
                        except ValueError:
                            raise ParseError(f"row {r}: {spec.name!r} is not a number: {cell!r}") from None
                        if math.isnan(value):
                            raise MissingValue(r, spec.name)
                        if math.isinf(value):
                            raise ParseError(f"row {r}: {spec.name!r} is infinite")
                        cols[spec.name].append(value)
                    else:
                        if cell not in spec.categories:
                            raise UnknownCategory(spec.name, cell)
                        cols[spec.name].append(cell)
        except csv.Error as exc:
            raise ParseError(str(exc)) from exc
    return Table(schema, cols)


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    """Row-major [0, 1] view of a table.  The fitted schema holds the transforms."""

    values: np.ndarray
    schema: Schema

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.schema):
            raise ParseError(f"encoded matrix must be n x {len(self.schema)}")
        if not self.schema.is_fitted:
            raise SchemaError("encoded matrices need a schema with observed ranges")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def kinds(self) -> list[str]:
        return [f.kind for f in self.schema.features]

    @property
    def levels(self) -> np.ndarray:
        """Per-column level count (0 for continuous)."""
        return np.array([f.n_levels for f in self.schema.features], dtype=np.int64)


def fit_ranges(table: Table) -> Schema:
    """Schema copy whose continuous features carry the table's observed min/max."""
    feats = []
    for spec in table.schema.features:
        if spec.kind == CONTINUOUS:
            col = table.columns[spec.name]
            if col.size == 0:
                raise ParseError(f"cannot fit range of empty column {spec.name!r}")
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                warnings.warn(
                    f"continuous feature {spec.name!r} is constant; it encodes to 0",
                    DegenerateContinuousWarning,
                    stacklevel=3,
                )
            spec = replace(spec, observed_min=lo, observed_max=hi)
        feats.append(spec)
    return Schema(tuple(feats), table.schema.target, table.schema.quasi_identifiers)


def encode(table: Table, fitted: Schema | None = None) -> EncodedMatrix:
    """Encode a table.  Ranges are fitted on ``table`` unless ``fitted`` is given.

    With an external ``fitted`` schema, continuous values outside its range map
    outside [0, 1].
    """
    schema = fitted if fitted is not None else fit_ranges(table)
    if schema.names != table.schema.names:
        raise SchemaError("table and fitted schema disagree on features")
    out = np.zeros((table.n_rows, len(schema)), dtype=np.float64)
    for j, spec in enumerate(schema.features):
        col = table.columns[spec.name]
        if spec.kind == CONTINUOUS:
            span = spec.span
            if span > 0:
                out[:, j] = (col - spec.observed_min) / span
        else:
            m = spec.n_levels
            if m > 1:
                lookup = {c: i for i, c in enumerate(spec.categories)}
                out[:, j] = np.array([lookup[v] for v in col], dtype=np.float64) / (m - 1)
    return EncodedMatrix(out, schema)


def _restore_continuous(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Invert min-max scaling, preferring the shortest decimal that re-encodes to the entry.

    Values with up to ~12 significant digits round-trip exactly; the search only
    moves a result by a few units in the last place of the encoded scale.
    """
    span = hi - lo
    if span == 0:
        return np.full(values.shape, lo, dtype=np.float64)
    approx = lo + values * span
    out = approx.copy()
    for i, (v, y0) in enumerate(zip(values.tolist(), approx.tolist())):
        # Fewest decimal places first (so 0.0 beats 1e-14), then fewest significant digits.
        candidates = [round(y0, d) for d in range(16)] + [float(f"{y0:.{d}g}") for d in range(1, 18)]
        for y in candidates:
            if abs((y - lo) / span - v) <= _RESTORE_TOL:
                out[i] = y + 0.0
                break
    return out


def decode(m: EncodedMatrix) -> Table:
    """Invert :func:`encode`.  Categorical entries must already sit on their rank grid."""
    cols = {}
    for j, spec in enumerate(m.schema.features):
        col = m.values[:, j]
        if spec.kind == CONTINUOUS:
            cols[spec.name] = _restore_continuous(col, spec.observed_min, spec.observed_max)
            continue
        steps = max(spec.n_levels - 1, 1)
        scaled = col * steps
        codes = np.rint(scaled)
        off = np.flatnonzero((np.abs(scaled - codes) > GRID_TOL * steps) | (codes < 0) | (codes > spec.n_levels - 1))
        if spec.n_levels == 1:
            off = np.flatnonzero(np.abs(col) > GRID_TOL)
        if off.size:
            i = int(off[0])
            raise NonSnappedCategorical(
                f"row {i}: entry {col[i]!r} of {spec.name!r} is not a scaled category rank",
                row=i, feature=spec.name,
            )
        cats = np.array(spec.categories, dtype=object)
        cols[spec.name] = cats[codes.astype(np.int64)] if spec.n_levels > 1 else np.full(len(col), cats[0], dtype=object)
    return Table(m.schema, cols)


def snap_feature_types(reference: EncodedMatrix, candidate: np.ndarray) -> np.ndarray:
    """Clip continuous entries to [0, 1]; move categorical entries to the nearest rank.

    Exact midpoints go to the lower rank.
    """
    cand = np.asarray(candidate, dtype=np.float64)
    if cand.shape[-1] != reference.n_features:
        raise ParseError("candidate column count differs from the reference")
    out = np.clip(cand, 0.0, 1.0)
    for j, spec in enumerate(reference.schema.features):
        if spec.kind == CONTINUOUS:
            continue
        m = spec.n_levels
        if m <= 1:
            out[..., j] = 0.0
            continue
        steps = m - 1
        codes = np.clip(np.ceil(out[..., j] * steps - 0.5), 0, steps)
        out[..., j] = codes / steps
    return out


def split(table: Table, train_fraction: float, seed: int) -> tuple[Table, Table]:
    """Stratified train/test split on the target; rows keep their original order."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    codes = table.class_codes()
    rng = np.random.default_rng(seed)
    chosen = []
    for c in np.unique(codes):
        members = np.flatnonzero(codes == c)
        if members.size < 2:
            raise ClassTooSmall(
                f"class {table.schema.feature(table.schema.target).categories[c]!r} has "
                f"{members.size} row(s); at least 2 are needed",
                cls=table.schema.feature(table.schema.target).categories[c],
            )
        n_train = int(math.floor(members.size * train_fraction + 0.5))
        n_train = min(max(n_train, 1), members.size - 1)
        chosen.append(rng.permutation(members)[:n_train])
    train_mask = np.zeros(table.n_rows, dtype=bool)
    train_mask[np.concatenate(chosen)] = True
    return table.take(np.flatnonzero(train_mask)), table.take(np.flatnonzero(~train_mask))


TOY_SCHEMA = Schema(
    features=(
        FeatureSpec("x1", CONTINUOUS),
        FeatureSpec("x2", CONTINUOUS),
        FeatureSpec("grade", ORDINAL, ("low", "mid", "high")),
        FeatureSpec("group", NOMINAL, ("a", "b")),
        FeatureSpec("target", NOMINAL, ("0", "1")),
    ),
    target="target",
    quasi_identifiers=("x1", "group"),
)


def toy_dataset(n: int, seed: int) -> Table:
    """Mixed-type toy table: a two-component Gaussian mixture with dependent categoricals.

    60% of rows (rounded) come from component 0; the target equals the
    component label with 10% flips, so both classes appear for n >= 20.
    """
    if n < 20:
        raise ValueError("toy_dataset needs n >= 20")
    rng = np.random.default_rng(seed)
    n0 = int(round(0.6 * n))
    comp = rng.permutation(np.r_[np.zeros(n0, dtype=np.int64), np.ones(n - n0, dtype=np.int64)])
    centers = np.array([[-1.0, 0.5], [1.5, -1.0]])
    scales = np.array([[0.8, 0.6], [0.6, 0.9]])
    xy = centers[comp] + scales[comp] * rng.standard_normal((n, 2))
    xy = np.round(xy, 3) + 0.0
    grade_score = xy[:, 0] + 0.7 * rng.standard_normal(n)
    grade = np.digitize(grade_score, [-0.5, 0.8])
    group = np.where(rng.random(n) < 0.8, comp, 1 - comp)
    target = np.where(rng.random(n) < 0.9, comp, 1 - comp)
    grades = np.array(["low", "mid", "high"], dtype=object)
    groups = np.array(["a", "b"], dtype=object)
    targets = np.array(["0", "1"], dtype=object)
    return Table(
        TOY_SCHEMA,
        {
            "x1": xy[:, 0],
            "x2": xy[:, 1],
            "grade": grades[grade],
            "group": groups[group],
            "target": targets[target],
        },
    )
