import numpy as np
import pytest
from hypothesis import strategies as st

from cvxsynth.dataset import CONTINUOUS, NOMINAL, ORDINAL, FeatureSpec, Schema, Table, toy_dataset


@pytest.fixture(scope="session")
def toy200():
    return toy_dataset(200, 1)


@st.composite
def schemas(draw, min_features=1, max_features=5):
    n = draw(st.integers(min_features, max_features))
    feats = []
    for j in range(n):
        kind = draw(st.sampled_from([CONTINUOUS, ORDINAL, NOMINAL]))
        if kind == CONTINUOUS:
            feats.append(FeatureSpec(f"f{j}", kind))
        else:
            m = draw(st.integers(1, 4))
            feats.append(FeatureSpec(f"f{j}", kind, tuple(f"c{i}" for i in range(m))))
    feats.append(FeatureSpec("y", NOMINAL, ("0", "1")))
    return Schema(tuple(feats), "y")


@st.composite
def tables(draw, min_rows=1, max_rows=30):
    schema = draw(schemas())
    n = draw(st.integers(min_rows, max_rows))
    cont = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).map(lambda v: round(v, 6))
    cols = {}
    for spec in schema.features:
        if spec.kind == CONTINUOUS:
            cols[spec.name] = draw(st.lists(cont, min_size=n, max_size=n))
        else:
            cols[spec.name] = draw(st.lists(st.sampled_from(spec.categories), min_size=n, max_size=n))
    return Table(schema, cols)


def random_mixed_matrix(rng, n, f):
    """Encoded-looking matrix with random kinds; returns (values, schema)."""
    feats, cols = [], []
    for j in range(f):
        kind = rng.choice([CONTINUOUS, ORDINAL, NOMINAL])
        if kind == CONTINUOUS:
            feats.append(FeatureSpec(f"f{j}", kind, observed_min=0.0, observed_max=1.0))
            cols.append(rng.random(n))
        else:
            m = int(rng.integers(2, 5))
            feats.append(FeatureSpec(f"f{j}", kind, tuple(str(i) for i in range(m))))
            cols.append(rng.integers(0, m, n) / (m - 1))
    feats.append(FeatureSpec("y", NOMINAL, ("0", "1")))
    cols.append(rng.integers(0, 2, n).astype(float))
    return np.column_stack(cols), Schema(tuple(feats), "y")


# Acceptance results, one line per criterion, shown at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def accept():
    def record(n: int, ok: bool, detail: str = ""):
        prev = ACCEPTANCE.get(n)
        if prev is not None:
            ok, detail = prev[0] and ok, f"{prev[1]}; {detail}"
        ACCEPTANCE[n] = (ok, detail)
        print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
