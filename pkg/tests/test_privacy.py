import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxsynth import privacy as P
from cvxsynth.dataset import CONTINUOUS, NOMINAL, ORDINAL, FeatureSpec, Schema, Table, fit_ranges, split, toy_dataset
from cvxsynth.errors import EmptyTable, NoQuasiIdentifiers

XY = Schema((FeatureSpec("a", CONTINUOUS), FeatureSpec("b", CONTINUOUS), FeatureSpec("y", NOMINAL, ("0", "1"))), "y")


def xy(rows):
    return Table.from_rows(XY, rows)


@pytest.fixture(scope="module")
def toy():
    return split(toy_dataset(120, 8), 0.7, 8)


class TestDistances:
    def test_identical(self, toy):
        tr, _ = toy
        eu, haus, cos = P.distance_trio(tr, tr.take(np.random.default_rng(0).permutation(tr.n_rows)))
        assert haus == 0.0 and eu > 0

    def test_single_rows(self):
        one = xy([(0.3, 0.4, "1")])
        eu, haus, cos = P.distance_trio(one, one)
        assert (eu, haus) == (0.0, 0.0) and cos == pytest.approx(1.0)

    def test_345(self):
        # Real ranges are [0, 1], so raw and encoded coordinates coincide.
        real = xy([(0.0, 0.0, "0"), (1.0, 1.0, "0")])
        rows = P.distance_matrices(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        _, e, _ = next(rows)
        assert e[0, 0] == 5.0
        eu, haus, _ = P.distance_trio(real, xy([(3.0, 4.0, "0")]))
        ref = [math.hypot(3, 4), math.hypot(2, 3)]
        assert eu == pytest.approx(np.mean(ref)) and haus == pytest.approx(max(ref))

    def test_zero_vector_cosine(self):
        _, _, cos = next(P.distance_matrices(np.zeros((1, 2)), np.array([[1.0, 0.0]])))
        assert cos[0, 0] == 0.0

    def test_matches_scipy(self, toy):
        from scipy.spatial.distance import cdist, directed_hausdorff

        from cvxsynth.dataset import encode

        tr, te = toy
        f = fit_ranges(tr)
        A, B = encode(tr, f).values, encode(te, f).values
        eu, haus, cos = P.distance_trio(tr, te)
        assert eu == pytest.approx(cdist(A, B).mean(), rel=1e-10)
        assert haus == pytest.approx(max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0]), rel=1e-10)
        assert cos == pytest.approx((1 - cdist(A, B, "cosine")).mean(), rel=1e-10)

    def test_hausdorff_zero_iff_same_set(self, toy):
        tr, _ = toy
        assert P.distance_trio(tr, tr.take([0, 1, 2]))[1] > 0
        assert P.distance_trio(tr, tr.concat(tr))[1] == 0

    def test_empty(self, toy):
        tr, _ = toy
        with pytest.raises(EmptyTable):
            P.distance_trio(tr, tr.take([]))


class TestExactMatch:
    def test_identity_and_order(self, toy):
        tr, te = toy
        assert P.exact_match_pct(tr, tr) == 100.0
        assert P.exact_match_pct(tr, tr.take(np.random.default_rng(1).permutation(tr.n_rows))) == 100.0
        assert P.exact_match_pct(tr, te) == 0.0

    def test_partial(self, toy):
        tr, te = toy
        assert P.exact_match_pct(tr, tr.take([0, 1]).concat(te.take([0, 1]))) == 50.0


class TestHamming:
    schema = fit_ranges(Table(Schema((FeatureSpec("c", CONTINUOUS), FeatureSpec("o", ORDINAL, ("l", "h")),
                                      FeatureSpec("n", NOMINAL, ("p", "q")), FeatureSpec("y", NOMINAL, ("0", "1"))), "y"),
                              {"c": [0.0, 10.0], "o": ["l", "h"], "n": ["p", "q"], "y": ["0", "1"]}))

    def test_examples(self):
        assert P.mixed_hamming((1.0, "l", "p", "0"), (1.0, "l", "p", "0"), self.schema) == 0
        assert P.mixed_hamming((1.0, "l", "p", "0"), (9.0, "h", "q", "1"), self.schema) == 1
        assert P.mixed_hamming((1.0, "l", "p", "0"), (1.0, "l", "q", "0"), self.schema) == 0.25

    def test_tolerance(self):
        assert P.mixed_hamming((1.0, "l", "p", "0"), (1.5, "l", "p", "0"), self.schema) == 0
        assert P.mixed_hamming((1.0, "l", "p", "0"), (1.51, "l", "p", "0"), self.schema) == 0.25
        assert P.mixed_hamming((1.0, "l", "p", "0"), (1.5, "l", "p", "0"), self.schema, cont_tol=0) == 0.25

    @given(st.tuples(st.floats(0, 10), st.sampled_from("lh"), st.sampled_from("pq"), st.sampled_from("01")),
           st.tuples(st.floats(0, 10), st.sampled_from("lh"), st.sampled_from("pq"), st.sampled_from("01")))
    def test_symmetric_and_grid(self, a, b):
        d = P.mixed_hamming(a, b, self.schema)
        assert d == P.mixed_hamming(b, a, self.schema)
        assert d * 4 == round(d * 4) and 0 <= d <= 1

    def test_vectorized_matches_scalar(self, toy):
        tr, te = toy
        f = fit_ranges(tr.concat(te))
        fast = P._min_hamming(te, tr, f, 0.05)
        slow = [min(P.mixed_hamming(q, r, f) for r in tr.rows()) for q in te.rows()]
        assert np.allclose(fast, slow)


class TestMia:
    def unique_pool(self):
        rng = np.random.default_rng(0)
        rows = [(float(i), float(rng.integers(0, 1000)), str(i % 2)) for i in range(40)]
        pool = xy(rows)
        member = np.r_[np.ones(20, bool), np.zeros(20, bool)]
        return pool, member

    def test_copy_gives_precision_one(self):
        pool, member = self.unique_pool()
        res = P.mia(pool.take(np.arange(20)), pool, member, thresholds=[1e-9], access_fractions=[1.0], cont_tol=0)
        assert res.cell(1.0, 1e-9) == 1.0 and res.flagged == [[20]]

    def test_distant_all_undefined(self, tmp_path):
        pool, member = self.unique_pool()
        far = xy([(1e6, 1e6, "0"), (-1e6, -1e6, "1")])
        res = P.mia(far, pool, member)
        assert all(v is None for row in res.precision for v in row)
        res.write_csv(tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "access_fraction,0.1,0.2,0.3,0.4" and lines[1] == "0.2,NA,NA,NA,NA" and len(lines) == 6

    def test_monotone_flags_and_grid_shape(self, toy):
        tr, te = toy
        pool = tr.concat(te)
        member = np.r_[np.ones(tr.n_rows, bool), np.zeros(te.n_rows, bool)]
        res = P.mia(toy_dataset(100, 3), pool, member, seed=4)
        assert len(res.precision) == 5 and all(len(r) == 4 for r in res.precision)
        for row in res.flagged:
            assert row == sorted(row)
        for row in res.precision:
            assert all(v is None or 0 <= v <= 1 for v in row)
        assert res.flagged[-1][-1] <= pool.n_rows

    def test_annotations(self):
        pool, member = self.unique_pool()
        # Synthetic copies of non-members only: every flagged record is a non-member.
        res = P.mia(pool.take(np.arange(20, 40)), pool, member, thresholds=[0.1], access_fractions=[1.0], cont_tol=0)
        assert res.cell(1.0, 0.1) == 0.0 and res.annotations and res.annotations[0]["precision"] == 0.0

    def test_seeded(self, toy):
        tr, te = toy
        pool = tr.concat(te)
        member = np.r_[np.ones(tr.n_rows, bool), np.zeros(te.n_rows, bool)]
        s = toy_dataset(60, 1)
        assert P.mia(s, pool, member, seed=3).to_dict() == P.mia(s, pool, member, seed=3).to_dict()

    def test_membership_shape(self):
        pool, _ = self.unique_pool()
        with pytest.raises(ValueError):
            P.mia(pool, pool, [True])


class TestAia:
    def schema(self):
        return Schema((FeatureSpec("q", CONTINUOUS), FeatureSpec("s", NOMINAL, ("u", "v")),
                       FeatureSpec("r", CONTINUOUS), FeatureSpec("y", NOMINAL, ("0", "1"))), "y", ("q",))

    def test_determined_feature(self):
        rng = np.random.default_rng(0)
        q = rng.random(80)
        t = Table(self.schema(), {"q": q, "s": np.where(q > 0.5, "v", "u"), "r": np.full(80, 2.5),
                                  "y": rng.choice(["0", "1"], 80)})
        out = P.aia(t, t)
        assert out["s"] == {"metric": "f1", "value": 1.0}
        assert out["r"] == {"metric": "rmse", "value": 0.0}
        assert "y" not in out and "q" not in out

    def test_independent_feature(self):
        rng = np.random.default_rng(1)

        def make(n):
            return Table(self.schema(), {"q": rng.random(n), "s": rng.choice(["u", "v"], n), "r": rng.random(n),
                                         "y": rng.choice(["0", "1"], n)})

        assert abs(P.aia(make(400), make(400))["s"]["value"] - 0.5) < 0.1

    def test_no_quasi(self, toy):
        tr, _ = toy
        s = Schema(tr.schema.features, tr.schema.target)
        with pytest.raises(NoQuasiIdentifiers):
            P.aia(tr.with_schema(s), tr.with_schema(s))


def test_report(toy):
    tr, te = toy
    rep = P.privacy_report(tr, tr, te).to_dict()
    assert rep["exact_match_pct"] == 100.0 and rep["hausdorff"] == 0.0
    assert set(rep) == {"euclid_mean", "hausdorff", "cosine_mean", "exact_match_pct", "mia", "aia"}
    assert set(P.privacy_report(tr, tr, None, metrics=["mia", "exact_match"]).to_dict()) == {"exact_match_pct"}
