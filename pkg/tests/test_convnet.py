import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxsynth.convnet import (
    DiscriminatorNet, GeneratorNet, GradientTape, Optimizer, alpha_clip, backward, coefficients, disc_objective,
    discriminate, final_objective, loss_disc, loss_gen, synthesize,
)
from cvxsynth.errors import TapeEmpty
from cvxsynth.trainer import make_labels

from gradcheck import check_disc, check_final, micro_problem


def gen(k, f, rng, delta=0.351, scale=1.0):
    return GeneratorNet(rng.normal(0, scale, (f, k)), rng.normal(0, scale, k), delta)


class TestCoefficients:
    def test_zero_weights_uniform(self):
        g = GeneratorNet(np.zeros((3, 4)), np.zeros(4))
        assert np.allclose(coefficients(g, np.random.default_rng(0).random((4, 3))), 0.25)

    def test_closed_form(self):
        g = GeneratorNet(np.zeros((1, 2)), np.array([math.log(3), 0.0]))
        assert np.allclose(coefficients(g, np.array([[0.2], [0.7]])), [[0.75, 0.25], [0.75, 0.25]])

    def test_row_sums_1000_draws(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k, f = rng.integers(2, 8), rng.integers(1, 6)
            K = coefficients(gen(k, f, rng, scale=3.0), rng.random((k, f)))
            assert np.all(K > 0) and np.allclose(K.sum(axis=1), 1, atol=1e-9)


class TestAlphaClip:
    def test_figure_example(self):
        assert np.allclose(alpha_clip(np.array([[1.0, 0.0, 0.0]]), 0.1), [[0.9, 0.1, 0.0]])

    def test_uniform_tie_rule(self):
        out = alpha_clip(np.full((1, 3), 1 / 3), 0.3)
        assert np.allclose(out, [[0.7 / 3, 1.3 / 3, 1 / 3]])

    def test_identity_at_zero(self):
        K = np.random.default_rng(0).dirichlet(np.ones(4), size=5)
        assert np.array_equal(alpha_clip(K, 0.0), K)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 10), st.floats(1e-3, 0.999), st.integers(0, 2**32 - 1))
    def test_invariants(self, k, delta, seed):
        K = np.random.default_rng(seed).dirichlet(np.full(k, 0.3), size=4)
        out = alpha_clip(K, delta)
        assert np.all(out >= 0)
        assert np.allclose(out.sum(axis=1), 1, atol=1e-12)
        assert np.all(out.max(axis=1) < 1)

    def test_full_clip_two_columns_swaps_mass(self):
        # delta = 1 moves the whole max onto the min; with k = 2 that is a swap.
        assert np.allclose(alpha_clip(np.array([[0.7, 0.3]]), 1.0), [[0.0, 1.0]])

    def test_one_hot_rows_clip_below_one(self):
        K = np.eye(4)
        assert np.all(alpha_clip(K, 0.351).max(axis=1) < 1)


class TestSynthesize:
    def test_uniform_gives_column_means(self):
        nbh = np.random.default_rng(0).random((4, 3))
        g = GeneratorNet(np.zeros((3, 4)), np.zeros(4), 0.0)
        assert np.allclose(synthesize(g, nbh), nbh.mean(axis=0))

    def test_identical_rows(self):
        nbh = np.tile([0.2, 0.9, 0.4], (5, 1))
        g = gen(5, 3, np.random.default_rng(2))
        assert np.allclose(synthesize(g, nbh), nbh)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 6), st.floats(0, 1), st.integers(0, 2**32 - 1))
    def test_hull(self, k, f, delta, seed):
        rng = np.random.default_rng(seed)
        nbh = rng.random((k, f))
        C = synthesize(gen(k, f, rng, delta, 2.0), nbh)
        assert np.all(C >= nbh.min(axis=0) - 1e-12) and np.all(C <= nbh.max(axis=0) + 1e-12)

    def test_stacked_neighborhoods(self):
        rng = np.random.default_rng(3)
        g = gen(3, 2, rng)
        stack = rng.random((2, 3, 2))
        out = synthesize(g, stack)
        assert np.allclose(out[1], synthesize(g, stack[1]))


class TestDiscriminator:
    def test_zero_output_layer(self):
        d = DiscriminatorNet.init(4, np.random.default_rng(0))
        d.weights[-1][:] = 0
        assert np.allclose(discriminate(d, np.random.default_rng(1).random((7, 4))), 0.5)

    def test_shape_and_defaults(self):
        d = DiscriminatorNet.init(4, np.random.default_rng(0))
        assert [w.shape for w in d.weights] == [(4, 250), (250, 125), (125, 75), (75, 2)]
        assert all(np.all(b == 0) for b in d.biases)

    def test_row_stochastic_and_permutation(self):
        rng = np.random.default_rng(4)
        d = DiscriminatorNet.init(3, rng)
        X = rng.random((9, 3))
        P = discriminate(d, X)
        assert np.allclose(P.sum(axis=1), 1, atol=1e-9) and np.all(P >= 0)
        perm = rng.permutation(9)
        assert np.allclose(discriminate(d, X[perm]), P[perm])


class TestLosses:
    labels = make_labels(2)

    def test_disc(self):
        assert loss_disc(self.labels.copy(), self.labels) <= 1e-11
        assert loss_disc(np.full((4, 2), 0.5), self.labels) == pytest.approx(math.log(2))
        values = [loss_disc(np.array([[p, 1 - p]]), np.array([[1.0, 0.0]])) for p in (0.2, 0.5, 0.8, 0.99)]
        assert values == sorted(values, reverse=True)

    def test_gen(self):
        assert loss_gen(self.labels, self.labels) == 0
        assert loss_gen(np.full((4, 2), 0.5), self.labels) == 0.25
        rng = np.random.default_rng(0)
        P = rng.dirichlet([1, 1], size=4)
        perm = rng.permutation(4)
        assert loss_gen(P[perm], self.labels[perm]) == pytest.approx(loss_gen(P, self.labels))


class TestBackward:
    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_match_finite_differences(self, seed):
        assert check_disc(seed) < 1e-4
        assert check_final(seed) < 1e-4

    def test_scale_linear(self):
        g, d, nbh, outside, labels, batch = micro_problem(0)
        tape = GradientTape()
        disc_objective(d, batch, labels, tape)
        one = backward(tape, "disc")
        two = backward(tape, "disc", scale=2.0)
        assert all(np.allclose(2 * a, b) for a, b in zip(one, two))
        final_objective(g, d, nbh, outside, labels, tape)
        one = backward(tape, "final")
        two = backward(tape, "final", scale=2.0)
        assert all(np.allclose(2 * a, b) for a, b in zip(one, two))

    def test_zero_loss_zero_gradient(self):
        rng = np.random.default_rng(0)
        d = DiscriminatorNet.init(2, rng, (3,))
        d.weights[-1][:] = 0
        d.biases[-1][:] = [40.0, -40.0]
        labels = np.tile([1.0, 0.0], (4, 1))
        tape = GradientTape()
        disc_objective(d, rng.random((4, 2)), labels, tape)
        assert all(np.max(np.abs(gr)) < 1e-12 for gr in backward(tape, "disc"))

    def test_empty_and_mismatched_tape(self):
        tape = GradientTape()
        with pytest.raises(TapeEmpty):
            backward(tape, "disc")
        g, d, nbh, outside, labels, batch = micro_problem(1)
        disc_objective(d, batch, labels, tape)
        with pytest.raises(ValueError):
            backward(tape, "final")

    def test_final_leaves_discriminator_untouched(self):
        g, d, nbh, outside, labels, batch = micro_problem(2)
        before = [p.copy() for p in d.params()]
        tape = GradientTape()
        final_objective(g, d, nbh, outside, labels, tape)
        Optimizer("adam").step(g.params(), backward(tape, "final"))
        assert all(np.array_equal(a, b) for a, b in zip(before, d.params()))


class TestOptimizer:
    def test_sgd(self):
        p = [np.array([1.0])]
        Optimizer("sgd", lr=0.1).step(p, [np.array([2.0])])
        assert p[0][0] == pytest.approx(0.8)
        q = [np.array([1.5, -2.0])]
        Optimizer("sgd", lr=0.3).step(q, [np.zeros(2)])
        assert q[0].tolist() == [1.5, -2.0]

    def test_adam_first_step(self):
        p = [np.array([0.0])]
        Optimizer("adam", lr=1e-3).step(p, [np.array([1.0])])
        assert p[0][0] == pytest.approx(-1e-3, rel=1e-6)

    def test_adam_zero_grad(self):
        p = [np.array([0.7, -0.2])]
        Optimizer("adam", lr=1e-3).step(p, [np.zeros(2)])
        assert np.allclose(p[0], [0.7, -0.2], atol=1e-12)

    def test_adam_matches_reference(self):
        rng = np.random.default_rng(0)
        p = [rng.random(3)]
        ref, m, v = p[0].copy(), np.zeros(3), np.zeros(3)
        opt = Optimizer("adam", lr=0.01)
        for t in range(1, 6):
            g = rng.normal(size=3)
            opt.step(p, [g])
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert np.allclose(p[0], ref, rtol=1e-12)

    def test_unknown(self):
        with pytest.raises(ValueError):
            Optimizer("rmsprop")


def test_flat_dirichlet_moments():
    """Convex combinations of i.i.d. draws keep the mean and shrink the variance to 2 sigma^2 / (k + 1)."""
    rng = np.random.default_rng(0)
    mu, sigma, draws = 1.5, 2.0, 100_000
    for k in (3, 5, 10):
        alpha = rng.dirichlet(np.ones(k), size=draws)
        s = np.einsum("ij,ij->i", alpha, rng.normal(mu, sigma, (draws, k)))
        assert abs(s.mean() - mu) < 3 * s.std() / math.sqrt(draws)
        assert abs(s.var() / (2 * sigma**2 / (k + 1)) - 1) < 0.05
