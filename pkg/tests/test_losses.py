import math

import numpy as np
import pytest

from taskhg.losses import (
    alignment_loss,
    au_loss,
    bpr_loss,
    bpr_pos_loss,
    joint_loss,
    log_sigmoid,
    sigmoid,
)
from taskhg.model import EmbeddingTable


class TestAlignment:
    def test_identical_vectors(self):
        assert alignment_loss([([1.0, 2.0], [1.0, 2.0])]) == 0.0

    def test_hand_norm(self):
        assert alignment_loss([([1.0, 0.0], [0.0, 1.0])]) == 2.0

    def test_quadratic_homogeneity(self):
        pairs = [([1.0, -2.0], [0.5, 3.0]), ([0.0, 1.0], [1.0, 1.0])]
        doubled = [([2 * a for a in u], [2 * b for b in i]) for u, i in pairs]
        assert math.isclose(alignment_loss(doubled), 4.0 * alignment_loss(pairs))

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pairs = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(5)]
            assert alignment_loss(pairs) >= 0.0

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            alignment_loss([])


class TestBPR:
    def test_zero_margin(self):
        assert math.isclose(bpr_loss([(1.0, 1.0)]), math.log(2.0), rel_tol=1e-12)

    def test_analytic_margin(self):
        # sigmoid(ln 3) = 3/4, so the loss is ln(4/3).
        assert math.isclose(bpr_loss([(math.log(3.0), 0.0)]), math.log(4.0 / 3.0), rel_tol=1e-12)

    def test_monotone_decreasing_in_margin(self):
        margins = [-5.0, -1.0, 0.0, 1.0, 5.0, 50.0]
        values = [bpr_loss([(m, 0.0)]) for m in margins]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-20

    def test_extreme_margin_finite(self):
        value = bpr_loss([(-1000.0, 0.0)])
        assert math.isfinite(value)
        assert math.isclose(value, 1000.0, rel_tol=1e-12)

    def test_sums_over_batch(self):
        assert math.isclose(bpr_loss([(0.0, 0.0)] * 3), 3 * math.log(2.0), rel_tol=1e-12)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            bpr_loss([])


class TestBPRPos:
    def test_zero_score(self):
        assert math.isclose(bpr_pos_loss([0.0]), math.log(2.0), rel_tol=1e-12)

    def test_analytic_score(self):
        assert math.isclose(bpr_pos_loss([math.log(3.0)]), math.log(4.0 / 3.0), rel_tol=1e-12)

    def test_large_score_vanishes(self):
        assert bpr_pos_loss([60.0]) < 1e-20

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            bpr_pos_loss([])


class TestAU:
    def test_identical_unit_vectors_zero(self):
        v = [1.0, 0.0]
        rows = np.array([v, v, v])
        assert math.isclose(au_loss([(v, v)], rows, rows, 1.0), 0.0, abs_tol=1e-15)

    def test_orthogonal_pair_alignment_two(self):
        u, i = [1.0, 0.0], [0.0, 1.0]
        value = au_loss([(u, i)], np.array([u]), np.array([i]), 1.0)
        assert math.isclose(value, 2.0, rel_tol=1e-12)  # single rows: uniformity 0

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        pairs = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(4)]
        users = rng.normal(size=(5, 4))
        items = rng.normal(size=(6, 4))
        a = au_loss(pairs, users, items, 0.7)
        scaled_pairs = [(3.0 * u, 5.0 * i) for u, i in pairs]
        b = au_loss(scaled_pairs, 2.0 * users, 0.25 * items, 0.7)
        assert math.isclose(a, b, rel_tol=1e-12)

    def test_small_set_uniformity_is_zero(self):
        u, i = [1.0, 0.0], [1.0, 0.0]
        with_single = au_loss([(u, i)], np.array([u]), np.array([i]), 10.0)
        assert math.isclose(with_single, 0.0, abs_tol=1e-15)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            au_loss([], np.zeros((0, 2)), np.zeros((0, 2)), 1.0)


class TestJoint:
    def test_beta_one_ignores_auxiliary(self):
        table = EmbeddingTable(np.zeros((1, 2)), np.zeros((1, 2)))
        assert joint_loss(2.5, [4.0, 4.0], 1.0, 0.0, table) == 2.5

    def test_hand_combination(self):
        table = EmbeddingTable(np.zeros((1, 2)), np.zeros((1, 2)))
        assert joint_loss(2.0, [1.0, 3.0], 0.5, 0.0, table) == 3.0

    def test_regularizer_zero_on_zero_embeddings(self):
        table = EmbeddingTable(np.zeros((3, 2)), np.zeros((2, 2)))
        assert joint_loss(1.0, [], 1.0, 5.0, table) == 1.0

    def test_regularizer_frobenius(self):
        table = EmbeddingTable(np.array([[1.0, 1.0]]), np.array([[2.0, 0.0]]))
        assert joint_loss(0.0, [], 0.5, 0.1, table) == pytest.approx(0.1 * 6.0)

    def test_beta_out_of_range(self):
        table = EmbeddingTable(np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(ValueError):
            joint_loss(1.0, [], 1.5, 0.0, table)


class TestStableHelpers:
    def test_sigmoid_extremes(self):
        assert sigmoid(np.array([800.0]))[0] == 1.0
        assert sigmoid(np.array([-800.0]))[0] == pytest.approx(0.0, abs=1e-300)

    def test_log_sigmoid_matches_naive_in_safe_range(self):
        x = np.linspace(-30, 30, 121)
        naive = np.log(1.0 / (1.0 + np.exp(-x)))
        assert np.allclose(log_sigmoid(x), naive, rtol=1e-12, atol=1e-12)

    def test_au_loss_never_overflows(self):
        # Normalization happens first, so huge magnitudes stay safe.
        rng = np.random.default_rng(2)
        pairs = [(1e150 * rng.normal(size=3), 1e150 * rng.normal(size=3))
                 for _ in range(3)]
        rows = 1e150 * rng.normal(size=(4, 3))
        value = au_loss(pairs, rows, rows, 1.0)
        assert math.isfinite(value)

    def test_attention_softmax_never_overflows(self):
        from taskhg.model import ta_attention

        fused, alpha = ta_attention([1e8, 0.0], [("a", [1e8, 0.0]), ("b", [-1e8, 0.0])], 2)
        assert np.isfinite(alpha).all() and np.isfinite(fused).all()
        assert alpha.sum() == pytest.approx(1.0)
