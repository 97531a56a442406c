import numpy as np
import pytest

from typegraph import autodiff as ad
from typegraph import classifier
from typegraph.autodiff import Tensor
from typegraph.classifier import (
    THRESHOLD_GRID,
    decide,
    group_weight_matrix,
    logits,
    multitask_loss,
    probabilities,
    tune_threshold,
)
from typegraph.data import TypeVocabulary
from typegraph.labelgraph import PropagationConfig, TypeAdjacency


@pytest.fixture
def tv():
    return TypeVocabulary(
        ["g0", "g1", "f0", "f1", "u0"],
        ["general", "general", "fine", "fine", "ultra"],
    )


def no_prop_logits(f, W):
    return logits(
        f, W, Tensor(np.eye(W.shape[1])),
        TypeAdjacency(np.zeros((W.shape[0],) * 2)),
        PropagationConfig("row_normalized"),
        propagation_enabled=False,
    )


class TestLogits:
    def test_identity_feature_reads_type_vectors(self):
        rng = np.random.default_rng(0)
        W = Tensor(rng.normal(size=(5, 3)))
        z = no_prop_logits(Tensor(np.eye(3)), W)
        assert np.allclose(z.data, W.data.T, atol=1e-15)

    def test_dot_product_oracle(self):
        f = Tensor(np.array([[1.0, 2.0]]))
        W = Tensor(np.array([[3.0, 4.0], [0.5, -1.0]]))
        z = no_prop_logits(f, W)
        assert np.allclose(z.data, [[11.0, -1.5]], atol=1e-15)

    def test_propagation_changes_scores(self):
        rng = np.random.default_rng(1)
        W = Tensor(rng.normal(size=(3, 4)))
        T = Tensor(rng.normal(size=(4, 4)))
        A = np.array([[0.0, 2.0, 0.0], [2.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        adj = TypeAdjacency(A)
        f = Tensor(rng.normal(size=(2, 4)))
        cfg = PropagationConfig("row_normalized")
        on = logits(f, W, T, adj, cfg)
        off = logits(f, W, T, adj, cfg, propagation_enabled=False)
        assert not np.allclose(on.data, off.data)

    def test_probabilities_monotone(self):
        z = Tensor(np.array([[-3.0, -1.0, 0.0, 1.0, 3.0]]))
        p = probabilities(z).data[0]
        assert np.all(np.diff(p) > 0)
        assert p[2] == 0.5


class TestGroupWeights:
    def test_active_groups_only(self, tv):
        gold = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])  # general only
        w = group_weight_matrix(gold, tv)
        assert w.tolist() == [[1.0, 1.0, 0.0, 0.0, 0.0]]

    def test_all_groups_active(self, tv):
        gold = np.array([[1.0, 0.0, 1.0, 0.0, 1.0]])
        w = group_weight_matrix(gold, tv)
        assert np.all(w == 1.0)

    def test_per_sample_independence(self, tv):
        gold = np.array([
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0],
        ])
        w = group_weight_matrix(gold, tv)
        assert w[0].tolist() == [1.0, 1.0, 0.0, 0.0, 0.0]
        assert w[1].tolist() == [0.0, 0.0, 1.0, 1.0, 0.0]


class TestMultitaskLoss:
    def test_scalar_oracle(self, tv):
        probs = Tensor(np.array([[0.9, 0.1, 0.5, 0.5, 0.5]]))
        gold = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])
        loss = multitask_loss(probs, gold, tv)
        expected = -(np.log(0.9) + np.log(1 - 0.1))  # only the general group
        assert loss.data == pytest.approx(expected, abs=1e-12)

    def test_all_groups_equals_plain_bce(self, tv):
        rng = np.random.default_rng(2)
        p = rng.uniform(0.05, 0.95, size=(3, 5))
        gold = np.zeros((3, 5))
        gold[:, 0] = gold[:, 2] = gold[:, 4] = 1.0  # every group active
        loss = multitask_loss(Tensor(p), gold, tv)
        plain = ad.bce(Tensor(p), gold)
        assert loss.data == pytest.approx(plain.data / 3, abs=1e-12)

    def test_empty_gold_rejected(self, tv):
        with pytest.raises(ValueError):
            multitask_loss(Tensor(np.full((1, 5), 0.5)), np.zeros((1, 5)), tv)

    def test_inactive_group_gets_zero_gradient(self, tv):
        rng = np.random.default_rng(3)
        z = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
        gold = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])  # fine/ultra inactive
        with ad.Tape() as tape:
            loss = multitask_loss(probabilities(z), gold, tv)
            tape.backward(loss)
        assert np.all(z.grad[0, 2:] == 0.0)
        assert np.all(z.grad[0, :2] != 0.0)

    def test_mean_over_batch(self, tv):
        p = np.array([[0.9, 0.1, 0.5, 0.5, 0.5]])
        gold = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])
        one = multitask_loss(Tensor(p), gold, tv).data
        two = multitask_loss(
            Tensor(np.repeat(p, 2, axis=0)), np.repeat(gold, 2, axis=0), tv
        ).data
        assert one == pytest.approx(two, abs=1e-12)


class TestDecide:
    def test_above_threshold_chosen(self, tv):
        pred = decide(np.array([0.9, 0.6, 0.4, 0.1, 0.55]), 0.5, tv)
        assert pred.chosen == {"g0", "g1", "u0"}
        assert not pred.used_fallback

    def test_fallback_argmax(self, tv):
        pred = decide(np.array([0.1, 0.2, 0.4, 0.3, 0.1]), 0.5, tv)
        assert pred.chosen == {"f0"}
        assert pred.used_fallback

    def test_no_fallback(self, tv):
        pred = decide(np.array([0.1] * 5), 0.5, tv, fallback=False)
        assert pred.chosen == set()

    def test_zero_threshold_chooses_all(self, tv):
        pred = decide(np.array([0.1, 0.0, 0.2, 0.3, 0.4]), 0.0, tv)
        assert pred.chosen == set(tv.names)

    def test_invalid_threshold(self, tv):
        with pytest.raises(ValueError):
            decide(np.zeros(5), 1.5, tv)

    def test_monotone_in_threshold(self, tv):
        rng = np.random.default_rng(4)
        scores = rng.uniform(size=5)
        prev = None
        for t in THRESHOLD_GRID:
            chosen = decide(scores, float(t), tv, fallback=False).chosen
            if prev is not None:
                assert chosen <= prev
            prev = chosen


class TestThresholdGrid:
    def test_fifty_points(self):
        assert THRESHOLD_GRID.size == 50

    def test_equal_spacing(self):
        diffs = np.diff(THRESHOLD_GRID)
        assert np.allclose(diffs, 0.02, atol=1e-10)
        assert THRESHOLD_GRID[0] == pytest.approx(0.02)
        assert THRESHOLD_GRID[-1] == pytest.approx(1.0)


class TestTuneThreshold:
    def test_unique_maximum(self, tv):
        # One sample, gold {g0}; scores put g0 at 0.62 and g1 at 0.35:
        # thresholds in (0.35, 0.62] give perfect F1, above 0.62 the argmax
        # fallback still yields g0, below 0.36 precision drops.
        rows = [np.array([0.62, 0.35, 0.1, 0.1, 0.1])]
        t, f1 = tune_threshold(rows, [{"g0"}], tv)
        assert f1 == pytest.approx(1.0)
        assert t == pytest.approx(1.0)  # ties break to the largest threshold

    def test_plateau_breaks_high(self, tv):
        rows = [np.array([0.9, 0.8, 0.1, 0.1, 0.1])]
        t, f1 = tune_threshold(rows, [{"g0", "g1"}], tv)
        assert f1 == pytest.approx(1.0)
        # both types are selected only while t <= 0.8, so the perfect-F1
        # plateau ends there and the tie-break picks its upper edge
        assert t == pytest.approx(0.8)

    def test_empty_rejected(self, tv):
        with pytest.raises(ValueError):
            tune_threshold([], [], tv)
