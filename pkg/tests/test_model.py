import math
import types

import numpy as np
import pytest

from ugst.errors import NumericError, StructureError
from ugst.graph import Graph, normalize_adjacency
from ugst.model import (
    ModelParams,
    OptimizerState,
    TrainConfig,
    accuracy,
    adam_step,
    entropy_loss,
    evaluate_objective,
    forward,
    Gradients,
    hard_term,
    init_params,
    nll_loss,
    soft_loss,
    softmax,
    train_supervised,
)
from ugst.selftrain import PosteriorTable


def single_node_setup():
    """One isolated node, d=h=C=2, weights chosen so the logits are (1, 0)."""
    adj = normalize_adjacency(Graph(1))
    x = np.array([[1.0, 0.0]])
    params = ModelParams(
        w1=np.eye(2), b1=np.zeros(2), w2=np.eye(2), b2=np.zeros(2)
    )
    return params, adj, x


class TestInitParams:
    def test_minimal_dims_bounds(self):
        p = init_params(1, 1, 1, seed=0)
        assert p.b1.tolist() == [0.0] and p.b2.tolist() == [0.0]
        assert abs(p.w1[0, 0]) <= math.sqrt(3.0)

    def test_same_seed_bitwise_identical(self):
        a, b = init_params(5, 7, 3, seed=42), init_params(5, 7, 3, seed=42)
        assert a.equals(b)

    def test_glorot_bound_many_seeds(self):
        bound = math.sqrt(6.0 / 12.0)
        for seed in range(40):
            p = init_params(4, 8, 3, seed=seed)
            assert np.abs(p.w1).max() <= bound

    def test_zero_dimension_rejected(self):
        with pytest.raises(StructureError):
            init_params(0, 4, 2, seed=0)


class TestForward:
    def test_zero_weights_give_uniform(self):
        adj = normalize_adjacency(Graph(3, np.array([[0, 1], [1, 2]])))
        x = np.random.default_rng(0).normal(size=(3, 4))
        p = ModelParams(np.zeros((4, 5)), np.zeros(5), np.zeros((5, 4)), np.zeros(4))
        trace = forward(p, adj, x)
        np.testing.assert_allclose(trace.probs, 0.25, rtol=0, atol=1e-15)

    def test_eval_mode_deterministic(self):
        adj = normalize_adjacency(Graph(2, np.array([[0, 1]])))
        x = np.random.default_rng(1).normal(size=(2, 3))
        p = init_params(3, 4, 2, seed=9)
        t1 = forward(p, adj, x)
        t2 = forward(p, adj, x)
        np.testing.assert_array_equal(t1.probs, t2.probs)

    def test_single_node_hand_computed_softmax(self):
        params, adj, x = single_node_setup()
        trace = forward(params, adj, x)
        np.testing.assert_array_equal(trace.logits, [[1.0, 0.0]])
        e = math.exp(1.0)
        np.testing.assert_allclose(
            trace.probs, [[e / (e + 1), 1 / (e + 1)]], rtol=1e-15
        )
        np.testing.assert_allclose(trace.probs, [[0.7311, 0.2689]], atol=5e-5)

    def test_train_without_dropout_equals_eval(self):
        adj = normalize_adjacency(Graph(3, np.array([[0, 2]])))
        x = np.random.default_rng(2).normal(size=(3, 2))
        p = init_params(2, 4, 3, seed=1)
        te = forward(p, adj, x, mode="eval")
        tt = forward(p, adj, x, mode="train", dropout_rate=0.0)
        np.testing.assert_array_equal(te.probs, tt.probs)
        assert tt.dropout_mask is None

    def test_dropout_mask_values(self):
        adj = normalize_adjacency(Graph(4, np.array([[0, 1], [2, 3]])))
        x = np.random.default_rng(3).normal(size=(4, 3))
        p = init_params(3, 16, 2, seed=2)
        trace = forward(
            p, adj, x, mode="train", dropout_rate=0.25,
            rng=np.random.default_rng(5),
        )
        scale = 1.0 / 0.75
        assert set(np.unique(trace.dropout_mask)) <= {0.0, scale}

    def test_rows_stochastic(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            logits = rng.normal(scale=10, size=(6, 5))
            p = softmax(logits)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_overflow_raises_numeric_error(self):
        adj = normalize_adjacency(Graph(1))
        x = np.array([[1e300]])
        p = ModelParams(np.array([[1e300]]), np.zeros(1), np.array([[1e10]]), np.zeros(1))
        with pytest.raises(NumericError):
            forward(p, adj, x)


class TestNllLoss:
    def test_perfect_prediction_near_zero(self):
        probs = np.eye(4)
        labels = np.arange(4)
        mask = np.ones(4, dtype=bool)
        assert nll_loss(probs, labels, mask) <= 1e-11

    def test_uniform_seven_classes(self):
        probs = np.full((3, 7), 1 / 7)
        loss = nll_loss(probs, np.zeros(3, dtype=int), np.ones(3, dtype=bool))
        assert abs(loss - math.log(7)) < 1e-12

    def test_hand_computed_two_nodes(self):
        probs = np.array([[0.8, 0.2], [0.4, 0.6]])
        loss = nll_loss(probs, np.array([0, 0]), np.ones(2, dtype=bool))
        expected = -(math.log(0.8) + math.log(0.4)) / 2
        assert abs(loss - expected) < 1e-12
        assert abs(expected - 0.5697) < 5e-5

    def test_empty_mask_rejected(self):
        with pytest.raises(StructureError):
            nll_loss(np.eye(2), np.zeros(2, dtype=int), np.zeros(2, dtype=bool))


class TestSoftLoss:
    def test_one_hot_posterior_equals_nll(self):
        rng = np.random.default_rng(8)
        probs = softmax(rng.normal(size=(6, 4)))
        labels = rng.integers(0, 4, size=6)
        q = np.eye(4)[labels]
        table = PosteriorTable(np.arange(6), q)
        mask = np.ones(6, dtype=bool)
        assert abs(soft_loss(probs, table, mask) - nll_loss(probs, labels, mask)) < 1e-12

    def test_uniform_posterior_uniform_probs(self):
        probs = np.full((2, 3), 1 / 3)
        table = PosteriorTable(np.arange(2), np.full((2, 3), 1 / 3))
        assert abs(soft_loss(probs, table) - math.log(3)) < 1e-12

    def test_hand_computed_single_node(self):
        probs = np.array([[0.5, 0.5]])
        table = PosteriorTable(np.array([0]), np.array([[0.7, 0.3]]))
        assert abs(soft_loss(probs, table) - math.log(2)) < 1e-12

    def test_invalid_rows_rejected_at_construction(self):
        with pytest.raises(StructureError):
            PosteriorTable(np.array([0]), np.array([[0.7, 0.7]]))
        with pytest.raises(StructureError):
            PosteriorTable(np.array([0]), np.array([[1.2, -0.2]]))

    def test_mask_outside_posterior_rejected(self):
        probs = np.full((3, 2), 0.5)
        table = PosteriorTable(np.array([0, 1]), np.full((2, 2), 0.5))
        mask = np.array([True, False, True])
        with pytest.raises(StructureError):
            soft_loss(probs, table, mask)


class TestEntropyLoss:
    def test_one_hot_rows_zero(self):
        probs = np.eye(3)
        assert entropy_loss(probs, np.ones(3, dtype=bool)) == 0.0

    def test_uniform_rows_log_c(self):
        probs = np.full((4, 6), 1 / 6)
        assert abs(entropy_loss(probs, np.ones(4, dtype=bool)) - math.log(6)) < 1e-12

    def test_hand_computed_row(self):
        probs = np.array([[0.9, 0.1]])
        expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        loss = entropy_loss(probs, np.ones(1, dtype=bool))
        assert abs(loss - expected) < 1e-12
        assert abs(expected - 0.3251) < 5e-5

    def test_range_property(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            c = int(rng.integers(2, 8))
            probs = softmax(rng.normal(scale=5, size=(10, c)))
            h = entropy_loss(probs, np.ones(10, dtype=bool))
            assert 0.0 <= h <= math.log(c) + 1e-12

    def test_empty_mask_rejected(self):
        with pytest.raises(StructureError):
            entropy_loss(np.eye(2), np.zeros(2, dtype=bool))


class TestAdamStep:
    def zero_like(self, p):
        return Gradients(*(np.zeros_like(getattr(p, f)) for f in ("w1", "b1", "w2", "b2")))

    def test_zero_gradient_leaves_params(self):
        p = init_params(2, 3, 2, seed=0)
        state = OptimizerState.zeros_like(p)
        p2, state2 = adam_step(p, self.zero_like(p), state, lr=0.1)
        assert p2.equals(p)
        assert state2.step == 1

    def test_first_step_magnitude_is_lr(self):
        p = ModelParams(np.array([[1.0]]), np.array([2.0]), np.array([[3.0]]), np.array([4.0]))
        g = Gradients(np.array([[0.5]]), np.array([-2.0]), np.array([[10.0]]), np.array([0.001]))
        p2, _ = adam_step(p, g, OptimizerState.zeros_like(p), lr=0.01)
        # m_hat / (sqrt(v_hat) + eps) == sign(g) up to the epsilon
        for f, gval in (("w1", 0.5), ("b1", -2.0), ("w2", 10.0), ("b2", 0.001)):
            delta = np.ravel(getattr(p2, f) - getattr(p, f))[0]
            assert abs(delta + 0.01 * np.sign(gval)) < 1e-4

    def test_two_steps_match_hand_rolled_trace(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, g = 1.0, 3.0
        m = v = 0.0
        expected = theta
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            expected -= lr * m_hat / (math.sqrt(v_hat) + eps)
        p = ModelParams(np.array([[theta]]), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
        grads = Gradients(np.array([[g]]), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
        state = OptimizerState.zeros_like(p)
        for _ in range(2):
            p, state = adam_step(p, grads, state, lr=lr)
        assert abs(p.w1[0, 0] - expected) < 1e-15

    def test_non_finite_gradient_rejected(self):
        p = init_params(2, 2, 2, seed=0)
        g = self.zero_like(p)
        g.w1[0, 0] = np.nan
        with pytest.raises(NumericError):
            adam_step(p, g, OptimizerState.zeros_like(p), lr=0.1)


class TestTrainSupervised:
    def test_zero_epochs_returns_init(self, sbm_dataset, sbm_split):
        cfg = TrainConfig(epochs=0, seed=3)
        params = train_supervised(sbm_dataset, sbm_split, cfg)
        from ugst.seeding import derive_seed

        expected = init_params(
            sbm_dataset.feature_dim, cfg.hidden_dim, sbm_dataset.num_classes,
            derive_seed(3, "init"),
        )
        assert params.equals(expected)

    def test_two_node_graph_separable(self):
        from ugst.data import Dataset, Split

        ds = Dataset(
            graph=Graph(2),
            features=np.array([[1.0, 0.0], [0.0, 1.0]]),
            labels=np.array([0, 1]),
            num_classes=2,
            name="two",
        )
        split = Split(
            labeled=np.array([True, True]),
            val=np.array([False, False]),
            test=np.array([False, False]),
            unlabeled=np.array([False, False]),
        )
        cfg = TrainConfig(epochs=200, dropout_rate=0.0, hidden_dim=8, seed=0)
        params = train_supervised(ds, split, cfg)
        adj = normalize_adjacency(ds.graph)
        loss = evaluate_objective(
            params, adj, ds.features, [hard_term(ds.labels, split.labeled)]
        )
        assert loss < 0.1

    def test_loss_mostly_non_increasing(self, sbm_dataset, sbm_split):
        cfg = TrainConfig(epochs=80, dropout_rate=0.0, seed=1)
        adj = normalize_adjacency(sbm_dataset.graph)
        terms = [hard_term(sbm_dataset.labels, sbm_split.labeled)]
        from ugst.model import fit
        from ugst.seeding import stream

        params = init_params(sbm_dataset.feature_dim, cfg.hidden_dim,
                             sbm_dataset.num_classes, 0)
        losses = []
        for _ in range(cfg.epochs):
            losses.append(evaluate_objective(params, adj, sbm_dataset.features,
                                             terms, cfg.weight_decay))
            params, _ = fit(
                params, adj, sbm_dataset.features, terms, epochs=1,
                lr=cfg.learning_rate, weight_decay=cfg.weight_decay,
                dropout_rate=0.0, rng=stream(1, "dropout", "base"),
            )
        drops = sum(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        assert drops / (len(losses) - 1) >= 0.9

    def test_deterministic(self, sbm_dataset, sbm_split):
        cfg = TrainConfig(epochs=30, seed=5)
        a = train_supervised(sbm_dataset, sbm_split, cfg)
        b = train_supervised(sbm_dataset, sbm_split, cfg)
        assert a.equals(b)

    def test_empty_labeled_set_rejected(self, sbm_dataset):
        n = sbm_dataset.num_nodes
        fake = types.SimpleNamespace(
            labeled=np.zeros(n, dtype=bool),
            val=np.zeros(n, dtype=bool),
            test=np.zeros(n, dtype=bool),
            unlabeled=np.ones(n, dtype=bool),
        )
        with pytest.raises(StructureError):
            train_supervised(sbm_dataset, fake, TrainConfig())

    def test_warns_on_missing_class(self, sbm_dataset):
        n = sbm_dataset.num_nodes
        labeled = np.zeros(n, dtype=bool)
        labeled[np.flatnonzero(sbm_dataset.labels == 0)[:3]] = True
        fake = types.SimpleNamespace(
            labeled=labeled, val=np.zeros(n, dtype=bool),
            test=np.zeros(n, dtype=bool), unlabeled=~labeled,
        )
        with pytest.warns(UserWarning, match="misses classes"):
            train_supervised(sbm_dataset, fake, TrainConfig(epochs=1))


class TestAccuracy:
    def test_one_hot_correct(self):
        labels = np.array([0, 1, 2])
        probs = np.eye(3)[labels]
        assert accuracy(probs, labels, np.ones(3, dtype=bool)) == 1.0

    def test_one_hot_wrong(self):
        labels = np.array([0, 1, 2])
        probs = np.eye(3)[(labels + 1) % 3]
        assert accuracy(probs, labels, np.ones(3, dtype=bool)) == 0.0

    def test_three_of_four(self):
        labels = np.array([0, 1, 0, 1])
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]])
        assert accuracy(probs, labels, np.ones(4, dtype=bool)) == 0.75

    def test_tie_breaks_to_lowest_index(self):
        probs = np.array([[0.5, 0.5]])
        assert accuracy(probs, np.array([0]), np.ones(1, dtype=bool)) == 1.0
        assert accuracy(probs, np.array([1]), np.ones(1, dtype=bool)) == 0.0

    def test_empty_mask_rejected(self):
        with pytest.raises(StructureError):
            accuracy(np.eye(2), np.zeros(2, dtype=int), np.zeros(2, dtype=bool))


class TestConfigValidation:
    def test_dropout_range(self):
        with pytest.raises(StructureError):
            TrainConfig(dropout_rate=1.0)

    def test_learning_rate_positive(self):
        with pytest.raises(StructureError):
            TrainConfig(learning_rate=0.0)
