import numpy as np
import pytest

from icewatch.errors import EmptyMatrix, InvalidConfig, SingleClassDataset, TooFewSamples
from icewatch.learners import (
    ABNORMAL,
    NORMAL,
    CartModel,
    CartNode,
    KnnModel,
    LearnerConfig,
    MlpModel,
    StandardizationParams,
    mlp_gradient,
    mlp_loss,
    mlp_probability,
    model_from_dict,
    model_to_dict,
    predict,
    predict_batch,
    standardize_fit,
    train,
)
from icewatch.scada import Label


def identity_params(d):
    return StandardizationParams(mean=np.zeros(d), std=np.ones(d))


def separable_1d(rng, n=50):
    half = n // 2
    neg = rng.uniform(-1.0, -0.02, size=half)
    pos = rng.uniform(0.02, 1.0, size=n - half)
    X = np.concatenate([neg, pos])[:, None]
    y = np.concatenate([np.zeros(half, dtype=np.int8), np.ones(n - half, dtype=np.int8)])
    return X, y


class TestStandardize:
    def test_constant_column_passthrough(self):
        params = standardize_fit(np.array([[2.0], [2.0], [2.0]]))
        assert params.mean[0] == 2.0 and params.std[0] == 0.0
        out = params.apply(np.array([[5.0]]))
        assert out[0, 0] == 3.0  # shifted but not scaled

    def test_two_point_column(self):
        params = standardize_fit(np.array([[0.0], [2.0]]))
        assert params.mean[0] == 1.0 and params.std[0] == 1.0  # population std

    def test_apply_after_fit_standardizes(self, rng):
        X = rng.normal(3.0, 2.5, size=(100, 4))
        out = standardize_fit(X).apply(X)
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(out.std(axis=0), 1.0, atol=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyMatrix):
            standardize_fit(np.empty((0, 3)))


class TestConfigValidation:
    def test_zero_epochs_rejected(self):
        with pytest.raises(InvalidConfig):
            LearnerConfig(algorithm="mlp", mlp_epochs=0)

    def test_bad_algorithm(self):
        with pytest.raises(InvalidConfig):
            LearnerConfig(algorithm="svm")

    def test_bad_k(self):
        with pytest.raises(InvalidConfig):
            LearnerConfig(algorithm="knn", knn_k=0)

    def test_bad_hidden(self):
        with pytest.raises(InvalidConfig):
            LearnerConfig(algorithm="mlp", mlp_hidden=())


class TestTrainChecks:
    def test_single_class(self, rng):
        X = rng.normal(size=(20, 3))
        with pytest.raises(SingleClassDataset):
            train(LearnerConfig(algorithm="knn"), X, np.zeros(20, dtype=int))

    def test_too_few_for_knn(self, rng):
        X = rng.normal(size=(2, 3))
        with pytest.raises(TooFewSamples):
            train(LearnerConfig(algorithm="knn", knn_k=3), X, np.array([0, 1]))

    def test_too_few_for_cart(self, rng):
        X = rng.normal(size=(6, 2))
        with pytest.raises(TooFewSamples):
            train(LearnerConfig(algorithm="cart", cart_min_leaf=5), X, np.array([0, 1] * 3))

    def test_too_few_for_mlp(self, rng):
        X = rng.normal(size=(8, 2))
        with pytest.raises(TooFewSamples):
            train(LearnerConfig(algorithm="mlp", mlp_batch_size=32), X, np.array([0, 1] * 4))

    def test_empty(self):
        with pytest.raises(EmptyMatrix):
            train(LearnerConfig(algorithm="knn"), np.empty((0, 3)), [])


class TestKnn:
    def test_hand_worked_vote(self):
        # training: two normals near the origin, three abnormals near (1, 1);
        # the three nearest neighbors of (0.9, 1.0) are all abnormal
        X = np.array([[0, 0], [0, 0.1], [1, 1], [1, 0.9], [1, 1.1]], dtype=float)
        y = np.array([NORMAL, NORMAL, ABNORMAL, ABNORMAL, ABNORMAL], dtype=np.int8)
        model = KnnModel(k=3, X=X, y=y, standardization=identity_params(2))
        assert predict(model, np.array([0.9, 1.0])) is Label.ABNORMAL

    def test_memorizes_training_rows(self, rng):
        X = rng.normal(size=(20, 4))
        y = np.array([0, 1] * 10, dtype=np.int8)
        model = train(LearnerConfig(algorithm="knn", knn_k=3), X, y)
        assert model.X.shape == (20, 4)
        assert np.array_equal(model.y, y)
        assert np.allclose(model.X, model.standardization.apply(X))

    def test_k1_reproduces_training_labels(self, rng):
        X = rng.normal(size=(40, 5))
        y = np.array([0, 1] * 20, dtype=np.int8)
        model = train(LearnerConfig(algorithm="knn", knn_k=1), X, y)
        assert np.array_equal(predict_batch(model, X), y)

    def test_affine_invariance_of_predictions(self, rng):
        X = rng.normal(size=(60, 6))
        y = (rng.uniform(size=60) < 0.5).astype(np.int8)
        y[:2] = [0, 1]
        queries = rng.normal(size=(30, 6))
        base = predict_batch(train(LearnerConfig(algorithm="knn"), X, y), queries)
        scale = rng.uniform(0.1, 4.0, size=6) * rng.choice([-1.0, 1.0], size=6)
        shift = rng.normal(size=6)
        rescaled = predict_batch(
            train(LearnerConfig(algorithm="knn"), X * scale + shift, y), queries * scale + shift
        )
        assert np.array_equal(base, rescaled)

    def test_distance_tie_broken_by_lower_index(self):
        # two training points equidistant from the query with opposite labels
        X = np.array([[1.0], [-1.0]])
        for first_label in (NORMAL, ABNORMAL):
            y = np.array([first_label, 1 - first_label], dtype=np.int8)
            model = KnnModel(k=1, X=X, y=y, standardization=identity_params(1))
            got = predict_batch(model, np.array([[0.0]]))[0]
            assert got == first_label

    def test_even_k_class_tie_goes_abnormal(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([NORMAL, ABNORMAL], dtype=np.int8)
        model = KnnModel(k=2, X=X, y=y, standardization=identity_params(1))
        assert predict(model, np.array([0.5])) is Label.ABNORMAL


class TestCart:
    def test_separable_fixture_20_seeds(self):
        cfg = LearnerConfig(algorithm="cart")
        for seed in range(20):
            rng = np.random.default_rng(seed)
            X, y = separable_1d(rng)
            model = train(cfg, X, y)
            assert np.array_equal(predict_batch(model, X), y)
            root = model.root
            assert not root.is_leaf
            assert X[y == 0].max() < root.threshold < X[y == 1].min()

    def test_single_split_tree_descent(self):
        leaf_n = CartNode(n=5, impurity=0.0, klass=NORMAL, proportions=(1.0, 0.0))
        leaf_a = CartNode(n=5, impurity=0.0, klass=ABNORMAL, proportions=(0.0, 1.0))
        root = CartNode(
            n=10, impurity=0.5, klass=ABNORMAL, proportions=(0.5, 0.5),
            feature=0, threshold=0.0, left=leaf_n, right=leaf_a,
        )
        model = CartModel(root=root, max_depth=12, min_leaf=5)
        assert predict(model, np.array([-1.0, 9.9])) is Label.NORMAL
        assert predict(model, np.array([0.0, -9.9])) is Label.ABNORMAL  # value < threshold goes left

    def test_every_point_reaches_a_leaf_and_gini_decreases(self, rng):
        X = rng.normal(size=(200, 4))
        y = (X[:, 1] + 0.3 * rng.normal(size=200) > 0).astype(np.int8)
        y[:2] = [0, 1]
        model = train(LearnerConfig(algorithm="cart", cart_max_depth=6), X, y)

        def walk(node):
            if node.is_leaf:
                return
            weighted = (
                node.left.n * node.left.impurity + node.right.n * node.right.impurity
            ) / node.n
            assert weighted <= node.impurity + 1e-12
            assert node.left.n >= model.min_leaf and node.right.n >= model.min_leaf
            walk(node.left)
            walk(node.right)

        walk(model.root)
        preds = predict_batch(model, X)
        assert preds.shape == (200,)  # every row routed

    def test_max_depth_respected(self, rng):
        X = rng.normal(size=(300, 3))
        y = (rng.uniform(size=300) < 0.5).astype(np.int8)
        y[:2] = [0, 1]
        model = train(LearnerConfig(algorithm="cart", cart_max_depth=3), X, y)

        def depth(node):
            if node.is_leaf:
                return 0
            return 1 + max(depth(node.left), depth(node.right))

        assert depth(model.root) <= 3

    def test_deterministic(self, rng):
        X = rng.normal(size=(100, 4))
        y = (X[:, 0] > 0).astype(np.int8)
        y[:2] = [0, 1]
        cfg = LearnerConfig(algorithm="cart")
        assert model_to_dict(train(cfg, X, y)) == model_to_dict(train(cfg, X, y))


class TestMlp:
    def test_zero_weights_predict_abnormal(self):
        model = MlpModel(
            weights=(np.zeros((3, 4)), np.zeros((4, 1))),
            biases=(np.zeros(4), np.zeros(1)),
            standardization=identity_params(3),
        )
        x = np.array([0.3, -0.2, 0.5])
        assert mlp_probability(model, x[None, :])[0] == 0.5
        assert predict(model, x) is Label.ABNORMAL  # p >= 0.5 rule

    def test_near_perfect_predictions_have_tiny_gradient(self):
        # hand-built net that saturates to the correct label on x = +-1
        model = MlpModel(
            weights=(np.array([[100.0]]), np.array([[200.0]])),
            biases=(np.zeros(1), np.array([-100.0])),
            standardization=identity_params(1),
        )
        X = np.array([[-1.0], [1.0], [1.0], [-1.0]])
        y = [0, 1, 1, 0]
        grads_w, grads_b = mlp_gradient(model, X, y)
        total = sum(float(np.abs(g).sum()) for g in grads_w + grads_b)
        assert total < 1e-10

    def test_duplicated_batch_same_gradient(self, rng):
        model = MlpModel(
            weights=(rng.normal(0, 0.3, (4, 5)), rng.normal(0, 0.3, (5, 1))),
            biases=(rng.normal(0, 0.1, 5), rng.normal(0, 0.1, 1)),
            standardization=identity_params(4),
        )
        X = rng.normal(size=(6, 4))
        y = [0, 1, 0, 1, 1, 0]
        gw1, gb1 = mlp_gradient(model, X, y)
        gw2, gb2 = mlp_gradient(model, np.vstack([X, X]), y + y)
        for a, b in zip(gw1 + gb1, gw2 + gb2):
            assert np.allclose(a, b, atol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(5):
            model = MlpModel(
                weights=(rng.normal(0, 0.2, (3, 4)), rng.normal(0, 0.2, (4, 1))),
                biases=(rng.normal(0, 0.1, 4), rng.normal(0, 0.1, 1)),
                standardization=identity_params(3),
            )
            X = rng.normal(size=(5, 3))
            y = list((rng.uniform(size=5) < 0.5).astype(int))
            grads_w, grads_b = mlp_gradient(model, X, y)
            h = 1e-5
            for layer in range(2):
                W = model.weights[layer]
                for idx in np.ndindex(*W.shape):
                    Wp = [w.copy() for w in model.weights]
                    Wm = [w.copy() for w in model.weights]
                    Wp[layer][idx] += h
                    Wm[layer][idx] -= h
                    lp = mlp_loss(MlpModel(tuple(Wp), model.biases, model.standardization), X, y)
                    lm = mlp_loss(MlpModel(tuple(Wm), model.biases, model.standardization), X, y)
                    fd = (lp - lm) / (2 * h)
                    assert grads_w[layer][idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_full_batch_loss_non_increasing_small_lr(self, rng):
        X, y = separable_1d(rng, n=60)
        cfg = LearnerConfig(
            algorithm="mlp",
            mlp_learning_rate=0.001,
            mlp_epochs=1,
            mlp_batch_size=60,
            seed=3,
        )
        import dataclasses

        losses = []
        model = None
        for epochs in range(1, 30):
            model = train(dataclasses.replace(cfg, mlp_epochs=epochs), X, y)
            losses.append(mlp_loss(model, X, y))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_deterministic(self, rng):
        X = rng.normal(size=(64, 5))
        y = (X[:, 2] > 0).astype(np.int8)
        y[:2] = [0, 1]
        cfg = LearnerConfig(algorithm="mlp", mlp_epochs=5, seed=11)
        m1, m2 = train(cfg, X, y), train(cfg, X, y)
        for a, b in zip(m1.weights, m2.weights):
            assert np.array_equal(a, b)

    def test_learns_separable_data(self, rng):
        X, y = separable_1d(rng, n=200)
        cfg = LearnerConfig(algorithm="mlp", mlp_epochs=200, mlp_batch_size=32, seed=0)
        model = train(cfg, X, y)
        assert (predict_batch(model, X) == y).mean() > 0.95


class TestSerialization:
    @pytest.mark.parametrize("algorithm", ["knn", "cart", "mlp"])
    def test_round_trip_predictions(self, algorithm, rng):
        X = rng.normal(size=(64, 4))
        y = (X[:, 0] + 0.2 * rng.normal(size=64) > 0).astype(np.int8)
        y[:2] = [0, 1]
        cfg = LearnerConfig(algorithm=algorithm, mlp_epochs=10)
        model = train(cfg, X, y)
        back = model_from_dict(model_to_dict(model))
        queries = rng.normal(size=(20, 4))
        assert np.array_equal(predict_batch(model, queries), predict_batch(back, queries))

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidConfig):
            model_from_dict({"format": 1, "kind": "forest"})
        with pytest.raises(InvalidConfig):
            model_from_dict({"format": 99, "kind": "knn"})
