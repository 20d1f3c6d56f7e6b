import numpy as np
import pytest

from edgeplan.errors import ParseError, ValidationError
from edgeplan.gbdt import (
    Hyperparams,
    load_model,
    predict,
    predict_batch,
    save_model,
    train_gbdt,
)


def feature_rows(columns: dict[int, list[float]], n: int) -> np.ndarray:
    X = np.zeros((n, 14))
    for col, values in columns.items():
        X[:, col] = values
    return X


class TestTraining:
    def test_zero_trees_predicts_mean(self):
        X = feature_rows({0: [1.0, 2.0]}, 2)
        model = train_gbdt(X, np.array([1.0, 3.0]), "inference",
                           Hyperparams(trees=0))
        assert predict(model, X[0]) == 2.0
        assert predict(model, X[1]) == 2.0

    def test_constant_features_predict_mean(self):
        X = np.ones((50, 14))
        y = np.linspace(1.0, 2.0, 50)
        model = train_gbdt(X, y, "inference",
                           Hyperparams(trees=20, min_samples_leaf=1))
        assert all(t.feature[0] == -1 for t in model.trees)  # no split possible
        assert predict(model, X[0]) == pytest.approx(y.mean())

    def test_single_split_separates_two_clusters(self):
        # six hand-checked samples split exactly on the bandwidth column
        X = feature_rows({10: [1e8, 1e8, 1e8, 1e9, 1e9, 1e9]}, 6)
        y = np.array([10.0, 12.0, 14.0, 1.0, 2.0, 3.0])
        model = train_gbdt(X, y, "sync",
                           Hyperparams(trees=1, max_depth=1, learning_rate=1.0,
                                       min_samples_leaf=1))
        # base 7.0; one split at 5.5e8; leaf means 12.0 and 2.0
        assert predict(model, X[0]) == pytest.approx(12.0)
        assert predict(model, X[5]) == pytest.approx(2.0)
        tree = model.trees[0]
        assert tree.feature[0] == 10
        assert tree.threshold[0] == pytest.approx(5.5e8)

    def test_training_loss_non_increasing(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 10, size=(400, 14))
        y = X[:, 0] * 2 + X[:, 3] + rng.uniform(0, 0.1, 400)
        model = train_gbdt(X, y, "inference",
                           Hyperparams(trees=40, max_depth=3, min_samples_leaf=5))
        losses = model.train_losses
        assert all(b <= a + 1e-12 * losses[0] for a, b in zip(losses, losses[1:]))

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, size=(100, 14))
        y = rng.uniform(0, 1, 100)
        model = train_gbdt(X, y, "inference",
                           Hyperparams(trees=5, max_depth=8, min_samples_leaf=10))
        for tree in model.trees:
            counts = np.zeros(len(tree.feature), dtype=int)
            idx = np.zeros(len(X), dtype=int)
            for _ in range(10):
                feat = tree.feature[idx]
                active = feat >= 0
                if not active.any():
                    break
                go_left = X[np.arange(len(X))[active], feat[active]] \
                    <= tree.threshold[idx[active]]
                idx[np.flatnonzero(active)] = np.where(
                    go_left, tree.left[idx[active]], tree.right[idx[active]])
            for leaf in idx:
                counts[leaf] += 1
            leaf_nodes = tree.feature == -1
            assert all(counts[leaf_nodes] >= 10)

    def test_deterministic_retraining(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, size=(200, 14))
        y = rng.uniform(0, 1, 200)
        a = train_gbdt(X, y, "sync", Hyperparams(trees=10))
        b = train_gbdt(X, y, "sync", Hyperparams(trees=10))
        assert save_model(a) == save_model(b)

    def test_input_validation(self):
        with pytest.raises(ValidationError, match="at least 2"):
            train_gbdt(np.zeros((1, 14)), np.zeros(1), "inference")
        with pytest.raises(ValidationError, match="\\(n, 14\\)"):
            train_gbdt(np.zeros((4, 3)), np.zeros(4), "inference")
        with pytest.raises(ValidationError, match="finite"):
            train_gbdt(np.zeros((4, 14)), np.array([1.0, np.nan, 0.0, 1.0]),
                       "inference")
        with pytest.raises(ValidationError, match="learning_rate"):
            Hyperparams(learning_rate=0.0).validate()


class TestPrediction:
    def test_clamped_at_zero(self):
        X = feature_rows({0: [0.0, 1.0, 2.0, 3.0]}, 4)
        y = np.array([0.0, 0.0, 0.0, 100.0])
        model = train_gbdt(X, y, "sync",
                           Hyperparams(trees=30, max_depth=2, learning_rate=1.0,
                                       min_samples_leaf=1))
        assert predict(model, X[0]) >= 0.0

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 5, size=(300, 14))
        y = X[:, 1] + X[:, 2] ** 2
        model = train_gbdt(X, y, "inference", Hyperparams(trees=25, max_depth=4,
                                                          min_samples_leaf=2))
        batch = predict_batch(model, X[:20])
        singles = np.array([predict(model, row) for row in X[:20]])
        assert np.array_equal(batch, singles)


class TestPersistence:
    def _trained(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0, 3, size=(150, 14))
        y = X[:, 0] * X[:, 5]
        return X, train_gbdt(X, y, "inference",
                             Hyperparams(trees=12, max_depth=4, min_samples_leaf=3))

    def test_roundtrip_predictions_bit_exact(self):
        X, model = self._trained()
        restored = load_model(save_model(model))
        assert np.array_equal(predict_batch(model, X), predict_batch(restored, X))

    def test_roundtrip_document_stable(self):
        _, model = self._trained()
        text = save_model(model)
        assert save_model(load_model(text)) == text

    def test_unknown_schema_version_refused(self):
        import json
        _, model = self._trained()
        doc = json.loads(save_model(model))
        doc["schema_version"] = 99
        with pytest.raises(ParseError, match="version"):
            load_model(json.dumps(doc))

    def test_corrupt_document(self):
        with pytest.raises(ParseError):
            load_model("{not json")
        with pytest.raises(ParseError):
            load_model('{"schema_version": 1}')  # trees/base missing
