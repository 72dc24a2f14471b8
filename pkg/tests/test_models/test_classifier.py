"""Tests for the boosted-tree classifier and axis selection."""

import json
import math

import numpy as np
import pytest

from toneleak.exceptions import DegenerateTrainingError, InvalidArgumentError
from toneleak.models.classifier import (
    GbtHyperparams,
    RegressionTree,
    TreeEnsembleModel,
    canonical_axes,
    evaluate,
    log_loss,
    predict,
    predict_batch,
    predict_proba,
    report_from_predictions,
    select_axes,
    softmax_grad_hess,
    train,
    train_matrix,
)
from toneleak.models.dtmf import NUM_TONES, ToneId
from toneleak.models.features import FeatureLayout, FeatureVector, WindowingParams, extract_matrix
from toneleak.models.sensor_sim import generate_dataset, make_default_model


def clusters(
    n_per_class: int = 100, classes: tuple[int, ...] = (0, 1), d: int = 4, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(5.0 * k, 0.5, size=(n_per_class, d)) for k in classes])
    y = np.repeat(np.array(classes), n_per_class)
    return X, y


def feature_vectors(X: np.ndarray, y: np.ndarray) -> list[FeatureVector]:
    layout = FeatureLayout(axes=("ax",), windows_per_axis=1, features_per_window=X.shape[1])
    return [
        FeatureVector(values=row, layout=layout, label=ToneId.from_index(int(k)))
        for row, k in zip(X, y, strict=True)
    ]


class TestGbtHyperparams:
    """Test GbtHyperparams."""

    def test_defaults(self) -> None:
        """Test the reference hyperparameters."""
        hp = GbtHyperparams()
        assert (hp.learning_rate, hp.max_depth, hp.min_child_weight) == (0.2, 5, 3.0)
        assert (hp.gamma, hp.colsample_bytree, hp.n_rounds) == (0.1, 0.5, 50)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"learning_rate": 1.5},
            {"max_depth": 0},
            {"colsample_bytree": 0.0},
            {"n_rounds": -1},
            {"gamma": -0.1},
            {"n_jobs": 0},
        ],
    )
    def test_invalid(self, kwargs: dict) -> None:
        """Test out-of-range values raise."""
        with pytest.raises(InvalidArgumentError):
            GbtHyperparams(**kwargs)


class TestObjective:
    """Test the softmax objective."""

    def test_uniform_loss(self) -> None:
        """Test zero scores give a log-loss of ln 16."""
        assert log_loss(np.zeros((3, NUM_TONES)), np.array([0, 5, 15])) == pytest.approx(math.log(16))

    def test_gradient_matches_finite_differences(self) -> None:
        """Test g and the diagonal hessian against central differences of the summed loss."""
        rng = np.random.default_rng(11)
        scores = rng.normal(size=(4, NUM_TONES))
        y = rng.integers(0, NUM_TONES, size=4)
        grad, hess = softmax_grad_hess(scores, y)
        eps = 1e-5

        def total(s: np.ndarray) -> float:
            return log_loss(s, y) * len(y)

        for i in range(4):
            for k in (0, 3, int(y[i]), 15):
                bump = np.zeros_like(scores)
                bump[i, k] = eps
                numeric_g = (total(scores + bump) - total(scores - bump)) / (2 * eps)
                assert grad[i, k] == pytest.approx(numeric_g, rel=1e-5, abs=1e-8)
                g_plus, _ = softmax_grad_hess(scores + bump, y)
                g_minus, _ = softmax_grad_hess(scores - bump, y)
                numeric_h = (g_plus[i, k] - g_minus[i, k]) / (2 * eps)
                assert hess[i, k] == pytest.approx(numeric_h, rel=1e-4, abs=1e-8)

    def test_gradient_rows_sum_to_zero(self) -> None:
        """Test softmax gradients sum to zero per row."""
        grad, _ = softmax_grad_hess(np.random.default_rng(1).normal(size=(5, NUM_TONES)), np.arange(5))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


class TestRegressionTree:
    """Test the flat-array tree."""

    DOC = {
        "feature": 0,
        "threshold": 0.5,
        "left": {"leaf": -1.0},
        "right": {
            "feature": 1,
            "threshold": 2.0,
            "left": {"leaf": 0.25},
            "right": {"leaf": 3.0},
        },
    }

    def test_predict(self) -> None:
        """Test rows route left on <= threshold."""
        tree = RegressionTree.from_dict(self.DOC)
        X = np.array([[0.5, 9.0], [1.0, 2.0], [1.0, 2.5]])
        np.testing.assert_array_equal(tree.predict(X), [-1.0, 0.25, 3.0])

    def test_shape(self) -> None:
        """Test node count and depth."""
        tree = RegressionTree.from_dict(self.DOC)
        assert tree.n_nodes == 5
        assert tree.depth() == 2

    def test_dict_round_trip(self) -> None:
        """Test to_dict reproduces the nested document."""
        assert RegressionTree.from_dict(self.DOC).to_dict() == self.DOC

    def test_single_leaf(self) -> None:
        """Test a stump-less tree predicts a constant."""
        tree = RegressionTree.from_dict({"leaf": 0.5})
        assert tree.depth() == 0
        np.testing.assert_array_equal(tree.predict(np.zeros((3, 2))), 0.5)


class TestTrainMatrix:
    """Test boosting."""

    def test_separable_two_class(self) -> None:
        """Test two well-separated clusters are learned exactly."""
        X, y = clusters()
        model = train_matrix(X, y, GbtHyperparams(n_rounds=5))
        assert np.array_equal(predict_batch(model, X), y)
        X_new, y_new = clusters(seed=1)
        assert np.array_equal(predict_batch(model, X_new), y_new)

    def test_loss_history(self) -> None:
        """Test the training loss starts at ln 16 and never rises."""
        X, y = clusters(n_per_class=30, classes=(0, 4, 9))
        model = train_matrix(X, y, GbtHyperparams(n_rounds=8, min_child_weight=0.1))
        assert len(model.loss_history) == 9
        assert model.loss_history[0] == pytest.approx(math.log(16))
        assert model.loss_is_monotone()
        assert model.loss_history[-1] < model.loss_history[0]

    def test_ensemble_shape(self) -> None:
        """Test one tree per class per round, none deeper than max_depth."""
        X, y = clusters(n_per_class=40)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=3, max_depth=2, min_child_weight=0.1))
        assert len(model.trees) == NUM_TONES
        assert model.n_rounds == 3
        assert all(tree.depth() <= 2 for class_trees in model.trees for tree in class_trees)

    def test_colsample_limits_features(self) -> None:
        """Test every tree splits on at most ceil(0.5 · d) features."""
        X, y = clusters(n_per_class=40, classes=(0, 1, 2), d=6)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=4, min_child_weight=0.1))
        for class_trees in model.trees:
            for tree in class_trees:
                assert len(set(tree.feature[tree.feature >= 0].tolist())) <= 3

    def test_min_child_weight_blocks_splits(self) -> None:
        """Test an unreachable hessian floor leaves every tree a single leaf."""
        X, y = clusters(n_per_class=20)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=2, min_child_weight=1e9))
        assert all(tree.n_nodes == 1 for class_trees in model.trees for tree in class_trees)

    def test_gamma_blocks_splits(self) -> None:
        """Test a huge minimum gain prevents splitting."""
        X, y = clusters(n_per_class=20)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=2, gamma=1e9))
        assert all(tree.n_nodes == 1 for class_trees in model.trees for tree in class_trees)

    def test_deterministic(self) -> None:
        """Test identical inputs and seeds give identical models."""
        X, y = clusters(n_per_class=25, classes=(1, 2, 3))
        hp = GbtHyperparams(n_rounds=4, min_child_weight=0.1, rng_seed=9)
        a = train_matrix(X, y, hp).decision_function(X)
        b = train_matrix(X, y, hp).decision_function(X)
        np.testing.assert_array_equal(a, b)

    def test_threads_match_serial(self) -> None:
        """Test per-class thread parallelism does not change the model."""
        X, y = clusters(n_per_class=25, classes=(1, 2, 3))
        serial = train_matrix(X, y, GbtHyperparams(n_rounds=3, min_child_weight=0.1))
        threaded = train_matrix(X, y, GbtHyperparams(n_rounds=3, min_child_weight=0.1, n_jobs=4))
        np.testing.assert_array_equal(serial.decision_function(X), threaded.decision_function(X))

    def test_zero_rounds_uniform(self) -> None:
        """Test a model with no trees predicts 1/16 for every class."""
        X, y = clusters(n_per_class=5)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=0))
        np.testing.assert_allclose(predict_proba(model, X), 1.0 / NUM_TONES)
        assert model.n_rounds == 0

    def test_single_class(self) -> None:
        """Test one-class training data is rejected."""
        X, y = clusters(n_per_class=10, classes=(3,))
        with pytest.raises(DegenerateTrainingError):
            train_matrix(X, y, GbtHyperparams(n_rounds=1))

    def test_shape_mismatch(self) -> None:
        """Test X and y must agree in length."""
        X, y = clusters(n_per_class=10)
        with pytest.raises(InvalidArgumentError):
            train_matrix(X, y[:-1], GbtHyperparams(n_rounds=1))

    def test_train_on_feature_vectors(self) -> None:
        """Test train() stacks labeled FeatureVectors and records their axes."""
        X, y = clusters(n_per_class=30)
        model = train(feature_vectors(X, y), GbtHyperparams(n_rounds=3))
        assert model.axes == ("ax",)
        assert model.feature_count == 4

    def test_train_unlabeled(self) -> None:
        """Test every vector needs a label."""
        X, y = clusters(n_per_class=5)
        vectors = feature_vectors(X, y)
        vectors[0] = FeatureVector(values=vectors[0].values, layout=vectors[0].layout)
        with pytest.raises(InvalidArgumentError, match="label"):
            train(vectors, GbtHyperparams(n_rounds=1))


class TestPredict:
    """Test prediction entry points."""

    @pytest.fixture
    def model(self) -> TreeEnsembleModel:
        X, y = clusters(classes=(2, 7))
        return train_matrix(X, y, GbtHyperparams(n_rounds=5))

    def test_predict_single(self, model: TreeEnsembleModel) -> None:
        """Test a single vector decodes to a ToneId."""
        assert predict(model, np.full(4, 10.0)) is ToneId.from_index(2)
        assert predict(model, np.full(4, 35.0)) is ToneId.from_index(7)

    def test_predict_feature_vector(self, model: TreeEnsembleModel) -> None:
        """Test FeatureVector inputs are accepted."""
        X, y = clusters(n_per_class=1, classes=(7,))
        assert predict(model, feature_vectors(X, y)[0]) is ToneId.from_index(7)

    def test_length_mismatch(self, model: TreeEnsembleModel) -> None:
        """Test a vector of the wrong length raises."""
        with pytest.raises(InvalidArgumentError, match="expects 4 features"):
            predict(model, np.zeros(5))

    def test_rejects_matrix(self, model: TreeEnsembleModel) -> None:
        """Test predict takes exactly one vector."""
        with pytest.raises(InvalidArgumentError):
            predict(model, np.zeros((2, 4)))

    def test_probabilities(self, model: TreeEnsembleModel) -> None:
        """Test probabilities are a distribution per row."""
        proba = predict_proba(model, clusters(n_per_class=3, classes=(2, 7))[0])
        assert proba.shape == (6, NUM_TONES)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)


class TestEvaluate:
    """Test EvalReport construction."""

    def test_perfect(self) -> None:
        """Test a perfect predictor scores 1 with a diagonal confusion matrix."""
        y = np.repeat(np.arange(NUM_TONES), 2)
        report = report_from_predictions(y, y)
        assert report.accuracy == 1.0
        np.testing.assert_array_equal(report.confusion, 2 * np.eye(NUM_TONES, dtype=np.int64))
        np.testing.assert_array_equal(report.per_class_accuracy, 1.0)

    def test_constant_predictor(self) -> None:
        """Test always predicting tone '1' on a balanced set scores 1/16."""
        y = np.repeat(np.arange(NUM_TONES), 3)
        report = report_from_predictions(y, np.zeros_like(y))
        assert report.accuracy == pytest.approx(1 / 16)
        assert report.per_class_accuracy[0] == 1.0
        assert not np.any(report.per_class_accuracy[1:])
        assert report.total == 48
        np.testing.assert_array_equal(report.support, 3)

    def test_absent_class(self) -> None:
        """Test tones missing from the test set report zero support and accuracy."""
        report = report_from_predictions([0, 1], [0, 0])
        assert report.support[5] == 0
        assert report.per_class_accuracy[5] == 0.0
        assert report.accuracy == 0.5

    def test_empty(self) -> None:
        """Test an empty test set raises."""
        with pytest.raises(InvalidArgumentError, match="empty"):
            report_from_predictions([], [])

    def test_evaluate_paths(self) -> None:
        """Test matrix and FeatureVector inputs agree."""
        X, y = clusters(n_per_class=30)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=4, min_child_weight=0.1))
        from_matrix = evaluate(model, X, y)
        from_vectors = evaluate(model, feature_vectors(X, y))
        assert from_matrix.accuracy == from_vectors.accuracy == 1.0

    def test_evaluate_empty(self) -> None:
        """Test evaluate rejects an empty set."""
        X, y = clusters(n_per_class=10)
        model = train_matrix(X, y, GbtHyperparams(n_rounds=1))
        with pytest.raises(InvalidArgumentError):
            evaluate(model, [])


class TestModelSerialization:
    """Test the versioned model document."""

    def test_json_round_trip(self) -> None:
        """Test a model survives JSON and predicts identically."""
        X, y = clusters(n_per_class=30, classes=(0, 5, 11))
        model = train_matrix(X, y, GbtHyperparams(n_rounds=3, min_child_weight=0.1), axes=("ax", "gz"))
        restored = TreeEnsembleModel.from_dict(json.loads(json.dumps(model.to_dict())))
        np.testing.assert_array_equal(restored.decision_function(X), model.decision_function(X))
        assert restored.axes == ("ax", "gz")
        assert restored.hyperparams == model.hyperparams
        assert restored.loss_history == model.loss_history

    def test_wrong_format(self) -> None:
        """Test foreign documents are rejected."""
        with pytest.raises(InvalidArgumentError, match="unsupported model"):
            TreeEnsembleModel.from_dict({"format": "xgboost", "version": 1})


class TestSelectAxes:
    """Test selective axis integration."""

    @staticmethod
    def split_axes(seed: int = 0) -> tuple[dict, np.ndarray, dict, np.ndarray]:
        classes = (0, 1, 2, 3)
        X_tr, y_tr = clusters(n_per_class=20, classes=classes, d=3, seed=seed)
        X_va, y_va = clusters(n_per_class=5, classes=classes, d=3, seed=seed + 1)
        rng = np.random.default_rng(seed + 2)
        train_by_axis = {
            "ax": rng.normal(size=X_tr.shape),
            "az": rng.normal(size=X_tr.shape),
            "gy": X_tr,
        }
        val_by_axis = {
            "ax": rng.normal(size=X_va.shape),
            "az": rng.normal(size=X_va.shape),
            "gy": X_va,
        }
        return train_by_axis, y_tr, val_by_axis, y_va

    def test_informative_axis_ranked_first(self, quick_hp: GbtHyperparams) -> None:
        """Test the axis carrying the signal ranks first and is selected."""
        selection = select_axes(*self.split_axes(), hp=quick_hp)
        assert selection.ranking[0] == "gy"
        assert "gy" in selection.axes
        assert selection.validation_accuracy == 1.0

    def test_never_worse_than_best_single(self, quick_hp: GbtHyperparams) -> None:
        """Test the chosen subset is at least as good as every single axis."""
        selection = select_axes(*self.split_axes(seed=4), hp=quick_hp)
        singles = [acc for subset, acc in selection.accuracies.items() if len(subset) == 1]
        assert selection.validation_accuracy >= max(singles)
        assert selection.validation_accuracy == max(selection.accuracies.values())

    def test_candidates(self, quick_hp: GbtHyperparams) -> None:
        """Test singles plus cumulative top-2 and top-3 subsets, in canonical order."""
        selection = select_axes(*self.split_axes(), hp=quick_hp)
        assert len(selection.accuracies) == 3 + 2
        for subset in selection.accuracies:
            assert subset == canonical_axes(subset)
        assert selection.axes == canonical_axes(selection.axes)

    def test_ties_keep_first(self, quick_hp: GbtHyperparams) -> None:
        """Test identical axes rank in axis order and the first candidate wins."""
        X_tr, y_tr = clusters(n_per_class=10, classes=(0, 1), d=2)
        X_va, y_va = clusters(n_per_class=4, classes=(0, 1), d=2, seed=1)
        selection = select_axes(
            {"az": X_tr, "ax": X_tr, "ay": X_tr},
            y_tr,
            {"az": X_va, "ax": X_va, "ay": X_va},
            y_va,
            quick_hp,
        )
        assert selection.ranking == ("ax", "ay", "az")
        assert selection.axes == ("ax",)

    def test_empty_validation(self, quick_hp: GbtHyperparams) -> None:
        """Test selection needs validation data."""
        train_by_axis, y_tr, val_by_axis, _ = self.split_axes()
        with pytest.raises(InvalidArgumentError, match="validation"):
            select_axes(train_by_axis, y_tr, val_by_axis, np.array([], dtype=int), quick_hp)

    def test_axis_mismatch(self, quick_hp: GbtHyperparams) -> None:
        """Test train and validation must cover the same axes."""
        train_by_axis, y_tr, val_by_axis, y_va = self.split_axes()
        del val_by_axis["az"]
        with pytest.raises(InvalidArgumentError, match="same axes"):
            select_axes(train_by_axis, y_tr, val_by_axis, y_va, quick_hp)

    def test_complementary_axes_combined(self) -> None:
        """Test two axes that each separate 8 of 16 tones are selected together."""
        hp = GbtHyperparams(n_rounds=20, min_child_weight=0.1, colsample_bytree=1.0, rng_seed=3)
        rng = np.random.default_rng(9)

        def split(n_per_class: int) -> tuple[dict, np.ndarray]:
            y = np.repeat(np.arange(NUM_TONES), n_per_class)
            by_axis = {
                "ax": rng.normal(3.0 * (y // 2)[:, None], 0.3, size=(y.size, 2)),
                "az": rng.normal(size=(y.size, 2)),
                "gy": rng.normal(3.0 * (y % 8)[:, None], 0.3, size=(y.size, 2)),
            }
            return by_axis, y

        train_by_axis, y_tr = split(12)
        val_by_axis, y_va = split(6)
        selection = select_axes(train_by_axis, y_tr, val_by_axis, y_va, hp)

        assert {"ax", "gy"} <= set(selection.axes)
        singles = {subset[0]: acc for subset, acc in selection.accuracies.items() if len(subset) == 1}
        assert singles["ax"] <= 0.7
        assert singles["gy"] <= 0.7
        assert selection.validation_accuracy > max(singles.values())
        assert selection.validation_accuracy >= 0.9


class TestChanceLevel:
    """Test an attack on recordings that carry no tone."""

    def test_silent_preset_is_chance(self, quick_hp: GbtHyperparams) -> None:
        """Test accuracy on pure sensor noise stays near 1/16."""
        model = make_default_model("silent", seed=0)
        dataset = generate_dataset(model, reps_per_tone=20, duration=0.25, master_seed=2)
        params = WindowingParams(frame_size=50, frame_step=10)
        X = extract_matrix(dataset.recordings, ("ax",), params)
        y = np.array([rec.label.index for rec in dataset.recordings])
        train_idx = np.array(dataset.train_indices)
        test_idx = np.array(dataset.test_indices)

        fitted = train_matrix(X[train_idx], y[train_idx], quick_hp, axes=("ax",))
        report = evaluate(fitted, X[test_idx], y[test_idx])
        assert report.total == 64
        assert report.accuracy <= 0.25
