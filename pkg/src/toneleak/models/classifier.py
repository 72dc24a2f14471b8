"""Gradient-boosted tree classifier for the 16 touchtones.

This module implements multiclass softmax boosting with exact greedy regression
trees (one tree per class per round), the evaluation report, and selective axis
integration: rank axes by single-axis validation accuracy, grow cumulative top-k
subsets, and keep the best of all candidates.

Split search presorts every feature once per training run; each node keeps, for
the features sampled by its tree, its rows in sorted order, and children inherit
that order through stable boolean filtering instead of re-sorting.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import logsumexp, softmax

from toneleak.exceptions import DegenerateTrainingError, InvalidArgumentError
from toneleak.models.dtmf import NUM_TONES, ToneId
from toneleak.models.features import FeatureVector
from toneleak.models.sensor_sim import AXIS_NAMES
from toneleak.utils.random_streams import make_rng

logger = logging.getLogger(__name__)

MODEL_FORMAT = "toneleak-gbt"
MODEL_VERSION = 1

# Tolerated per-round log-loss increase before a warning is logged
_LOSS_TOLERANCE = 1e-9

IntArray = npt.NDArray[np.intp]
FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class GbtHyperparams:
    """Boosting hyperparameters.

    Attributes:
        learning_rate: Shrinkage applied to every tree, in (0, 1].
        max_depth: Maximum tree depth (root at depth 0).
        min_child_weight: Minimum hessian sum in each child of a split.
        gamma: Minimum loss reduction for a split.
        colsample_bytree: Share of features each tree may split on.
        n_rounds: Boosting rounds.
        reg_lambda: L2 regularization of leaf weights.
        rng_seed: Seed of the per-tree feature sampling.
        n_jobs: Threads building the per-class trees of a round.
    """

    learning_rate: float = 0.20
    max_depth: int = 5
    min_child_weight: float = 3.0
    gamma: float = 0.1
    colsample_bytree: float = 0.5
    n_rounds: int = 50
    reg_lambda: float = 1.0
    rng_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidArgumentError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1:
            raise InvalidArgumentError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise InvalidArgumentError(
                f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}"
            )
        if self.n_rounds < 0:
            raise InvalidArgumentError(f"n_rounds must be >= 0, got {self.n_rounds}")
        if self.min_child_weight < 0 or self.gamma < 0 or self.reg_lambda < 0:
            raise InvalidArgumentError("min_child_weight, gamma, reg_lambda must be >= 0")
        if self.n_jobs < 1:
            raise InvalidArgumentError(f"n_jobs must be >= 1, got {self.n_jobs}")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Binary regression tree in flat-array form.

    Node i is a leaf when feature[i] == -1; otherwise rows with
    x[feature[i]] <= threshold[i] go to left[i], the rest to right[i].
    """

    feature: IntArray
    threshold: FloatArray
    left: IntArray
    right: IntArray
    value: FloatArray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, X: FloatArray) -> FloatArray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            rows = np.flatnonzero(feat >= 0)
            if rows.size == 0:
                return self.value[node]
            current = node[rows]
            go_left = X[rows, feat[rows]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])

    def to_dict(self, node: int = 0) -> dict[str, Any]:
        """Nested-node representation rooted at `node`."""
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RegressionTree":
        builder = _TreeBuilder()

        def visit(d: dict[str, Any]) -> int:
            if "leaf" in d:
                return builder.add_leaf(float(d["leaf"]))
            node = builder.add_split(int(d["feature"]), float(d["threshold"]))
            builder.link(node, visit(d["left"]), visit(d["right"]))
            return node

        visit(doc)
        return builder.build()


class _TreeBuilder:
    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _add(self, feature: int, threshold: float, value: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def add_leaf(self, value: float) -> int:
        return self._add(-1, 0.0, value)

    def add_split(self, feature: int, threshold: float) -> int:
        return self._add(feature, threshold, 0.0)

    def link(self, node: int, left: int, right: int) -> None:
        self.left[node] = left
        self.right[node] = right

    def build(self) -> RegressionTree:
        return RegressionTree(
            feature=np.array(self.feature, dtype=np.intp),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.intp),
            right=np.array(self.right, dtype=np.intp),
            value=np.array(self.value, dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class TreeEnsembleModel:
    """Trained boosted ensemble.

    Attributes:
        trees: trees[k][r] is the tree of class k in round r.
        feature_count: Length of the feature vectors the model accepts.
        hyperparams: Training hyperparameters.
        axes: Sensor axes the features were built from.
        loss_history: Training log-loss before any tree, then after each round.
        n_classes: Number of classes (16 touchtones).
    """

    trees: tuple[tuple[RegressionTree, ...], ...]
    feature_count: int
    hyperparams: GbtHyperparams
    axes: tuple[str, ...] = ()
    loss_history: tuple[float, ...] = ()
    n_classes: int = NUM_TONES

    @property
    def n_rounds(self) -> int:
        return len(self.trees[0]) if self.trees else 0

    def decision_function(self, X: npt.ArrayLike) -> FloatArray:
        """Raw class scores, shape (n, n_classes)."""
        matrix = self._check(X)
        scores = np.zeros((matrix.shape[0], self.n_classes))
        for k, class_trees in enumerate(self.trees):
            for tree in class_trees:
                scores[:, k] += self.hyperparams.learning_rate * tree.predict(matrix)
        return scores

    def loss_is_monotone(self) -> bool:
        return all(
            b <= a + _LOSS_TOLERANCE
            for a, b in zip(self.loss_history, self.loss_history[1:], strict=False)
        )

    def _check(self, X: npt.ArrayLike) -> FloatArray:
        matrix = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if matrix.shape[1] != self.feature_count:
            raise InvalidArgumentError(
                f"model expects {self.feature_count} features, got {matrix.shape[1]}"
            )
        return matrix

    def to_dict(self) -> dict[str, Any]:
        """Versioned JSON-ready document; trees as nested nodes."""
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "n_classes": self.n_classes,
            "feature_count": self.feature_count,
            "axes": list(self.axes),
            "hyperparams": asdict(self.hyperparams),
            "loss_history": list(self.loss_history),
            "trees": [[tree.to_dict() for tree in class_trees] for class_trees in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "TreeEnsembleModel":
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise InvalidArgumentError(
                f"unsupported model document {doc.get('format')!r} v{doc.get('version')!r}"
            )
        return cls(
            trees=tuple(
                tuple(RegressionTree.from_dict(t) for t in class_trees)
                for class_trees in doc["trees"]
            ),
            feature_count=int(doc["feature_count"]),
            hyperparams=GbtHyperparams(**doc["hyperparams"]),
            axes=tuple(doc["axes"]),
            loss_history=tuple(float(v) for v in doc["loss_history"]),
            n_classes=int(doc["n_classes"]),
        )


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Test-set evaluation.

    Attributes:
        accuracy: trace(confusion) / total.
        confusion: (16, 16) counts, rows = true tone, columns = predicted tone.
        per_class_accuracy: Recall per tone (0.0 for tones absent from the test set).
    """

    accuracy: float
    confusion: npt.NDArray[np.int64]
    per_class_accuracy: FloatArray

    @property
    def support(self) -> npt.NDArray[np.int64]:
        return self.confusion.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


@dataclass(frozen=True)
class AxisSelection:
    """Outcome of selective axis integration.

    Attributes:
        axes: Chosen subset, in canonical axis order.
        ranking: Axes ordered by single-axis validation accuracy.
        accuracies: Validation accuracy of every candidate subset, in the order
            evaluated (singles, then cumulative top-2 ... top-n).
        validation_accuracy: Accuracy of the chosen subset.
    """

    axes: tuple[str, ...]
    ranking: tuple[str, ...]
    accuracies: dict[tuple[str, ...], float] = field(default_factory=dict)
    validation_accuracy: float = 0.0


def softmax_grad_hess(
    scores: FloatArray, y: IntArray
) -> tuple[FloatArray, FloatArray]:
    """Gradient and diagonal hessian of the summed softmax log-loss.

    g = p − onehot(y), h = p(1 − p).
    """
    p = softmax(scores, axis=1)
    grad = p.copy()
    grad[np.arange(y.size), y] -= 1.0
    hess = p * (1.0 - p)
    return grad, hess


def log_loss(scores: FloatArray, y: IntArray) -> float:
    """Mean multiclass log-loss of raw scores."""
    log_norm = logsumexp(scores, axis=1)
    return float(np.mean(log_norm - scores[np.arange(y.size), y]))


def _best_split(
    X: FloatArray,
    cols: IntArray,
    node_order: IntArray,
    g: FloatArray,
    h: FloatArray,
    hp: GbtHyperparams,
) -> tuple[int, float] | None:
    """Best (feature, threshold) for a node, or None when no split pays off.

    node_order is (n_cols, n_rows): row indices of the node sorted by each column.
    """
    gs = g[node_order]
    hs = h[node_order]
    G = float(gs[0].sum())
    H = float(hs[0].sum())

    GL = np.cumsum(gs, axis=1)[:, :-1]
    HL = np.cumsum(hs, axis=1)[:, :-1]
    GR = G - GL
    HR = H - HL
    xs = X[node_order, cols[:, None]]

    valid = (
        (xs[:, 1:] > xs[:, :-1])
        & (HL >= hp.min_child_weight)
        & (HR >= hp.min_child_weight)
    )
    if not valid.any():
        return None

    lam = hp.reg_lambda
    parent = G * G / (H + lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - hp.gamma
    gain = np.where(valid, gain, -np.inf)

    col, pos = np.unravel_index(int(np.argmax(gain)), gain.shape)
    if not gain[col, pos] > 0.0:
        return None

    lo, hi = float(xs[col, pos]), float(xs[col, pos + 1])
    threshold = 0.5 * (lo + hi)
    if threshold >= hi:
        threshold = lo
    return int(cols[col]), threshold


def _grow_tree(
    X: FloatArray,
    order: IntArray,
    cols: IntArray,
    g: FloatArray,
    h: FloatArray,
    hp: GbtHyperparams,
) -> RegressionTree:
    builder = _TreeBuilder()
    lam = hp.reg_lambda

    def leaf(node_order: IntArray) -> int:
        rows = node_order[0]
        return builder.add_leaf(-float(g[rows].sum()) / (float(h[rows].sum()) + lam))

    def grow(node_order: IntArray, depth: int) -> int:
        n_rows = node_order.shape[1]
        if depth >= hp.max_depth or n_rows < 2:
            return leaf(node_order)
        split = _best_split(X, cols, node_order, g, h, hp)
        if split is None:
            return leaf(node_order)

        feature, threshold = split
        goes_left = X[:, feature] <= threshold
        sel = goes_left[node_order]
        n_left = int(sel[0].sum())
        left_order = node_order[sel].reshape(len(cols), n_left)
        right_order = node_order[~sel].reshape(len(cols), n_rows - n_left)

        node = builder.add_split(feature, threshold)
        builder.link(node, grow(left_order, depth + 1), grow(right_order, depth + 1))
        return node

    grow(np.ascontiguousarray(order[:, cols].T), 0)
    return builder.build()


def train_matrix(
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    hp: GbtHyperparams,
    axes: Sequence[str] = (),
) -> TreeEnsembleModel:
    """Fit the ensemble on a feature matrix.

    Args:
        X: (n, d) feature matrix.
        y: Class indices (ToneId.index) per row.
        hp: Hyperparameters.
        axes: Axis names recorded in the model metadata.

    Raises:
        DegenerateTrainingError: If fewer than two classes are present.
        InvalidArgumentError: On shape mismatches.
    """
    matrix = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    labels = np.asarray(y, dtype=np.intp)
    if matrix.ndim != 2 or matrix.shape[0] != labels.size:
        raise InvalidArgumentError(
            f"X must be (n, d) with n = len(y); got {matrix.shape} and {labels.size} labels"
        )
    if np.unique(labels).size < 2:
        raise DegenerateTrainingError("training data must contain at least two classes")
    if labels.min() < 0 or labels.max() >= NUM_TONES:
        raise InvalidArgumentError("class indices out of range")

    n, d = matrix.shape
    n_sampled = min(d, max(1, math.ceil(hp.colsample_bytree * d)))
    order = np.argsort(matrix, axis=0, kind="stable")
    scores = np.zeros((n, NUM_TONES))
    trees: list[list[RegressionTree]] = [[] for _ in range(NUM_TONES)]
    history = [log_loss(scores, labels)]

    logger.info(
        "Training %d rounds x %d classes on %d samples x %d features (%d per tree)",
        hp.n_rounds, NUM_TONES, n, d, n_sampled,
    )

    pool = ThreadPoolExecutor(max_workers=hp.n_jobs) if hp.n_jobs > 1 else None
    try:
        for round_index in range(hp.n_rounds):
            grad, hess = softmax_grad_hess(scores, labels)

            def fit_class(k: int, r: int = round_index) -> RegressionTree:
                rng = make_rng(hp.rng_seed, r, k)
                cols = np.sort(rng.choice(d, size=n_sampled, replace=False))
                return _grow_tree(matrix, order, cols, grad[:, k], hess[:, k], hp)

            if pool is not None:
                round_trees = list(pool.map(fit_class, range(NUM_TONES)))
            else:
                round_trees = [fit_class(k) for k in range(NUM_TONES)]

            for k, tree in enumerate(round_trees):
                trees[k].append(tree)
                scores[:, k] += hp.learning_rate * tree.predict(matrix)

            loss = log_loss(scores, labels)
            if loss > history[-1] + _LOSS_TOLERANCE:
                logger.warning(
                    "Training log-loss rose in round %d: %.6f -> %.6f",
                    round_index, history[-1], loss,
                )
            history.append(loss)
            logger.debug("Round %d: log-loss %.6f", round_index, loss)
    finally:
        if pool is not None:
            pool.shutdown()

    return TreeEnsembleModel(
        trees=tuple(tuple(t) for t in trees),
        feature_count=d,
        hyperparams=hp,
        axes=tuple(axes),
        loss_history=tuple(history),
    )


def _stack(features: Sequence[FeatureVector]) -> tuple[FloatArray, IntArray]:
    if not features:
        raise InvalidArgumentError("no feature vectors given")
    lengths = {len(fv) for fv in features}
    if len(lengths) != 1:
        raise InvalidArgumentError(f"inconsistent feature vector lengths: {sorted(lengths)}")
    if any(fv.label is None for fv in features):
        raise InvalidArgumentError("every feature vector needs a label")
    X = np.vstack([fv.values for fv in features])
    y = np.array([fv.label.index for fv in features if fv.label is not None], dtype=np.intp)
    return X, y


def train(train_features: Sequence[FeatureVector], hp: GbtHyperparams) -> TreeEnsembleModel:
    """Fit the ensemble on labeled feature vectors."""
    X, y = _stack(train_features)
    return train_matrix(X, y, hp, axes=train_features[0].layout.axes)


def predict_proba(model: TreeEnsembleModel, X: npt.ArrayLike) -> FloatArray:
    """Softmax class probabilities, shape (n, 16)."""
    return np.asarray(softmax(model.decision_function(X), axis=1), dtype=np.float64)


def predict_batch(model: TreeEnsembleModel, X: npt.ArrayLike) -> IntArray:
    """Arg-max class index per row; ties go to the lowest index."""
    return np.argmax(model.decision_function(X), axis=1).astype(np.intp)


def predict(model: TreeEnsembleModel, features: FeatureVector | npt.ArrayLike) -> ToneId:
    """Predict the tone of a single feature vector.

    Raises:
        InvalidArgumentError: If the vector length does not match the model.
    """
    values = features.values if isinstance(features, FeatureVector) else features
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise InvalidArgumentError("predict takes a single feature vector")
    return ToneId.from_index(int(predict_batch(model, vector[None, :])[0]))


def report_from_predictions(y_true: npt.ArrayLike, y_pred: npt.ArrayLike) -> EvalReport:
    """Build an EvalReport from class indices."""
    truth = np.asarray(y_true, dtype=np.intp)
    pred = np.asarray(y_pred, dtype=np.intp)
    if truth.size == 0:
        raise InvalidArgumentError("cannot evaluate an empty test set")
    confusion = np.zeros((NUM_TONES, NUM_TONES), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    support = confusion.sum(axis=1)
    per_class = np.divide(
        np.diag(confusion), support, out=np.zeros(NUM_TONES), where=support > 0
    )
    accuracy = float(np.trace(confusion) / truth.size)
    return EvalReport(accuracy=accuracy, confusion=confusion, per_class_accuracy=per_class)


def evaluate(
    model: TreeEnsembleModel,
    test_features: Sequence[FeatureVector] | npt.ArrayLike,
    y: npt.ArrayLike | None = None,
) -> EvalReport:
    """Score the model on a test set.

    Args:
        model: Trained model.
        test_features: Labeled FeatureVectors, or a matrix together with y.
        y: Class indices when test_features is a matrix.

    Raises:
        InvalidArgumentError: On an empty test set.
    """
    if y is None:
        vectors = list(test_features)  # type: ignore[arg-type]
        if not vectors:
            raise InvalidArgumentError("cannot evaluate an empty test set")
        X, labels = _stack(vectors)
    else:
        X = np.asarray(test_features, dtype=np.float64)
        labels = np.asarray(y, dtype=np.intp)
        if labels.size == 0:
            raise InvalidArgumentError("cannot evaluate an empty test set")
    return report_from_predictions(labels, predict_batch(model, X))


def canonical_axes(axes: Sequence[str]) -> tuple[str, ...]:
    """Axes sorted in AXIS_NAMES order."""
    chosen = set(axes)
    return tuple(a for a in AXIS_NAMES if a in chosen)


def select_axes(
    train_by_axis: Mapping[str, FloatArray],
    y_train: npt.ArrayLike,
    val_by_axis: Mapping[str, FloatArray],
    y_val: npt.ArrayLike,
    hp: GbtHyperparams,
) -> AxisSelection:
    """Selective axis integration.

    Trains one model per axis and ranks axes by validation accuracy (ties keep
    AXIS_NAMES order), then trains cumulative top-2 ... top-n models and returns
    the best of all candidates. Ties between candidates favour the one evaluated
    first, so the result is never worse than the best single axis on validation.

    Args:
        train_by_axis: Axis name → training feature matrix of that axis alone.
        y_train: Training class indices.
        val_by_axis: Axis name → validation feature matrix.
        y_val: Validation class indices.
        hp: Hyperparameters for every candidate model.

    Raises:
        InvalidArgumentError: If the validation set is empty or axes mismatch.
    """
    y_val_arr = np.asarray(y_val, dtype=np.intp)
    if y_val_arr.size == 0:
        raise InvalidArgumentError("axis selection needs a non-empty validation set")
    axes = canonical_axes(train_by_axis)
    if set(axes) != set(val_by_axis) or not axes:
        raise InvalidArgumentError("train and validation must cover the same axes")

    def score(subset: tuple[str, ...]) -> float:
        ordered = canonical_axes(subset)
        X_tr = np.hstack([train_by_axis[a] for a in ordered])
        X_va = np.hstack([val_by_axis[a] for a in ordered])
        model = train_matrix(X_tr, y_train, hp, axes=ordered)
        acc = report_from_predictions(y_val_arr, predict_batch(model, X_va)).accuracy
        logger.info("Axis subset %s: validation accuracy %.4f", ",".join(ordered), acc)
        return acc

    accuracies: dict[tuple[str, ...], float] = {}
    for axis in axes:
        accuracies[(axis,)] = score((axis,))

    ranking = tuple(sorted(axes, key=lambda a: (-accuracies[(a,)], AXIS_NAMES.index(a))))
    for k in range(2, len(ranking) + 1):
        subset = canonical_axes(ranking[:k])
        accuracies[subset] = score(subset)

    best_subset = max(accuracies, key=lambda s: accuracies[s])
    logger.info(
        "Selected axes %s (validation accuracy %.4f)",
        ",".join(best_subset), accuracies[best_subset],
    )
    return AxisSelection(
        axes=best_subset,
        ranking=ranking,
        accuracies=accuracies,
        validation_accuracy=accuracies[best_subset],
    )
