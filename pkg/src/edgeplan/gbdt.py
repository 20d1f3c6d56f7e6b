"""Gradient-boosted regression trees (squared error), trained exactly.

Each boosting round fits one binary regression tree to the current residuals
with exact greedy variance-reduction splits; prediction is
``base + lr * sum(leaf values)``, clamped at zero.  Training and prediction
are fully deterministic: ties between splits resolve to the lowest feature
index and lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

MODEL_SCHEMA_VERSION = 1
FEATURE_COUNT = 14

#: Relative tolerance below which a split gain is treated as numeric noise.
_GAIN_REL_EPS = 1e-12


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; children reference node indices, -1 marks a leaf."""

    feature: np.ndarray    # int32, -1 for leaves
    threshold: np.ndarray  # float64 (midpoint between adjacent values)
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 leaf value (residual mean)


@dataclass
class GbdtModel:
    base_prediction: float
    learning_rate: float
    label_kind: str
    trees: list[Tree] = field(default_factory=list)
    max_depth: int = 0
    train_losses: list[float] = field(default_factory=list, repr=False)
    schema_version: int = MODEL_SCHEMA_VERSION


@dataclass(frozen=True)
class Hyperparams:
    trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 20

    def validate(self) -> None:
        if self.trees < 0:
            raise ValidationError("tree count must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")


class _TreeBuilder:
    def __init__(self, X: np.ndarray, z: np.ndarray, params: Hyperparams):
        self.X = X
        self.z = z
        self.params = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, idx: np.ndarray):
        """Return (gain, feature, threshold, left_mask) or None."""
        z = self.z[idx]
        n = idx.size
        min_leaf = self.params.min_samples_leaf
        if n < 2 * min_leaf:
            return None
        # Centering residuals at the node mean keeps the prefix-sum gain
        # formula cancellation-free (constant labels yield exactly zero gain).
        zc = z - z.mean()
        sse = float(np.dot(zc, zc))
        if sse <= 0.0:
            return None
        gain_floor = _GAIN_REL_EPS * sse
        best = None
        for f in range(self.X.shape[1]):
            vals = self.X[idx, f]
            order = np.argsort(vals, kind="stable")
            v_sorted = vals[order]
            z_sorted = zc[order]
            prefix = np.cumsum(z_sorted)
            # split after position i (1-based count i+1 on the left)
            counts = np.arange(1, n)
            left_sum = prefix[:-1]
            total = prefix[-1]
            right_sum = total - left_sum
            with np.errstate(invalid="ignore"):
                gains = (left_sum * left_sum / counts
                         + right_sum * right_sum / (n - counts)
                         - total * total / n)
            valid = (v_sorted[:-1] < v_sorted[1:]) \
                & (counts >= min_leaf) & ((n - counts) >= min_leaf)
            if not valid.any():
                continue
            gains = np.where(valid, gains, -np.inf)
            pos = int(np.argmax(gains))
            gain = float(gains[pos])
            if gain <= gain_floor:
                continue
            if best is None or gain > best[0]:
                thr = (float(v_sorted[pos]) + float(v_sorted[pos + 1])) / 2.0
                best = (gain, f, thr)
        if best is None:
            return None
        gain, f, thr = best
        left_mask = self.X[idx, f] <= thr
        return gain, f, thr, left_mask

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        split = None if depth >= self.params.max_depth else self._best_split(idx)
        if split is None:
            self.value[node] = float(self.z[idx].mean())
            return node
        _, f, thr, left_mask = split
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[left_mask], depth + 1)
        self.right[node] = self.build(idx[~left_mask], depth + 1)
        return node

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def train_gbdt(
    features: np.ndarray,
    labels: np.ndarray,
    label_kind: str,
    params: Hyperparams = Hyperparams(),
) -> GbdtModel:
    """Fit a boosted ensemble to (features, labels)."""
    params.validate()
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != FEATURE_COUNT:
        raise ValidationError(f"features must be (n, {FEATURE_COUNT})")
    if y.shape != (X.shape[0],):
        raise ValidationError("labels must be one value per feature row")
    if X.shape[0] < 2:
        raise ValidationError("training requires at least 2 samples")
    if not np.isfinite(y).all():
        raise ValidationError("labels must be finite")

    base = float(y.mean())
    model = GbdtModel(base_prediction=base, learning_rate=params.learning_rate,
                      label_kind=label_kind, max_depth=params.max_depth)
    current = np.full(y.shape, base)
    all_idx = np.arange(X.shape[0])
    for _ in range(params.trees):
        residual = y - current
        builder = _TreeBuilder(X, residual, params)
        builder.build(all_idx, depth=0)
        tree = builder.finish()
        model.trees.append(tree)
        current = current + params.learning_rate * _tree_apply(tree, X)
        loss = float(np.mean((y - current) ** 2))
        model.train_losses.append(loss)
    return model


def _tree_apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Vectorized root-to-leaf descent for all rows at once."""
    idx = np.zeros(X.shape[0], dtype=np.int32)
    rows = np.arange(X.shape[0])
    while True:
        feat = tree.feature[idx]
        active = feat >= 0
        if not active.any():
            break
        f = feat[active]
        go_left = X[rows[active], f] <= tree.threshold[idx[active]]
        nxt = np.where(go_left, tree.left[idx[active]], tree.right[idx[active]])
        idx[active] = nxt
    return tree.value[idx]


def predict_batch(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    """Predictions for an (n, 14) feature matrix, clamped at zero."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != FEATURE_COUNT:
        raise ValidationError(f"features must be (n, {FEATURE_COUNT})")
    out = np.full(X.shape[0], model.base_prediction)
    for tree in model.trees:
        out = out + model.learning_rate * _tree_apply(tree, X)
    return np.maximum(out, 0.0)


def predict(model: GbdtModel, x: np.ndarray) -> float:
    """Prediction for a single 14-entry feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (FEATURE_COUNT,):
        raise ValidationError(f"feature vector must have {FEATURE_COUNT} entries")
    return float(predict_batch(model, x[None, :])[0])


def save_model(model: GbdtModel) -> str:
    """Serialize to a self-describing JSON document (exact float round trip)."""
    doc = {
        "schema_version": model.schema_version,
        "label_kind": model.label_kind,
        "base_prediction": model.base_prediction,
        "learning_rate": model.learning_rate,
        "max_depth": model.max_depth,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_model(text: str) -> GbdtModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ParseError(
            f"unsupported model schema version {version!r} "
            f"(this build reads version {MODEL_SCHEMA_VERSION})"
        )
    try:
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
        model = GbdtModel(
            base_prediction=float(doc["base_prediction"]),
            learning_rate=float(doc["learning_rate"]),
            label_kind=str(doc["label_kind"]),
            trees=trees,
            max_depth=int(doc.get("max_depth", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    return model
