"""From-scratch classifiers: a CART random forest and multinomial logistic
regression, with the introspection hooks (split-count feature importance,
top-level split features) used by the experiment reports.

Determinism contract: (data, params, seed) fully determines every model.
Per-tree random streams are derived from (seed, tree index), so trees can
be trained in any order or concurrently without changing the result. All
ties break toward the smallest code: first feature index / smallest
threshold at splits, smallest class code at leaves, votes, and argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset


# -- decision trees ---------------------------------------------------------------


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/left/right) or leaf (class_counts)."""

    depth: int
    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class_counts: dict[int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None

    def majority(self) -> int:
        # smallest class code wins count ties
        return min(self.class_counts, key=lambda c: (-self.class_counts[c], c))


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 5
    max_depth: int = 15
    mtry: int | str = "auto"  # "auto" = ceil(sqrt(n_features))
    seed: int = 0
    min_samples_split: int = 2
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.mtry != "auto" and (not isinstance(self.mtry, int) or self.mtry < 1):
            raise ValueError("mtry must be 'auto' or a positive integer")

    def resolve_mtry(self, n_features: int) -> int:
        if self.mtry == "auto":
            return math.ceil(math.sqrt(n_features))
        if self.mtry > n_features:
            raise ValueError(f"mtry={self.mtry} exceeds feature count {n_features}")
        return self.mtry


def gini(counts: np.ndarray) -> float:
    """Gini impurity of a class-count vector."""
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def _best_threshold(v: np.ndarray, y: np.ndarray, k: int) -> tuple[float, float] | None:
    """Best midpoint threshold for one feature, or None if v is constant.

    Returns (score, threshold) where score = sum over both sides of
    (sum of squared class counts) / side size — maximizing it minimizes
    the weighted Gini impurity. np.argmax takes the first maximum, so
    equal-scoring thresholds resolve to the smallest one.
    """
    vals, inv = np.unique(v, return_inverse=True)
    if len(vals) < 2:
        return None
    table = np.zeros((len(vals), k))
    np.add.at(table, (inv, y), 1.0)
    cum = np.cumsum(table, axis=0)
    left = cum[:-1]
    right = cum[-1] - left
    nl = left.sum(axis=1)
    nr = right.sum(axis=1)
    score = (left * left).sum(axis=1) / nl + (right * right).sum(axis=1) / nr
    b = int(np.argmax(score))
    return float(score[b]), float((vals[b] + vals[b + 1]) / 2.0)


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
    n_classes: int | None = None,
) -> TreeNode:
    """Grow one CART tree with Gini splits.

    At every split, mtry features are drawn without replacement from rng
    and scanned in ascending index order; a split is kept whenever any
    candidate threshold exists, even at zero impurity gain (deeper levels
    may still separate the classes). Recursion stops at purity, max_depth,
    min_samples_split, or when every drawn feature is constant.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train a tree on an empty sample set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    mtry = params.resolve_mtry(X.shape[1])

    def counts_dict(idx: np.ndarray) -> dict[int, int]:
        binned = np.bincount(y[idx], minlength=n_classes)
        return {int(c): int(binned[c]) for c in np.nonzero(binned)[0]}

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        classes = np.unique(y[idx])
        if len(classes) == 1 or depth >= params.max_depth or len(idx) < params.min_samples_split:
            return TreeNode(depth=depth, class_counts=counts_dict(idx))
        y_local = np.searchsorted(classes, y[idx])
        chosen = rng.choice(X.shape[1], size=mtry, replace=False)
        best: tuple[float, int, float] | None = None
        for f in sorted(int(f) for f in chosen):
            found = _best_threshold(X[idx, f], y_local, len(classes))
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], f, found[1])
        if best is None:
            return TreeNode(depth=depth, class_counts=counts_dict(idx))
        _, f, thr = best
        go_left = X[idx, f] <= thr
        return TreeNode(
            depth=depth,
            feature_index=f,
            threshold=thr,
            left=grow(idx[go_left], depth + 1),
            right=grow(idx[~go_left], depth + 1),
        )

    return grow(np.arange(len(X)), 0)


def _tree_predict(node: TreeNode, X: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.majority()
        return
    go_left = X[idx, node.feature_index] <= node.threshold
    if go_left.any():
        _tree_predict(node.left, X, out, idx[go_left])
    if not go_left.all():
        _tree_predict(node.right, X, out, idx[~go_left])


@dataclass
class RandomForestModel:
    trees: list[TreeNode]
    params: ForestParams
    n_classes: int
    feature_names: tuple[str, ...]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority vote over trees; vote ties go to the smallest class code."""
        X = np.asarray(X, dtype=float).reshape(-1, len(self.feature_names))
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        pred = np.empty(len(X), dtype=np.int64)
        idx = np.arange(len(X))
        for tree in self.trees:
            _tree_predict(tree, X, pred, idx)
            votes[idx, pred] += 1
        return np.argmax(votes, axis=1)

    def predict_one(self, features: Sequence[float]) -> int:
        features = np.asarray(features, dtype=float)
        if features.shape != (len(self.feature_names),):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {features.shape}"
            )
        return int(self.predict(features[None, :])[0])


def rf_train(train: Dataset, params: ForestParams = ForestParams()) -> RandomForestModel:
    """Train a forest; each tree gets its own stream seeded (seed, tree index)
    and, by default, a bootstrap resample of size n drawn from that stream."""
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = train.X(), train.y()
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        if params.bootstrap:
            rows = rng.integers(0, len(X), size=len(X))
        else:
            rows = np.arange(len(X))
        trees.append(train_tree(X[rows], y[rows], params, rng, n_classes=train.n_classes))
    return RandomForestModel(trees, params, train.n_classes, tuple(train.feature_names))


def rf_predict(model: RandomForestModel, features: Sequence[float]) -> int:
    return model.predict_one(features)


def _walk_nodes(node: TreeNode):
    yield node
    if not node.is_leaf:
        yield from _walk_nodes(node.left)
        yield from _walk_nodes(node.right)


def feature_importance_fscore(model: RandomForestModel) -> dict[str, int]:
    """Number of internal split nodes per feature, summed over all trees."""
    counts = {name: 0 for name in model.feature_names}
    for tree in model.trees:
        for node in _walk_nodes(tree):
            if not node.is_leaf:
                counts[model.feature_names[node.feature_index]] += 1
    return counts


def top_nodes(model: RandomForestModel, levels: int) -> list[list[str]]:
    """Per tree, the split features at depth < levels, in preorder."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = []
    for tree in model.trees:
        feats = [
            model.feature_names[n.feature_index]
            for n in _walk_nodes(tree)
            if not n.is_leaf and n.depth < levels
        ]
        out.append(feats)
    return out


# -- tree (de)serialization --------------------------------------------------------


def tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"depth": node.depth, "class_counts": {str(k): v for k, v in node.class_counts.items()}}
    return {
        "depth": node.depth,
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": tree_to_dict(node.left),
        "right": tree_to_dict(node.right),
    }


def tree_from_dict(doc: Mapping) -> TreeNode:
    if "class_counts" in doc:
        return TreeNode(
            depth=int(doc["depth"]),
            class_counts={int(k): int(v) for k, v in doc["class_counts"].items()},
        )
    return TreeNode(
        depth=int(doc["depth"]),
        feature_index=int(doc["feature_index"]),
        threshold=float(doc["threshold"]),
        left=tree_from_dict(doc["left"]),
        right=tree_from_dict(doc["right"]),
    )


# -- multinomial logistic regression ------------------------------------------------


@dataclass(frozen=True)
class MLRConfig:
    learning_rate: float = 0.1
    max_iters: int = 2000
    l2: float = 1e-4
    seed: int = 0  # kept for interface symmetry; training is deterministic
    tol: float = 1e-10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


@dataclass
class LogisticModel:
    """Softmax classifier; weights are (n_classes, n_features + 1), bias col 0."""

    weights: np.ndarray
    feature_names: tuple[str, ...]
    training_log: dict

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, len(self.feature_names))
        return _softmax(_augment(X) @ self.weights.T)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def predict_one(self, features: Sequence[float]) -> int:
        features = np.asarray(features, dtype=float)
        if features.shape != (len(self.feature_names),):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {features.shape}"
            )
        return int(self.predict(features[None, :])[0])


def _penalized_objective(W: np.ndarray, X1: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean log-likelihood minus the L2 penalty on non-bias weights."""
    logits = X1 @ W.T
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    ll = float((z[np.arange(len(y)), y] - log_norm).mean())
    return ll - 0.5 * l2 * float((W[:, 1:] ** 2).sum())


def mlr_gradient(W: np.ndarray, X1: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Gradient of the penalized mean log-likelihood (ascent direction)."""
    P = _softmax(X1 @ W.T)
    Y = np.zeros_like(P)
    Y[np.arange(len(y)), y] = 1.0
    G = (Y - P).T @ X1 / len(y)
    G[:, 1:] -= l2 * W[:, 1:]
    return G


def mlr_train(train: Dataset, config: MLRConfig = MLRConfig()) -> LogisticModel:
    """Full-batch gradient ascent from zero weights with step halving.

    A step is only accepted when the penalized objective does not
    decrease, so the recorded objective trace is monotone even on
    raw-scale integer features.
    """
    X, y = train.X(), train.y()
    if train.n_classes < 2:
        raise ValueError("need at least 2 classes to fit a logistic model")
    X1 = _augment(X)
    K = train.n_classes
    W = np.zeros((K, X1.shape[1]))
    trace = [_penalized_objective(W, X1, y, config.l2)]
    iterations = 0
    for _ in range(config.max_iters):
        G = mlr_gradient(W, X1, y, config.l2)
        step = config.learning_rate
        while True:
            cand = W + step * G
            obj = _penalized_objective(cand, X1, y, config.l2)
            if math.isfinite(obj) and obj >= trace[-1]:
                break
            step /= 2.0
            if step < 1e-15:
                if not math.isfinite(obj):
                    raise RuntimeError(
                        "logistic training diverged: objective became non-finite"
                    )
                cand, obj = W, trace[-1]  # no ascent possible; stationary
                break
        W = cand
        iterations += 1
        trace.append(obj)
        if abs(trace[-1] - trace[-2]) < config.tol:
            break
    log = {
        "iterations": iterations,
        "final_log_likelihood": trace[-1],
        "objective_trace": trace,
        "config": {
            "learning_rate": config.learning_rate,
            "max_iters": config.max_iters,
            "l2": config.l2,
            "seed": config.seed,
        },
    }
    return LogisticModel(W, tuple(train.feature_names), log)


def mlr_predict(model: LogisticModel, features: Sequence[float]) -> int:
    return model.predict_one(features)


def mcfadden_pseudo_r2(model: LogisticModel, data: Dataset) -> float:
    """1 - LL(model)/LL(intercept-only), the McFadden pseudo R-squared."""
    X, y = data.X(), data.y()
    counts = np.bincount(y, minlength=model.n_classes)
    present = counts[counts > 0]
    if len(present) < 2:
        raise ValueError("pseudo R-squared is undefined on single-class data")
    ll_null = float((present * np.log(present / len(y))).sum())
    proba = model.predict_proba(X)
    ll_model = float(np.log(np.clip(proba[np.arange(len(y)), y], 1e-300, None)).sum())
    return 1.0 - ll_model / ll_null
