"""CART regression trees, bagged forests, and gradient boosting.

Trees are stored flat (parallel node arrays) so forests serialize into
the model container without custom records.  Split search is vectorized
per node with prefix sums over each sorted feature column.
"""

from __future__ import annotations

import numpy as np

from .model import ClassicalModel, standardize_fit


def _best_split(X: np.ndarray, y: np.ndarray, criterion: str):
    """Best (feature, threshold, score) or None when no split exists.

    'variance' maximizes the SSE reduction; 'friedman' maximizes
    i^2 = n_l*n_r/(n_l+n_r) * (mean_l - mean_r)^2.  Ties keep the first
    feature and the lowest threshold.
    """
    n = y.size
    best_score = -np.inf
    best = None
    for j in range(X.shape[1]):
        xs = X[:, j]
        order = np.argsort(xs, kind="stable")
        xo = xs[order]
        yo = y[order]
        valid = xo[1:] != xo[:-1]
        if not valid.any():
            continue
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        suml = np.cumsum(yo)[:-1]
        total = suml[-1] + yo[-1] if n > 1 else yo.sum()
        sumr = total - suml
        if criterion == "variance":
            score = suml**2 / nl + sumr**2 / nr
        elif criterion == "friedman":
            score = (nl * nr / n) * (suml / nl - sumr / nr) ** 2
        else:
            raise ValueError(f"unknown criterion {criterion!r}")
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        if score[i] > best_score + 1e-15:
            best_score = float(score[i])
            best = (j, 0.5 * (xo[i] + xo[i + 1]), best_score)
    return best


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
    criterion: str = "variance",
):
    """Grow a CART regression tree; returns flat node arrays.

    node_feature[i] is -1 for leaves; node_value[i] is the leaf mean.
    """
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        value[node] = float(yn.mean())
        if (
            idx.size < 2 * min_leaf
            or (max_depth is not None and depth >= max_depth)
            or np.all(yn == yn[0])
        ):
            continue
        split = _best_split(X[idx], yn, criterion)
        if split is None:
            continue
        j, thr, _ = split
        go_left = X[idx, j] <= thr
        if go_left.sum() < min_leaf or (~go_left).sum() < min_leaf:
            continue
        feature[node] = j
        threshold[node] = float(thr)
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], idx[go_left], depth + 1))
        stack.append((right[node], idx[~go_left], depth + 1))

    return {
        "feature": np.array(feature, dtype=np.int32),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int32),
        "right": np.array(right, dtype=np.int32),
        "value": np.array(value, dtype=np.float64),
    }


def tree_predict(nodes: dict, X: np.ndarray) -> np.ndarray:
    idx = np.zeros(X.shape[0], dtype=np.int64)
    feature = nodes["feature"]
    while True:
        feat = feature[idx]
        active = feat >= 0
        if not active.any():
            return nodes["value"][idx]
        x = X[np.arange(X.shape[0]), np.where(active, feat, 0)]
        go_left = x <= nodes["threshold"][idx]
        nxt = np.where(go_left, nodes["left"][idx], nodes["right"][idx])
        idx = np.where(active, nxt, idx)


def _pack_forest(tree_list):
    offsets = np.zeros(len(tree_list) + 1, dtype=np.int32)
    for i, t in enumerate(tree_list):
        offsets[i + 1] = offsets[i] + t["feature"].size
    packed = {
        key: np.concatenate([t[key] for t in tree_list]) for key in tree_list[0]
    }
    packed["offsets"] = offsets
    return packed


def _forest_trees(params: dict):
    offsets = params["offsets"]
    for i in range(offsets.size - 1):
        lo, hi = offsets[i], offsets[i + 1]
        yield {
            "feature": params["feature"][lo:hi],
            "threshold": params["threshold"][lo:hi],
            "left": params["left"][lo:hi] - lo,
            "right": params["right"][lo:hi] - lo,
            "value": params["value"][lo:hi],
        }


def fit_rf(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 300,
    seed: int = 0,
    dimension: str = "",
    names=None,
) -> ClassicalModel:
    """Bagged CART forest: bootstrap per tree, all features per split,
    unlimited depth, min leaf 1, prediction = mean of trees.

    Per-tree RNG streams come from (seed, tree_index) so any build order
    gives the same forest.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    if y.size < 5:
        raise ValueError("need at least 5 samples")
    mu, sd = standardize_fit(X)
    Xs = (X - mu) / sd
    tree_list = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        idx = rng.integers(0, y.size, y.size)
        tree = build_tree(Xs[idx], y[idx], max_depth=None, min_leaf=1, criterion="variance")
        # offsets are applied when packing; store child links locally
        tree_list.append(tree)
    packed = _pack_forest(tree_list)
    # rebase child indices onto the packed arrays
    offsets = packed["offsets"]
    for i in range(len(tree_list)):
        lo, hi = offsets[i], offsets[i + 1]
        for key in ("left", "right"):
            seg = packed[key][lo:hi]
            packed[key][lo:hi] = np.where(seg >= 0, seg + lo, -1)
    packed["n_trees"] = np.array(float(n_trees))
    return ClassicalModel("rf", dimension, names, mu, sd, packed)


def forest_predict(params: dict, Xs: np.ndarray) -> np.ndarray:
    total = np.zeros(Xs.shape[0])
    n = 0
    for tree in _forest_trees(params):
        total += tree_predict(tree, Xs)
        n += 1
    return total / n


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    n_estimators: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    seed: int = 0,
    dimension: str = "",
    names=None,
) -> ClassicalModel:
    """Stage-wise residual fitting with depth-3 Friedman-MSE trees.

    Prediction is ybar + lr * sum(trees).  The seed is accepted for
    interface parity; the fit itself is deterministic (no subsampling).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    if y.size < 5:
        raise ValueError("need at least 5 samples")
    mu, sd = standardize_fit(X)
    Xs = (X - mu) / sd
    base = float(y.mean())
    pred = np.full(y.size, base)
    tree_list = []
    for _ in range(n_estimators):
        residual = y - pred
        tree = build_tree(Xs, residual, max_depth=max_depth, min_leaf=1, criterion="friedman")
        pred = pred + learning_rate * tree_predict(tree, Xs)
        tree_list.append(tree)
    packed = _pack_forest(tree_list)
    offsets = packed["offsets"]
    for i in range(len(tree_list)):
        lo, hi = offsets[i], offsets[i + 1]
        for key in ("left", "right"):
            seg = packed[key][lo:hi]
            packed[key][lo:hi] = np.where(seg >= 0, seg + lo, -1)
    packed["base"] = np.array(base)
    packed["learning_rate"] = np.array(learning_rate)
    return ClassicalModel("gbdt", dimension, names, mu, sd, packed)


def gbdt_predict(params: dict, Xs: np.ndarray) -> np.ndarray:
    out = np.full(Xs.shape[0], float(params["base"]))
    lr = float(params["learning_rate"])
    for tree in _forest_trees(params):
        out += lr * tree_predict(tree, Xs)
    return out
