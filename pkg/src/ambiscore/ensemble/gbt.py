"""Least-squares gradient boosting over depth-limited regression trees."""

from __future__ import annotations

import numpy as np

from .. import kernels


def build_tree(X: np.ndarray, r: np.ndarray, max_depth: int, min_leaf: int,
               best_split=None) -> tuple[dict, np.ndarray]:
    """Fit one regression tree to residuals ``r``.

    Returns the tree as flat node lists and the fitted value of every row.
    Leaves carry ``feature == -1``; rows with ``x <= threshold`` go left.
    """
    best_split = best_split or kernels.best_split
    m = X.shape[0]
    min_gain = 1e-12 * max(1.0, float(np.dot(r, r)))
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    fitted = np.empty(m)

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(m), 0)]
    while stack:
        node, rows, depth = stack.pop()
        rr = r[rows]
        value[node] = float(rr.mean())
        if depth >= max_depth or rows.shape[0] < 2 * min_leaf:
            fitted[rows] = value[node]
            continue
        f, thr, _gain = best_split(np.ascontiguousarray(X[rows]), np.ascontiguousarray(rr),
                                   int(min_leaf), float(min_gain))
        if f < 0:
            fitted[rows] = value[node]
            continue
        go_left = X[rows, f] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = int(f), float(thr)
        left[node], right[node] = lnode, rnode
        # push right first so the left subtree gets the smaller node ids
        stack.append((rnode, rows[~go_left], depth + 1))
        stack.append((lnode, rows[go_left], depth + 1))
    tree = {"feature": feature, "threshold": threshold, "left": left, "right": right, "value": value}
    return tree, fitted


def fit_gbt_params(X: np.ndarray, y: np.ndarray, n_trees: int = 100, max_depth: int = 3,
                   learning_rate: float = 0.1, min_leaf: int = 5, seed: int = 0,
                   backend: str | None = None) -> dict:
    if n_trees < 1:
        raise ValueError("need at least one tree")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    split = kernels.IMPLEMENTATIONS[backend]["best_split"] if backend else None
    init = float(y.mean())
    F = np.full(y.shape[0], init)
    trees = []
    train_mse = [float(np.mean((y - F) ** 2))]
    for _ in range(n_trees):
        tree, fitted = build_tree(X, y - F, max_depth, min_leaf, split)
        F = F + learning_rate * fitted
        trees.append(tree)
        train_mse.append(float(np.mean((y - F) ** 2)))
    return {
        "init": init,
        "learning_rate": float(learning_rate),
        "n_trees": int(n_trees),
        "max_depth": int(max_depth),
        "min_leaf": int(min_leaf),
        "seed": int(seed),
        "trees": trees,
        "train_mse": train_mse,
    }


def flatten_forest(params: dict, n_trees: int | None = None):
    trees = params["trees"][:n_trees] if n_trees else params["trees"]
    lr = params["learning_rate"]
    roots, feature, threshold, left, right, value = [], [], [], [], [], []
    for t in trees:
        off = len(feature)
        roots.append(off)
        feature.extend(t["feature"])
        threshold.extend(t["threshold"])
        left.extend(c + off if c >= 0 else -1 for c in t["left"])
        right.extend(c + off if c >= 0 else -1 for c in t["right"])
        value.extend(v * lr for v in t["value"])
    return (np.asarray(roots, dtype=np.int64), np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=np.float64), np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64), np.asarray(value, dtype=np.float64))


def gbt_predict(params: dict, X: np.ndarray, n_trees: int | None = None, backend: str | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    predict = kernels.IMPLEMENTATIONS[backend]["predict_forest"] if backend else kernels.predict_forest
    return params["init"] + predict(X, *flatten_forest(params, n_trees))
