"""Least-squares regression trees (CART) with exhaustive split search.

Trees are stored as flat node arrays. Node 0 is the root; ``feature[k] == -1``
marks a leaf. Rows go left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, DataError

TREE_FORMAT = "epexforest.tree/1"

_NO_DEPTH_LIMIT = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    threshold: float
    sse_reduction: float
    left_count: int
    right_count: int


@njit(cache=True, nogil=True)
def _node_stats(y, idx, start, end):
    m = end - start
    total = 0.0
    for k in range(start, end):
        total += y[idx[k]]
    mean = total / m
    sse = 0.0
    for k in range(start, end):
        d = y[idx[k]] - mean
        sse += d * d
    return mean, sse


@njit(cache=True, nogil=True)
def _split_node(X, y, idx, start, end, features, mean, parent_sse):
    """Best (feature, threshold) for rows ``idx[start:end]``; feature -1 if none.

    Candidates are scanned by ascending feature then ascending threshold and a
    later candidate must beat the incumbent by a relative margin, so exact ties
    resolve to the lowest feature index and lowest threshold.
    """
    m = end - start
    best_f = -1
    best_t = 0.0
    best_gain = 0.0
    best_nl = 0
    if m < 2 or parent_sse <= 0.0:
        return best_f, best_t, best_gain, best_nl
    tol = 1e-12 * parent_sse
    vals = np.empty(m)
    resid = np.empty(m)
    for k in range(m):
        resid[k] = y[idx[start + k]] - mean
    total = 0.0
    for k in range(m):
        total += resid[k]
    parent_term = total * total / m
    for fi in range(features.size):
        f = features[fi]
        for k in range(m):
            vals[k] = X[idx[start + k], f]
        order = np.argsort(vals, kind="mergesort")
        left_sum = 0.0
        for i in range(m - 1):
            left_sum += resid[order[i]]
            a = vals[order[i]]
            b = vals[order[i + 1]]
            if a < b:
                nl = i + 1
                nr = m - nl
                right_sum = total - left_sum
                gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent_term
                if gain > best_gain + tol:
                    thr = 0.5 * (a + b)
                    if not (a <= thr < b):
                        thr = a
                    best_f = f
                    best_t = thr
                    best_gain = gain
                    best_nl = nl
    return best_f, best_t, best_gain, best_nl


@njit(cache=True, nogil=True)
def _grow(X, y, sample, min_node, mtry, max_depth, seed):
    np.random.seed(seed)
    n = sample.size
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    gain = np.zeros(cap)
    impurity = np.zeros(cap)

    idx = sample.copy()
    scratch = np.empty(n, dtype=np.int64)
    pool = np.arange(p)
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        m = end - start
        mean, sse = _node_stats(y, idx, start, end)
        value[node] = mean
        count[node] = m
        impurity[node] = sse
        if m < min_node or depth >= max_depth or sse <= 0.0:
            continue
        if mtry < p:
            for j in range(mtry):
                r = j + np.random.randint(0, p - j)
                tmp = pool[j]
                pool[j] = pool[r]
                pool[r] = tmp
            candidates = np.sort(pool[:mtry].copy())
        else:
            candidates = np.arange(p)
        f, thr, g, nl = _split_node(X, y, idx, start, end, candidates, mean, sse)
        if f < 0:
            continue
        # stable partition: left rows keep their order, then right rows
        lo = start
        hi = 0
        for k in range(start, end):
            r = idx[k]
            if X[r, f] <= thr:
                idx[lo] = r
                lo += 1
            else:
                scratch[hi] = r
                hi += 1
        for k in range(hi):
            idx[lo + k] = scratch[k]
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # push right first so the left subtree is grown first
        stack_node[sp] = right[node]
        stack_start[sp] = start + nl
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = left[node]
        stack_start[sp] = start
        stack_end[sp] = start + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
        right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy(),
        gain[:n_nodes].copy(), impurity[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _predict(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Fitted tree as parallel node arrays.

    ``gain`` holds each internal node's SSE reduction and ``impurity`` each
    node's training SSE (on the rows the tree was grown on).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    gain: np.ndarray
    impurity: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depths[self.left[k]] = depths[self.right[k]] = depths[k] + 1
        return int(depths.max())

    @property
    def tally(self) -> np.ndarray:
        """Per-feature sum of SSE reductions."""
        internal = ~self.is_leaf
        return np.bincount(
            self.feature[internal], weights=self.gain[internal], minlength=self.n_features
        ).astype(float)

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached by each row."""
        X = _check_X(X, self.n_features)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return _predict(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.n_nodes):
            node = {"id": k, "count": int(self.count[k]), "value": float(self.value[k]),
                    "impurity": float(self.impurity[k])}
            if self.feature[k] >= 0:
                node.update(feature=int(self.feature[k]), threshold=float(self.threshold[k]),
                            gain=float(self.gain[k]), left=int(self.left[k]), right=int(self.right[k]))
            nodes.append(node)
        return {"format": TREE_FORMAT, "n_features": self.n_features, "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        if doc.get("format") != TREE_FORMAT:
            raise DataError(f"unsupported tree format {doc.get('format')!r}")
        nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
        k = len(nodes)
        arr = dict(
            feature=np.full(k, -1, dtype=np.int64), threshold=np.zeros(k),
            left=np.full(k, -1, dtype=np.int64), right=np.full(k, -1, dtype=np.int64),
            value=np.zeros(k), count=np.zeros(k, dtype=np.int64), gain=np.zeros(k), impurity=np.zeros(k),
        )
        for i, nd in enumerate(nodes):
            if nd["id"] != i:
                raise DataError("tree node ids must be 0..k-1")
            arr["value"][i] = nd["value"]
            arr["count"][i] = nd["count"]
            arr["impurity"][i] = nd.get("impurity", 0.0)
            if "feature" in nd:
                for key in ("feature", "threshold", "gain", "left", "right"):
                    arr[key][i] = nd[key]
        return cls(n_features=int(doc["n_features"]), **arr)


def _check_X(X, p=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DataError("X must be a 2-D matrix")
    if p is not None and X.shape[1] != p:
        raise DataError(f"expected {p} features, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise DataError("X contains non-finite values")
    return np.ascontiguousarray(X)


def default_features_per_split(p: int) -> int:
    return max(1, p // 3)


def best_split(X, y, candidate_features=None) -> SplitDecision | None:
    """Exhaustive least-squares split over the candidate features.

    Thresholds are midpoints between consecutive distinct values. Returns None
    when no split lowers the SSE.
    """
    X = _check_X(X)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    if n < 2 or y.shape != (n,):
        raise DataError("best_split needs n >= 2 rows and a matching y")
    features = np.arange(p) if candidate_features is None else np.unique(np.asarray(candidate_features, dtype=np.int64))
    if features.size == 0 or features.min() < 0 or features.max() >= p:
        raise ConfigError(f"candidate features must be within 0..{p - 1}")
    idx = np.arange(n)
    mean, sse = _node_stats(y, idx, 0, n)
    f, thr, g, nl = _split_node(X, y, idx, 0, n, features, mean, sse)
    if f < 0:
        return None
    return SplitDecision(int(f), float(thr), float(g), int(nl), int(n - nl))


def fit_tree(
    X,
    y,
    min_node_size: int = 10,
    features_per_split: int | None = None,
    seed: int = 0,
    max_depth: int | None = None,
    sample=None,
) -> RegressionTree:
    """Grow a regression tree.

    A node with at least ``min_node_size`` rows is split on the best split over
    a fresh random subset of ``features_per_split`` features (all features when
    it equals p). ``sample`` is an optional row-index array (repeats allowed)
    giving the rows the tree is grown on.
    """
    X = _check_X(X)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    if n == 0:
        raise DataError("cannot fit a tree on empty input")
    if y.shape != (n,) or not np.isfinite(y).all():
        raise DataError("y must be a finite vector matching X")
    if min_node_size < 2:
        raise ConfigError("min_node_size must be >= 2")
    mtry = default_features_per_split(p) if features_per_split is None else int(features_per_split)
    if not 1 <= mtry <= p:
        raise ConfigError(f"features_per_split must be in 1..{p}")
    depth = _NO_DEPTH_LIMIT if max_depth is None else int(max_depth)
    if sample is None:
        sample = np.arange(n, dtype=np.int64)
    else:
        sample = np.ascontiguousarray(sample, dtype=np.int64)
        if sample.size == 0 or sample.min() < 0 or sample.max() >= n:
            raise DataError("sample indices out of range")
    arrays = _grow(X, y, sample, int(min_node_size), mtry, depth, int(seed) % (2**32))
    return RegressionTree(*arrays, n_features=p)


def predict_tree(tree: RegressionTree, x) -> float:
    """Prediction for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("predict_tree takes a single feature vector")
    return float(tree.predict(x[None, :])[0])


def save_tree(tree: RegressionTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree.to_dict(), indent=1), encoding="utf-8")


def load_tree(path: str | Path) -> RegressionTree:
    return RegressionTree.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
