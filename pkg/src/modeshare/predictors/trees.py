"""CART regression trees, random forests and squared-loss gradient boosting.

Each travel mode is regressed independently. Split gains are compared
strictly, scanning features in ascending index and thresholds in ascending
order, so ties resolve to the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .. import _random
from ..errors import NumericalError, UsageError


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], dtype=np.float64))


@numba.njit(cache=True, nogil=True)
def _predict_tree(feature, threshold, left, right, value, X):
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


@numba.njit(cache=True, nogil=True)
def _grow(X, y, samples, max_depth, min_leaf, n_try, state, feature, threshold, left, right, value):
    """Grow one tree over ``samples`` (row indices, repeats allowed); returns node count."""
    n = samples.shape[0]
    d = X.shape[1]
    order = samples.copy()
    feats = np.arange(d)
    chosen = np.empty(d, dtype=np.int64)
    xs = np.empty(n)
    ys = np.empty(n)
    # stack of (node, lo, hi, depth)
    stack = np.empty((2 * n + 2, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    count = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        depth = stack[top, 3]
        m = hi - lo
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(lo, hi):
            yi = y[order[i]]
            total += yi
            ymin = min(ymin, yi)
            ymax = max(ymax, yi)
        # clamp away summation round-off so leaves stay inside the sample range
        value[node] = min(max(total / m, ymin), ymax)
        feature[node] = -1
        left[node] = -1
        right[node] = -1
        threshold[node] = 0.0
        if (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf or ymin == ymax or d == 0:
            continue
        # candidate features: partial Fisher-Yates, then ascending order
        k = d if n_try >= d else n_try
        if k < d:
            for i in range(d):
                feats[i] = i
            for i in range(k):
                j = i + int(_random.next_double(state) * (d - i))
                if j >= d:
                    j = d - 1
                t = feats[i]
                feats[i] = feats[j]
                feats[j] = t
            chosen[:k] = np.sort(feats[:k])
        else:
            for i in range(d):
                chosen[i] = i
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for c in range(k):
            f = chosen[c]
            for i in range(m):
                xs[i] = X[order[lo + i], f]
            perm = np.argsort(xs[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[order[lo + perm[i]]]
            left_sum = 0.0
            for i in range(m - 1):
                left_sum += ys[i]
                nl = i + 1
                nr = m - nl
                a = xs[perm[i]]
                b = xs[perm[i + 1]]
                if a == b or nl < min_leaf or nr < min_leaf:
                    continue
                ml = left_sum / nl
                mr = (total - left_sum) / nr
                gain = nl * nr / m * (ml - mr) * (ml - mr)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr
        if best_f < 0:
            continue
        # partition order[lo:hi] by the chosen split
        i = lo
        j = hi - 1
        while i <= j:
            if X[order[i], best_f] <= best_thr:
                i += 1
            else:
                t = order[i]
                order[i] = order[j]
                order[j] = t
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = count
        right[node] = count + 1
        stack[top, 0] = count + 1
        stack[top, 1] = i
        stack[top, 2] = hi
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = count
        stack[top, 1] = lo
        stack[top, 2] = i
        stack[top, 3] = depth + 1
        top += 1
        count += 2
    return count


def fit_tree(X, y, samples=None, max_depth=None, min_leaf=1, features_per_split=None, seed=0) -> Tree:
    """CART regression tree maximizing variance reduction.

    ``max_depth=None`` grows until leaves are pure or smaller than ``2 * min_leaf``;
    ``features_per_split=None`` tries every feature at each split.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise UsageError("X must be (n, d) with n matching y")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise NumericalError("tree inputs must be finite")
    if min_leaf < 1:
        raise UsageError("min_leaf must be >= 1")
    samples = np.arange(len(y)) if samples is None else np.asarray(samples, dtype=np.int64)
    if samples.size == 0:
        raise UsageError("cannot fit a tree on zero samples")
    d = X.shape[1]
    n_try = d if features_per_split is None else int(features_per_split)
    if n_try < 1 and d > 0:
        raise UsageError("features_per_split must be >= 1")
    cap = 2 * samples.size + 1
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    state = np.array([_random.to_seed(seed)], dtype=np.uint64)
    depth = -1 if max_depth is None else int(max_depth)
    count = _grow(X, y, samples, depth, int(min_leaf), n_try, state, feature, threshold, left, right, value)
    return Tree(feature[:count].copy(), threshold[:count].copy(), left[:count].copy(),
                right[:count].copy(), value[:count].copy())


@dataclass
class TreeEnsembleModel:
    kind: str  # "random_forest" | "gradient_boost"
    params: dict
    trees: list  # per mode: list[Tree]
    init: list = field(default_factory=list)  # per-mode base value (boosting)
    loss_history: list = field(default_factory=list)  # per mode, boosting training MSE by round

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        cols = []
        for m, trees in enumerate(self.trees):
            if self.kind == "random_forest":
                per_tree = np.array([t.predict(X) for t in trees])
                cols.append(np.clip(per_tree.mean(axis=0), per_tree.min(axis=0), per_tree.max(axis=0)))
            else:
                f = np.full(X.shape[0], self.init[m])
                for t in trees:
                    f = f + self.params["shrinkage"] * t.predict(X)
                cols.append(f)
        return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


FOREST_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_leaf": 1, "features_per_split": None,
                   "bootstrap": True, "seed": 0}
BOOST_DEFAULTS = {"n_rounds": 100, "shrinkage": 0.1, "max_depth": 3, "min_leaf": 1}


def forest_fit(X, Y, params=None) -> TreeEnsembleModel:
    """Per-mode forests of bootstrap CART trees trying ``ceil(sqrt(d))`` features per split."""
    p = {**FOREST_DEFAULTS, **(params or {})}
    if p["n_trees"] < 1:
        raise UsageError("n_trees must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    n, d = X.shape
    n_try = p["features_per_split"] or max(1, math.ceil(math.sqrt(d)))
    per_mode = []
    for m in range(Y.shape[1]):
        trees = []
        for t in range(p["n_trees"]):
            seed = _random.spawn(p["seed"], m, t)
            if p["bootstrap"]:
                samples = np.random.default_rng(seed).integers(0, n, size=n)
            else:
                samples = np.arange(n)
            trees.append(fit_tree(X, Y[:, m], samples, p["max_depth"], p["min_leaf"], n_try, seed))
        per_mode.append(trees)
    return TreeEnsembleModel("random_forest", p, per_mode)


def forest_predict(model: TreeEnsembleModel, X) -> np.ndarray:
    return model.predict(X)


def gboost_fit(X, Y, params=None) -> TreeEnsembleModel:
    """Stagewise squared-loss boosting starting from the per-mode target mean."""
    p = {**BOOST_DEFAULTS, **(params or {})}
    if p["n_rounds"] < 1:
        raise UsageError("n_rounds must be >= 1")
    if not 0 < p["shrinkage"] <= 1:
        raise UsageError("shrinkage must be in (0, 1]")
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    per_mode, init, history = [], [], []
    for m in range(Y.shape[1]):
        y = Y[:, m]
        f0 = float(y.mean())
        F = np.full(len(y), f0)
        trees, losses = [], [float(np.mean((y - F) ** 2))]
        for _ in range(p["n_rounds"]):
            tree = fit_tree(X, y - F, None, p["max_depth"], p["min_leaf"], None, 0)
            F = F + p["shrinkage"] * tree.predict(X)
            trees.append(tree)
            losses.append(float(np.mean((y - F) ** 2)))
        per_mode.append(trees)
        init.append(f0)
        history.append(losses)
    return TreeEnsembleModel("gradient_boost", p, per_mode, init, history)


def gboost_predict(model: TreeEnsembleModel, X) -> np.ndarray:
    return model.predict(X)
