"""Random forests with out-of-bag permutation importance.

Trees are CART trees grown on bootstrap samples with a random subset of
candidate features at every split: ``ceil(p/3)`` for regression and
``ceil(sqrt(p))`` for classification. Regression nodes stop splitting at
five rows or fewer, classification nodes at one row, and any pure node is
a leaf. Splits minimise within-node variance or Gini impurity.

The tree builder and predictor are compiled with numba; all trees of a
forest live in padded ``(n_trees, max_nodes)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import DataTypeError, DomainError
from ..linalg import Array

LEAF = -1


@dataclass(frozen=True)
class ForestFit:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    inbag: np.ndarray
    task: str
    classes: Array | None
    n_features: int

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def oob_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(row == 0) for row in self.inbag]

    def predict(self, X) -> Array:
        X = np.ascontiguousarray(X, dtype=float)
        votes = _predict_all(self.feature, self.threshold, self.left, self.right, self.value, X)
        if self.task == "regression":
            return votes.mean(axis=0)
        codes = _majority(votes.astype(np.int64), len(self.classes))
        return self.classes[codes]

    def oob_predict(self, X) -> Array:
        """Out-of-bag prediction for each training row (NaN if always in bag)."""
        X = np.ascontiguousarray(X, dtype=float)
        votes = _predict_all(self.feature, self.threshold, self.left, self.right, self.value, X)
        oob = self.inbag == 0
        if self.task == "regression":
            cnt = oob.sum(axis=0)
            tot = np.where(oob, votes, 0.0).sum(axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)
        k = len(self.classes)
        out = np.full(X.shape[0], np.nan)
        for i in range(X.shape[0]):
            v = votes[oob[:, i], i].astype(np.int64)
            if v.size:
                out[i] = self.classes[np.argmax(np.bincount(v, minlength=k))]
        return out


@njit(cache=True)
def _node_value(y, rows, start, end, is_class, n_classes):
    m = end - start
    if is_class:
        counts = np.zeros(n_classes)
        for a in range(start, end):
            counts[int(y[rows[a]])] += 1.0
        return float(np.argmax(counts))
    acc = 0.0
    for a in range(start, end):
        acc += y[rows[a]]
    return acc / m


@njit(cache=True)
def _is_pure(y, rows, start, end):
    v = y[rows[start]]
    for a in range(start + 1, end):
        if y[rows[a]] != v:
            return False
    return True


@njit(cache=True)
def _grow_tree(X, y, is_class, n_classes, mtry, leaf_rows, seed, feature, threshold,
               left, right, value, inbag):
    np.random.seed(seed)
    n, p = X.shape
    rows = np.empty(n, dtype=np.int64)
    for a in range(n):
        r = np.random.randint(0, n)
        rows[a] = r
        inbag[r] += 1
    feats = np.arange(p)
    stack_node = np.empty(2 * n + 1, dtype=np.int64)
    stack_start = np.empty(2 * n + 1, dtype=np.int64)
    stack_end = np.empty(2 * n + 1, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    sp = 1
    n_nodes = 1
    vals = np.empty(n)
    ys = np.empty(n)
    cl = np.zeros(n_classes)
    cr = np.zeros(n_classes)
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        m = end - start
        if m <= leaf_rows or _is_pure(y, rows, start, end):
            feature[node] = -1
            value[node] = _node_value(y, rows, start, end, is_class, n_classes)
            continue
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        # partial Fisher-Yates for the candidate features
        for k in range(mtry):
            q = k + np.random.randint(0, p - k)
            tmp = feats[k]
            feats[k] = feats[q]
            feats[q] = tmp
        for k in range(mtry):
            f = feats[k]
            for a in range(m):
                vals[a] = X[rows[start + a], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for a in range(m):
                ys[a] = y[rows[start + order[a]]]
            if is_class:
                for c in range(n_classes):
                    cl[c] = 0.0
                    cr[c] = 0.0
                for a in range(m):
                    cr[int(ys[a])] += 1.0
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sr += cr[c] * cr[c]
                for a in range(1, m):
                    c = int(ys[a - 1])
                    sl += 2.0 * cl[c] + 1.0
                    cl[c] += 1.0
                    sr -= 2.0 * cr[c] - 1.0
                    cr[c] -= 1.0
                    lo = vals[order[a - 1]]
                    hi = vals[order[a]]
                    if lo < hi:
                        score = sl / a + sr / (m - a)
                        if score > best_score:
                            best_score = score
                            best_f = f
                            mid = 0.5 * (lo + hi)
                            best_thr = mid if mid < hi else lo
            else:
                total = 0.0
                for a in range(m):
                    total += ys[a]
                suml = 0.0
                for a in range(1, m):
                    suml += ys[a - 1]
                    lo = vals[order[a - 1]]
                    hi = vals[order[a]]
                    if lo < hi:
                        sumr = total - suml
                        score = suml * suml / a + sumr * sumr / (m - a)
                        if score > best_score:
                            best_score = score
                            best_f = f
                            mid = 0.5 * (lo + hi)
                            best_thr = mid if mid < hi else lo
        if best_f < 0:
            feature[node] = -1
            value[node] = _node_value(y, rows, start, end, is_class, n_classes)
            continue
        # partition rows[start:end] on the chosen split
        i = start
        j = end - 1
        while i <= j:
            if X[rows[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_node[sp] = rnode
        stack_start[sp] = i
        stack_end[sp] = end
        sp += 1
        stack_node[sp] = lnode
        stack_start[sp] = start
        stack_end[sp] = i
        sp += 1
    return n_nodes


@njit(cache=True)
def _grow_forest(X, y, is_class, n_classes, mtry, leaf_rows, seeds):
    n = X.shape[0]
    n_trees = seeds.shape[0]
    max_nodes = 2 * n + 1
    feature = np.full((n_trees, max_nodes), -1, dtype=np.int64)
    threshold = np.zeros((n_trees, max_nodes))
    left = np.full((n_trees, max_nodes), -1, dtype=np.int64)
    right = np.full((n_trees, max_nodes), -1, dtype=np.int64)
    value = np.zeros((n_trees, max_nodes))
    inbag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        _grow_tree(X, y, is_class, n_classes, mtry, leaf_rows, seeds[t], feature[t],
                   threshold[t], left[t], right[t], value[t], inbag[t])
    return feature, threshold, left, right, value, inbag


@njit(cache=True)
def _predict_row(feature, threshold, left, right, value, X, i, swap_f, swap_v):
    node = 0
    while feature[node] >= 0:
        f = feature[node]
        x = swap_v if f == swap_f else X[i, f]
        if x <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@njit(cache=True)
def _predict_all(feature, threshold, left, right, value, X):
    n_trees = feature.shape[0]
    n = X.shape[0]
    out = np.empty((n_trees, n))
    for t in range(n_trees):
        for i in range(n):
            out[t, i] = _predict_row(feature[t], threshold[t], left[t], right[t], value[t],
                                     X, i, -1, 0.0)
    return out


@njit(cache=True)
def _majority(votes, k):
    n = votes.shape[1]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        counts = np.zeros(k, dtype=np.int64)
        for t in range(votes.shape[0]):
            counts[votes[t, i]] += 1
        out[i] = np.argmax(counts)
    return out


@njit(cache=True)
def _importance(feature, threshold, left, right, value, inbag, X, y, is_class, features, seed):
    np.random.seed(seed)
    n_trees = feature.shape[0]
    n = X.shape[0]
    nf = features.shape[0]
    imp = np.zeros(nf)
    used = 0
    oob = np.empty(n, dtype=np.int64)
    for t in range(n_trees):
        m = 0
        for i in range(n):
            if inbag[t, i] == 0:
                oob[m] = i
                m += 1
        if m == 0:
            continue
        used += 1
        base = 0.0
        for a in range(m):
            i = oob[a]
            pred = _predict_row(feature[t], threshold[t], left[t], right[t], value[t], X, i, -1, 0.0)
            if is_class:
                base += 1.0 if pred != y[i] else 0.0
            else:
                base += (pred - y[i]) ** 2
        base /= m
        for k in range(nf):
            f = features[k]
            perm = np.random.permutation(m)
            err = 0.0
            for a in range(m):
                i = oob[a]
                v = X[oob[perm[a]], f]
                pred = _predict_row(feature[t], threshold[t], left[t], right[t], value[t], X, i, f, v)
                if is_class:
                    err += 1.0 if pred != y[i] else 0.0
                else:
                    err += (pred - y[i]) ** 2
            imp[k] += err / m - base
    if used > 0:
        imp /= used
    return imp


def _seeds(rng, k):
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.integers(0, 2**31 - 1, size=k, dtype=np.int64)


def _encode(y, task):
    y = np.asarray(y)
    if task == "regression":
        return np.ascontiguousarray(y, dtype=float), None
    if task != "classification":
        raise DomainError(f"unknown task {task!r}")
    yf = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(yf)) or not np.all(yf == np.round(yf)):
        raise DataTypeError("classification needs integer class labels")
    classes, codes = np.unique(yf, return_inverse=True)
    return codes.astype(float).ravel(), classes


def fit_forest(X, y, task: str = "regression", trees: int = 500, rng=None) -> ForestFit:
    """Grow a random forest.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
        Numeric target (regression) or integer labels (classification).
    task : {"regression", "classification"}
    trees : int
    rng : seed or Generator
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n == 0 or p == 0:
        raise DomainError(f"cannot grow a forest on data of shape {X.shape}")
    if trees < 1:
        raise DomainError("need at least one tree")
    codes, classes = _encode(y, task)
    if codes.shape[0] != n:
        raise DomainError("X and y lengths differ")
    is_class = task == "classification"
    mtry = math.ceil(math.sqrt(p)) if is_class else math.ceil(p / 3)
    leaf_rows = 1 if is_class else 5
    n_classes = len(classes) if is_class else 1
    parts = _grow_forest(X, codes, is_class, n_classes, mtry, leaf_rows, _seeds(rng, trees))
    return ForestFit(*parts, task=task, classes=classes, n_features=p)


def forest_importance(fit: ForestFit, X, y, rng=None, features=None) -> Array:
    """Out-of-bag permutation importance (mean decrease in accuracy).

    For each tree, the OOB error with column ``j`` permuted among the OOB
    rows minus the plain OOB error, averaged over trees with a non-empty OOB
    set. Error is MSE for regression and misclassification rate for
    classification. Values may be negative. ``features`` restricts the
    computation to a subset of columns; the result then has one entry per
    requested feature.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if fit.task == "classification":
        codes = np.searchsorted(fit.classes, np.asarray(y, dtype=float)).astype(float)
    else:
        codes = np.ascontiguousarray(y, dtype=float)
    feats = np.arange(fit.n_features) if features is None else np.asarray(features, dtype=np.int64)
    if feats.size == 0:
        return np.zeros(0)
    seed = int(_seeds(rng, 1)[0])
    return _importance(fit.feature, fit.threshold, fit.left, fit.right, fit.value, fit.inbag,
                       X, codes, fit.task == "classification", feats, seed)
