"""Axis-aligned regression forests over the unit cube.

One forest serves two masters: the model-based optimizer uses its mean and
across-tree variance as a surrogate, and the importance analyzer walks its
leaf partitions to integrate marginals exactly. Trees are grown either with
randomized splits (dimension drawn from a random subset, threshold uniform in
the node's observed interval) or with exhaustive least-squares splits; the
exhaustive single-tree mode reproduces every training objective exactly and
backs the analyzer's oracle tests.

Tree growth consumes pre-drawn random tables indexed by node id, so fitting
is bit-identical whether trees are built serially or in parallel and whether
the compiled or the pure-Python kernel runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .utils import spawn_rng

try:  # compiled kernel is optional; the pure-Python path is identical
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    _HAVE_NUMBA = False

_SPLIT_ATTEMPTS = 10
_SALT_FOREST = 0xF0E7


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 30
    min_leaf: int = 3
    bootstrap: bool = True
    max_features: int | None = None  # dims drawn per split; None means all
    split: str = "random"  # "random" | "exhaustive"


def _fit_random_core(X, y, boot, min_leaf, m, sub_ints, thr_unif,
                     feature, threshold, left, right, value):
    """Grow one randomized tree; returns the node count.

    ``sub_ints[node, j]`` and ``thr_unif[node, a]`` are pre-drawn random
    tables; consumption is addressed by node id, never sequential, which keeps
    the result independent of evaluation order. Written in scalar loops so the
    same source compiles under numba and runs unmodified without it.
    """
    n = boot.shape[0]
    d = X.shape[1]
    attempts = thr_unif.shape[1]
    idx = np.empty(n, np.int64)
    for i in range(n):
        idx[i] = boot[i]
    buf = np.empty(n, np.int64)
    perm = np.empty(d, np.int64)
    cap = feature.shape[0]
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    sp = 1
    node_count = 1
    while sp > 0:
        sp -= 1
        nd = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        nsub = hi - lo
        did_split = False
        if nsub >= 2 * min_leaf:
            y0 = y[idx[lo]]
            constant = True
            for i in range(lo + 1, hi):
                if y[idx[i]] != y0:
                    constant = False
                    break
            if not constant:
                for j in range(d):
                    perm[j] = j
                for j in range(m):
                    r = j + sub_ints[nd, j] % (d - j)
                    tmp = perm[j]
                    perm[j] = perm[r]
                    perm[r] = tmp
                for a in range(attempts):
                    dim = perm[a % m]
                    lo_v = X[idx[lo], dim]
                    hi_v = lo_v
                    for i in range(lo + 1, hi):
                        v = X[idx[i], dim]
                        if v < lo_v:
                            lo_v = v
                        elif v > hi_v:
                            hi_v = v
                    if hi_v <= lo_v:
                        continue
                    t = lo_v + thr_unif[nd, a] * (hi_v - lo_v)
                    if t <= lo_v or t >= hi_v:
                        continue
                    nl = 0
                    for i in range(lo, hi):
                        if X[idx[i], dim] < t:
                            nl += 1
                    if nl < min_leaf or nsub - nl < min_leaf:
                        continue
                    k = 0
                    kk = nl
                    for i in range(lo, hi):
                        if X[idx[i], dim] < t:
                            buf[k] = idx[i]
                            k += 1
                        else:
                            buf[kk] = idx[i]
                            kk += 1
                    for i in range(nsub):
                        idx[lo + i] = buf[i]
                    lid = node_count
                    rid = node_count + 1
                    node_count += 2
                    feature[nd] = dim
                    threshold[nd] = t
                    left[nd] = lid
                    right[nd] = rid
                    st_node[sp] = rid
                    st_lo[sp] = lo + nl
                    st_hi[sp] = hi
                    sp += 1
                    st_node[sp] = lid
                    st_lo[sp] = lo
                    st_hi[sp] = lo + nl
                    sp += 1
                    did_split = True
                    break
        if not did_split:
            s = 0.0
            for i in range(lo, hi):
                s += y[idx[i]]
            feature[nd] = -1
            value[nd] = s / nsub
    return node_count


def _predict_core(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


if _HAVE_NUMBA:
    _fit_random = njit(cache=True)(_fit_random_core)
    _predict = njit(cache=True)(_predict_core)
else:  # pragma: no cover - depends on environment
    _fit_random = _fit_random_core
    _predict = None


@dataclass
class Tree:
    """Flat-array binary partition tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._predict_prepared(np.ascontiguousarray(np.atleast_2d(X), dtype=float))

    def _predict_prepared(self, X: np.ndarray) -> np.ndarray:
        if _predict is not None:
            out = np.empty(X.shape[0])
            _predict(X, self.feature, self.threshold, self.left, self.right, self.value, out)
            return out
        # pure-numpy descent: advance every query one level per pass
        cur = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[cur]
            live = np.nonzero(f >= 0)[0]
            if live.size == 0:
                break
            nodes = cur[live]
            xv = X[live, f[live]]
            goes_left = xv < self.threshold[nodes]
            cur[live] = np.where(goes_left, self.left[nodes], self.right[nodes])
        return self.value[cur]

    def leaf_boxes(self, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All leaves as (lo, hi, prediction); boxes tile the unit cube."""
        los: list[np.ndarray] = []
        his: list[np.ndarray] = []
        vals: list[float] = []
        stack = [(0, np.zeros(d), np.ones(d))]
        while stack:
            node, lo, hi = stack.pop()
            f = int(self.feature[node])
            if f < 0:
                los.append(lo)
                his.append(hi)
                vals.append(float(self.value[node]))
                continue
            t = float(self.threshold[node])
            lhi = hi.copy()
            lhi[f] = t
            rlo = lo.copy()
            rlo[f] = t
            stack.append((int(self.right[node]), rlo, hi))
            stack.append((int(self.left[node]), lo, lhi))
        return np.array(los), np.array(his), np.array(vals)

    def split_thresholds(self, d: int) -> list[np.ndarray]:
        """Sorted unique split thresholds per dimension."""
        out: list[np.ndarray] = []
        internal = self.feature >= 0
        for dim in range(d):
            out.append(np.unique(self.threshold[internal & (self.feature == dim)]))
        return out


@dataclass
class RegressionForest:
    trees: list[Tree]
    n_dims: int
    params: ForestParams = field(default_factory=ForestParams)

    def predict_mean_var(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forest mean and across-tree variance (the surrogate's std**2)."""
        Xc = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        preds = np.stack([t._predict_prepared(Xc) for t in self.trees])
        return preds.mean(axis=0), preds.var(axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_mean_var(X)[0]


def _fit_exhaustive_tree(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Tree:
    """Best-split CART by squared error; splits proceed (even at zero gain)
    until nodes are pure or too small, so min_leaf=1 fits training points
    exactly whenever no two identical inputs disagree on the objective."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def best_split(rows: np.ndarray) -> tuple[int, float] | None:
        n = rows.size
        best: tuple[float, int, float] | None = None
        for dim in range(X.shape[1]):
            col = X[rows, dim]
            order = np.argsort(col, kind="stable")
            cs = col[order]
            ys = y[rows][order]
            cy = np.cumsum(ys)
            cy2 = np.cumsum(ys * ys)
            ks = np.arange(1, n)
            valid = (cs[1:] > cs[:-1]) & (ks >= min_leaf) & (n - ks >= min_leaf)
            if not valid.any():
                continue
            kv = ks[valid]
            sl = cy[kv - 1]
            sl2 = cy2[kv - 1]
            sr = cy[-1] - sl
            sr2 = cy2[-1] - sl2
            sse = (sl2 - sl * sl / kv) + (sr2 - sr * sr / (n - kv))
            j = int(np.argmin(sse))
            cand = (float(sse[j]), dim, float(0.5 * (cs[kv[j] - 1] + cs[kv[j]])))
            if best is None or cand[0] < best[0]:
                best = cand
        if best is None:
            return None
        return best[1], best[2]

    def grow(rows: np.ndarray) -> int:
        node = new_node()
        ys = y[rows]
        if rows.size < 2 * min_leaf or np.all(ys == ys[0]):
            value[node] = float(ys.mean())
            return node
        found = best_split(rows)
        if found is None:
            value[node] = float(ys.mean())
            return node
        dim, thr = found
        mask = X[rows, dim] < thr
        feature[node] = dim
        threshold[node] = thr
        left[node] = grow(rows[mask])
        right[node] = grow(rows[~mask])
        return node

    grow(np.arange(X.shape[0]))
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams = ForestParams(),
               seed: int = 0) -> RegressionForest:
    """Fit a forest on unit-cube points.

    The same ``seed`` always produces the same forest; each tree consumes its
    own pre-drawn slice of randomness.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 points to fit a forest, got {n}")
    if y.shape[0] != n:
        raise ValueError("X and y disagree on the number of points")

    if params.split == "exhaustive":
        trees = [_fit_exhaustive_tree(X, y, params.min_leaf) for _ in range(params.n_trees)]
        return RegressionForest(trees, d, params)
    if params.split != "random":
        raise ValueError(f"unknown split mode {params.split!r}")

    m = min(params.max_features or d, d)
    cap = 2 * math.ceil(n / max(params.min_leaf, 1)) + 3
    rng = spawn_rng(seed, _SALT_FOREST)
    T = params.n_trees
    if params.bootstrap:
        boots = rng.integers(0, n, size=(T, n), dtype=np.int64)
    else:
        boots = np.tile(np.arange(n, dtype=np.int64), (T, 1))
    sub_ints = rng.integers(0, 2**32, size=(T, cap, m), dtype=np.int64)
    thr_unif = rng.random(size=(T, cap, _SPLIT_ATTEMPTS))

    trees: list[Tree] = []
    for t in range(T):
        feature = np.empty(cap, np.int64)
        threshold = np.zeros(cap, float)
        left = np.zeros(cap, np.int64)
        right = np.zeros(cap, np.int64)
        value = np.zeros(cap, float)
        count = _fit_random(X, y, boots[t], params.min_leaf, m, sub_ints[t], thr_unif[t],
                            feature, threshold, left, right, value)
        trees.append(
            Tree(
                feature=feature[:count].copy(),
                threshold=threshold[:count].copy(),
                left=left[:count].copy(),
                right=right[:count].copy(),
                value=value[:count].copy(),
            )
        )
    return RegressionForest(trees, d, params)


def fit_forest_pairs(points, params: ForestParams = ForestParams(), seed: int = 0) -> RegressionForest:
    """Convenience wrapper for (unit-vector, objective) pair sequences."""
    X = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    return fit_forest(X, y, params, seed)
