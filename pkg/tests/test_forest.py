"""Regression-forest fitting, prediction, and partition geometry."""

import numpy as np
import pytest

from fidopt.forest import (
    ForestParams,
    _fit_random_core,
    fit_forest,
    fit_forest_pairs,
)
from fidopt.utils import spawn_rng

EXACT = ForestParams(n_trees=1, min_leaf=1, bootstrap=False, split="exhaustive")


def test_two_points_single_split():
    X = np.array([[0.2, 0.5], [0.8, 0.5]])
    y = np.array([1.0, 3.0])
    forest = fit_forest(X, y, EXACT)
    tree = forest.trees[0]
    assert (tree.feature >= 0).sum() == 1
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(0.5)
    assert forest.predict(X) == pytest.approx(y)


def test_constant_objective_predicts_constant():
    rng = spawn_rng(1)
    X = rng.random((30, 4))
    y = np.full(30, 2.5)
    forest = fit_forest(X, y, ForestParams(n_trees=5, min_leaf=3), seed=3)
    q = rng.random((50, 4))
    mean, var = forest.predict_mean_var(q)
    assert mean == pytest.approx(np.full(50, 2.5))
    assert var == pytest.approx(np.zeros(50), abs=1e-30)


def test_exact_tree_reproduces_training_objectives():
    rng = spawn_rng(2)
    X = rng.random((20, 5))
    y = rng.random(20)
    forest = fit_forest(X, y, EXACT)
    assert np.abs(forest.predict(X) - y).max() < 1e-12


def test_exact_tree_handles_zero_gain_splits():
    # XOR-style targets give no single split any gain; the exhaustive mode
    # must split anyway to reach the exact fit
    X = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    forest = fit_forest(X, y, EXACT)
    assert forest.predict(X) == pytest.approx(y)


def test_fewer_than_two_points_rejected():
    with pytest.raises(ValueError):
        fit_forest(np.array([[0.5]]), np.array([1.0]))


def test_leaf_boxes_partition_unit_cube():
    rng = spawn_rng(5)
    X = rng.random((80, 3))
    y = rng.random(80)
    forest = fit_forest(X, y, ForestParams(n_trees=10, min_leaf=3), seed=9)
    for tree in forest.trees:
        lo, hi, _ = tree.leaf_boxes(3)
        vols = (hi - lo).prod(axis=1)
        assert vols.sum() == pytest.approx(1.0, abs=1e-12)
        assert (vols > 0).all()


def test_forest_deterministic_for_seed():
    rng = spawn_rng(6)
    X = rng.random((60, 4))
    y = rng.random(60)
    a = fit_forest(X, y, ForestParams(n_trees=7, min_leaf=2, max_features=2), seed=42)
    b = fit_forest(X, y, ForestParams(n_trees=7, min_leaf=2, max_features=2), seed=42)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.threshold, tb.threshold)
        assert np.array_equal(ta.value, tb.value)


def test_compiled_and_python_kernels_agree():
    # the randomized fit consumes pre-drawn tables, so both code paths must
    # produce identical trees
    rng = spawn_rng(7)
    n, d, m = 40, 3, 2
    X = np.ascontiguousarray(rng.random((n, d)))
    y = np.ascontiguousarray(rng.random(n))
    cap = 2 * n + 3
    boot = rng.integers(0, n, n, dtype=np.int64)
    sub = rng.integers(0, 2**32, (cap, m), dtype=np.int64)
    thr = rng.random((cap, 10))

    def run(kernel):
        feature = np.empty(cap, np.int64)
        threshold = np.zeros(cap, float)
        left = np.zeros(cap, np.int64)
        right = np.zeros(cap, np.int64)
        value = np.zeros(cap, float)
        count = kernel(X, y, boot, 2, m, sub, thr, feature, threshold, left, right, value)
        return feature[:count], threshold[:count], left[:count], right[:count], value[:count]

    py = run(_fit_random_core)
    from fidopt.forest import _fit_random

    jit = run(_fit_random)
    for pa, ja in zip(py, jit):
        assert np.array_equal(pa, ja)


def test_min_leaf_respected():
    rng = spawn_rng(8)
    X = rng.random((100, 2))
    y = rng.random(100)
    forest = fit_forest(X, y, ForestParams(n_trees=5, min_leaf=7, bootstrap=False), seed=1)
    for tree in forest.trees:
        for node in range(len(tree.feature)):
            if tree.feature[node] < 0:
                lo, hi, _ = tree.leaf_boxes(2)
        lo, hi, _ = tree.leaf_boxes(2)
        counts = [
            ((X >= l) & ((X < h) | (h == 1.0))).all(axis=1).sum() for l, h in zip(lo, hi)
        ]
        assert min(counts) >= 7


def test_pairs_wrapper():
    pairs = [([0.1, 0.2], 1.0), ([0.9, 0.8], 2.0), ([0.5, 0.5], 1.5)]
    forest = fit_forest_pairs(pairs, EXACT)
    assert forest.n_dims == 2


def test_predict_fallback_matches_kernel(monkeypatch):
    import fidopt.forest as forest_mod

    rng = spawn_rng(12)
    X = rng.random((70, 5))
    y = rng.random(70)
    forest = fit_forest(X, y, ForestParams(n_trees=4, min_leaf=2), seed=3)
    q = rng.random((30, 5))
    fast = forest.predict(q)
    monkeypatch.setattr(forest_mod, "_predict", None)
    slow = forest.predict(q)
    assert np.array_equal(fast, slow)
