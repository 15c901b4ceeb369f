"""Variance-based hyperparameter importance.

Decomposes a forest's output variance into contributions of parameter
subsets, computed exactly by integrating over each tree's leaf partition
under the uniform measure on the unit cube. A direct full-factorial
decomposition over discrete grids serves as the independent oracle.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .forest import ForestParams, RegressionForest, Tree, fit_forest
from .space import SearchSpace, encode_batch

#: Trees whose total variance falls below this are treated as constant and
#: contribute zero to every fraction.
ZERO_VARIANCE_EPS = 1e-12

DEFAULT_ANALYSIS_FOREST = ForestParams(n_trees=30, min_leaf=3, bootstrap=True, split="random")


@dataclass(frozen=True)
class ImportanceReport:
    """Subsets of parameter names with their share of explained variance."""

    entries: tuple[tuple[tuple[str, ...], float], ...]
    total_variance: float

    def as_dict(self) -> dict[tuple[str, ...], float]:
        return {subset: frac for subset, frac in self.entries}

    def fraction(self, subset: Sequence[str]) -> float:
        return self.as_dict()[tuple(sorted(subset))]

    def top(self, n: int) -> "ImportanceReport":
        return ImportanceReport(self.entries[: max(n, 0)], self.total_variance)

    def subsets(self) -> list[tuple[str, ...]]:
        return [s for s, _ in self.entries]


def _sorted_entries(fractions: Mapping[tuple[str, ...], float]) -> tuple:
    items = sorted(fractions.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
    return tuple((subset, float(frac)) for subset, frac in items)


# ---------------------------------------------------------------------------
# exact oracle over discrete grids
# ---------------------------------------------------------------------------


def exhaustive_decomposition(
    table: np.ndarray, names: Sequence[str] | None = None, max_order: int | None = None
) -> ImportanceReport:
    """Classical ANOVA of a full-factorial objective table by direct summation.

    ``table[i, j, ...]`` holds the objective at level ``i`` of the first
    parameter, level ``j`` of the second, and so on; every cell must be
    present and finite.
    """
    table = np.asarray(table, dtype=float)
    if table.size > 10**6:
        raise ValueError("grid too large (over 1e6 cells)")
    if not np.isfinite(table).all():
        raise ValueError("missing cells: every grid cell must hold a finite objective")
    d = table.ndim
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise ValueError("one name per table dimension required")
    if max_order is None:
        max_order = d
    if max_order < 1:
        raise ValueError("max_order must be at least 1")

    mean = float(table.mean())
    v_total = float(table.var())
    comp: dict[tuple[int, ...], np.ndarray | float] = {(): mean}
    fractions: dict[tuple[str, ...], float] = {}
    for order in range(1, min(max_order, d) + 1):
        for dims in combinations(range(d), order):
            other = tuple(a for a in range(d) if a not in dims)
            a_u = table.mean(axis=other) if other else table.copy()
            comp_u = np.asarray(a_u, dtype=float)
            for r in range(order):
                for sub in combinations(dims, r):
                    c = comp[sub]
                    if sub:
                        expand = [dims.index(a) for a in dims if a not in sub]
                        comp_u = comp_u - np.expand_dims(np.asarray(c), tuple(expand))
                    else:
                        comp_u = comp_u - c
            comp[dims] = comp_u
            v_u = float((comp_u**2).mean())
            key = tuple(names[a] for a in dims)
            fractions[key] = v_u / v_total if v_total > ZERO_VARIANCE_EPS else 0.0
    return ImportanceReport(_sorted_entries(fractions), v_total)


# ---------------------------------------------------------------------------
# exact decomposition over tree partitions
# ---------------------------------------------------------------------------


def _tree_leaf_data(tree: Tree, d: int):
    lo, hi, val = tree.leaf_boxes(d)
    widths = hi - lo
    vols = widths.prod(axis=1)
    edges = [np.concatenate(([0.0], t, [1.0])) for t in tree.split_thresholds(d)]
    return lo, hi, val, widths, vols, edges


def _marginal_grid(lo, hi, weights, edges, dims) -> np.ndarray:
    """Piecewise marginal over the projection onto ``dims``.

    Each leaf spreads ``weight = prediction * volume-of-non-dims-extent`` over
    the rectangle of projected cells it covers; scatter the rectangle corners
    with inclusion-exclusion signs, then prefix-sum.
    """
    shape = tuple(len(edges[a]) for a in dims)  # one extra slot per axis
    diff = np.zeros(shape)
    i0 = [np.searchsorted(edges[a], lo[:, a]) for a in dims]
    i1 = [np.searchsorted(edges[a], hi[:, a]) for a in dims]
    k = len(dims)
    for corner in range(1 << k):
        index = tuple(i1[j] if corner >> j & 1 else i0[j] for j in range(k))
        sign = -1.0 if bin(corner).count("1") % 2 else 1.0
        np.add.at(diff, index, sign * weights)
    grid = diff
    for axis in range(k):
        grid = np.cumsum(grid, axis=axis)
    return grid[tuple(slice(0, s - 1) for s in shape)]


def tree_variance_decomposition(
    tree: Tree, d: int, max_order: int
) -> tuple[dict[tuple[int, ...], float], float]:
    """Exact per-subset variances of one tree's piecewise-constant function."""
    lo, hi, val, widths, vols, edges = _tree_leaf_data(tree, d)
    f_mean = float((val * vols).sum())
    v_total = float((val * val * vols).sum() - f_mean * f_mean)
    cell_w = [np.diff(e) for e in edges]
    split_dims = [a for a in range(d) if len(edges[a]) > 2]

    comp: dict[tuple[int, ...], np.ndarray | float] = {(): f_mean}
    variances: dict[tuple[int, ...], float] = {}
    for order in range(1, max_order + 1):
        for dims in combinations(range(d), order):
            if any(a not in split_dims for a in dims):
                # a dimension the tree never splits on is inert: every
                # component involving it vanishes identically
                variances[dims] = 0.0
                continue
            mask = np.ones(d, dtype=bool)
            mask[list(dims)] = False
            others = widths[:, mask].prod(axis=1)
            grid = _marginal_grid(lo, hi, val * others, edges, dims)
            comp_u = grid
            for r in range(order):
                for sub in combinations(dims, r):
                    c = comp.get(sub)
                    if c is None:
                        continue
                    if sub:
                        expand = tuple(i for i, a in enumerate(dims) if a not in sub)
                        comp_u = comp_u - np.expand_dims(np.asarray(c), expand)
                    else:
                        comp_u = comp_u - c
            comp[dims] = comp_u
            w = cell_w[dims[0]]
            for a in dims[1:]:
                w = np.multiply.outer(w, cell_w[a])
            variances[dims] = float((comp_u * comp_u * w).sum())
    return variances, v_total


def variance_contributions(
    forest: RegressionForest, max_order: int = 2, names: Sequence[str] | None = None
) -> ImportanceReport:
    """Fraction of objective variance explained by each parameter subset.

    Per tree, the functional decomposition is computed exactly over its
    partition; fractions are per-tree ratios averaged across trees, with
    constant trees contributing zero.
    """
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    d = forest.n_dims
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise ValueError("one name per forest dimension required")

    acc: dict[tuple[int, ...], float] = {}
    total_acc = 0.0
    for tree in forest.trees:
        variances, v_total = tree_variance_decomposition(tree, d, min(max_order, d))
        total_acc += v_total
        if v_total < ZERO_VARIANCE_EPS:
            for dims in variances:
                acc.setdefault(dims, 0.0)
            continue
        for dims, v in variances.items():
            acc[dims] = acc.get(dims, 0.0) + v / v_total
    n_trees = len(forest.trees)
    fractions = {
        tuple(names[a] for a in dims): v / n_trees for dims, v in acc.items()
    }
    return ImportanceReport(_sorted_entries(fractions), total_acc / n_trees)


def marginal(
    forest: RegressionForest,
    subset: Sequence[str],
    values: Sequence[float],
    names: Sequence[str] | None = None,
) -> float:
    """Objective marginalized over everything outside ``subset``.

    Exact partition traversal: per tree, leaves whose boxes contain the fixed
    coordinates contribute their prediction weighted by the volume of the
    box's projection onto the remaining dimensions.
    """
    d = forest.n_dims
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    name_to_dim = {n: i for i, n in enumerate(names)}
    try:
        dims = [name_to_dim[s] for s in subset]
    except KeyError as e:
        raise ValueError(f"unknown parameter name {e.args[0]!r}") from None
    if len(values) != len(dims):
        raise ValueError("one value per subset parameter required")

    total = 0.0
    for tree in forest.trees:
        lo, hi, val = tree.leaf_boxes(d)
        widths = hi - lo
        mask = np.ones(len(val), dtype=bool)
        nonsub = np.ones(d, dtype=bool)
        for a, v in zip(dims, values):
            v = float(v)
            mask &= (lo[:, a] <= v) & ((v < hi[:, a]) | ((hi[:, a] == 1.0) & (v >= 1.0)))
            nonsub[a] = False
        weight = widths[:, nonsub].prod(axis=1) if nonsub.any() else np.ones(len(val))
        total += float((val[mask] * weight[mask]).sum())
    return total / len(forest.trees)


# ---------------------------------------------------------------------------
# trial-log entry point
# ---------------------------------------------------------------------------


def importance_table(
    trials: Sequence,
    space: SearchSpace,
    top_n: int,
    seed: int = 0,
    params: ForestParams = DEFAULT_ANALYSIS_FOREST,
    max_order: int = 2,
) -> ImportanceReport:
    """Rank parameter subsets by explained variance from evaluated trials.

    Trials need ``config`` and ``objective``; failed or non-finite entries are
    skipped. Deterministic for a given seed.
    """
    ok = [
        t
        for t in trials
        if getattr(t, "status", "ok") == "ok"
        and t.objective is not None
        and math.isfinite(t.objective)
    ]
    if len(ok) < 10:
        raise ValueError(f"too few trials: need at least 10 evaluated, got {len(ok)}")
    X = encode_batch(space, [t.config for t in ok])
    y = np.array([t.objective for t in ok], dtype=float)
    forest = fit_forest(X, y, params, seed=seed)
    report = variance_contributions(forest, max_order=max_order, names=space.names)
    return report.top(top_n)


def write_importance_csv(report: ImportanceReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subset", "fraction", "rank"])
        for rank, (subset, frac) in enumerate(report.entries, start=1):
            writer.writerow(["+".join(subset), repr(frac), rank])


def write_importance_json(report: ImportanceReport, path) -> None:
    doc = {
        "total_variance": report.total_variance,
        "entries": [
            {"subset": list(subset), "fraction": frac, "rank": rank}
            for rank, (subset, frac) in enumerate(report.entries, start=1)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
