"""Density-ratio optimizer over good/bad Parzen estimators.

History is split into a good quantile and the rest; per parameter (following
the condition tree, so each parameter is modeled conditioned on being active)
a mixture of truncated Gaussians is fit to each side on the transformed
scale, candidates are drawn from the good density, and the candidate with the
highest good/bad density ratio wins. Categorical parameters use smoothed
choice counts instead of kernels.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from ..space import Config, sample
from .base import HistoryEntry, Optimizer

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Kernel bandwidths never fall below this fraction of the parameter range.
BANDWIDTH_FLOOR_FRACTION = 0.01


def tpe_split(history: Sequence, gamma: float) -> tuple[list, list]:
    """Partition history into the best ceil(gamma * n) entries and the rest.

    Ties are stable: equal objectives keep their original order. Entries need
    an ``objective`` attribute.
    """
    if not history:
        raise ValueError("history must be non-empty")
    n = len(history)
    n_good = math.ceil(gamma * n - 1e-9)
    n_good = min(max(n_good, 1), n)
    order = np.argsort([e.objective for e in history], kind="stable")
    good = [history[i] for i in order[:n_good]]
    bad = [history[i] for i in order[n_good:]]
    return good, bad


class ParzenMixture:
    """Truncated-Gaussian mixture on an interval, plus one interval-wide
    uniform component; all k+1 components share weight 1/(k+1)."""

    def __init__(self, values: Sequence[float], low: float, high: float):
        self.low = float(low)
        self.high = float(high)
        self.range = self.high - self.low
        mus = np.sort(np.asarray(values, dtype=float))
        self.mus = mus
        k = len(mus)
        if k == 0:
            self.bws = np.empty(0)
        elif k == 1:
            self.bws = np.array([self.range])
        else:
            gaps = np.diff(mus)
            nearest = np.minimum(
                np.concatenate((gaps, [np.inf])), np.concatenate(([np.inf], gaps))
            )
            self.bws = np.maximum(nearest, BANDWIDTH_FLOOR_FRACTION * self.range)
        if k:
            self._cdf_lo = ndtr((self.low - mus) / self.bws)
            self._cdf_hi = ndtr((self.high - mus) / self.bws)
            self._z = self._cdf_hi - self._cdf_lo

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = len(self.mus)
        dens = np.full(x.shape, 1.0 / self.range)
        if k:
            z = (x[..., None] - self.mus) / self.bws
            kernels = np.exp(-0.5 * z * z) / (_SQRT_2PI * self.bws * self._z)
            dens = dens + kernels.sum(axis=-1)
        return dens / (k + 1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        k = len(self.mus)
        comp = rng.integers(0, k + 1, size=n)
        u = rng.random(n)
        out = np.empty(n)
        prior = comp == k
        out[prior] = self.low + u[prior] * self.range
        g = ~prior
        if g.any():
            ci = comp[g]
            p = self._cdf_lo[ci] + u[g] * self._z[ci]
            out[g] = self.mus[ci] + self.bws[ci] * ndtri(p)
        return np.clip(out, self.low, self.high)


def tpe_suggest_param(
    good_values: Sequence[float],
    bad_values: Sequence[float],
    bounds: tuple[float, float],
    n_candidates: int,
    rng: np.random.Generator,
    candidates: np.ndarray | None = None,
) -> float:
    """Pick the candidate maximizing good-density over bad-density.

    Works on one parameter's transformed scale; empty value lists degrade to
    the interval-wide prior component.
    """
    low, high = bounds
    l_dens = ParzenMixture(good_values, low, high)
    g_dens = ParzenMixture(bad_values, low, high)
    if candidates is None:
        candidates = l_dens.sample(rng, n_candidates)
    else:
        candidates = np.asarray(candidates, dtype=float)
    scores = l_dens.pdf(candidates) / g_dens.pdf(candidates)
    return float(candidates[int(np.argmax(scores))])


def tpe_suggest_categorical(
    good_counts: np.ndarray,
    bad_counts: np.ndarray,
    n_candidates: int,
    rng: np.random.Generator,
    smoothing: float = 1.0,
) -> int:
    """Smoothed-count analogue: returns the winning choice index."""
    wl = np.asarray(good_counts, dtype=float) + smoothing
    wg = np.asarray(bad_counts, dtype=float) + smoothing
    pl = wl / wl.sum()
    pg = wg / wg.sum()
    cands = rng.choice(len(pl), size=n_candidates, p=pl)
    scores = pl[cands] / pg[cands]
    return int(cands[int(np.argmax(scores))])


class TPEOptimizer(Optimizer):
    name = "tpe"

    def __init__(
        self,
        space,
        seed: int,
        gamma: float = 0.15,
        n_startup: int = 20,
        n_candidates: int = 24,
    ):
        super().__init__(space, seed)
        self.gamma = float(gamma)
        self.n_startup = int(n_startup)
        self.n_candidates = int(n_candidates)
        # per-parameter transformed observations, nan where inactive;
        # categoricals store the choice index
        self._columns: dict[str, list[float]] = {p.name: [] for p in space.params}

    def _on_report(self, entry: HistoryEntry) -> None:
        for p in self.space.params:
            if p.name in entry.config:
                v = entry.config[p.name]
                col = float(p.choices.index(v)) if p.kind == "categorical" else p.transform(v)
            else:
                col = math.nan
            self._columns[p.name].append(col)

    def _suggest(self, rng: np.random.Generator, batch_offset: int = 0) -> Config:
        n = len(self.history)
        if n < self.n_startup:
            return sample(self.space, rng)
        objectives = np.array([e.objective for e in self.history])
        order = np.argsort(objectives, kind="stable")
        n_good = min(max(math.ceil(self.gamma * n - 1e-9), 1), n)
        good_idx = order[:n_good]
        bad_idx = order[n_good:]

        values: Config = {}
        for name in self.space.topological_order:
            if not self.space.is_active(name, values):
                continue
            p = self.space.param(name)
            col = np.asarray(self._columns[name])
            gv = col[good_idx]
            gv = gv[~np.isnan(gv)]
            bv = col[bad_idx]
            bv = bv[~np.isnan(bv)]
            if p.kind == "categorical":
                k = len(p.choices)
                gc = np.bincount(gv.astype(int), minlength=k)[:k]
                bc = np.bincount(bv.astype(int), minlength=k)[:k]
                idx = tpe_suggest_categorical(gc, bc, self.n_candidates, rng)
                values[name] = p.choices[idx]
            else:
                t_lo, t_hi = p.transformed_bounds()
                x = tpe_suggest_param(gv, bv, (t_lo, t_hi), self.n_candidates, rng)
                v = p.untransform(x)
                if p.kind == "integer":
                    values[name] = min(max(int(round(v)), p.low), p.high)
                else:
                    values[name] = min(max(float(v), p.low), p.high)
        return values
