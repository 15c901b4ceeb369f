"""Sequential model-based optimizer: forest surrogate + expected improvement.

Each suggestion refits a randomized regression forest on the encoded history,
scores a candidate pool (prior samples plus Gaussian perturbations of the
best configurations seen) by expected improvement below the incumbent, and
returns the argmax.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from ..forest import ForestParams, fit_forest
from ..space import Config, decode, encode, materialize_row, sample, sample_columns
from ..utils import derive_seed
from .base import HistoryEntry, Optimizer

_SALT_SMBO_FOREST = 0x5B0F


def expected_improvement(mean, std, best):
    """Expected amount by which a predicted objective beats the incumbent.

    Minimization form; accepts scalars or arrays. With zero predictive spread
    this collapses to max(best - mean, 0).
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improvement = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, improvement / np.where(std > 0, std, 1.0), 0.0)
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        ei = np.where(std > 0, improvement * ndtr(z) + std * phi, np.maximum(improvement, 0.0))
    return np.maximum(ei, 0.0)


class SMBOOptimizer(Optimizer):
    name = "smbo"

    def __init__(
        self,
        space,
        seed: int,
        n_startup: int = 20,
        n_trees: int = 30,
        min_leaf: int = 3,
        n_prior_candidates: int = 1000,
        n_incumbents: int = 5,
        n_perturbations: int = 10,
        perturb_sigma: float = 0.1,
    ):
        super().__init__(space, seed)
        self.n_startup = int(n_startup)
        self.n_prior_candidates = int(n_prior_candidates)
        self.n_incumbents = int(n_incumbents)
        self.n_perturbations = int(n_perturbations)
        self.perturb_sigma = float(perturb_sigma)
        d = space.dimensionality
        self.forest_params = ForestParams(
            n_trees=int(n_trees),
            min_leaf=int(min_leaf),
            bootstrap=True,
            max_features=math.ceil(d / 3),
            split="random",
        )
        self._X_rows: list[np.ndarray] = []
        self._y: list[float] = []

    def _on_report(self, entry: HistoryEntry) -> None:
        self._X_rows.append(encode(self.space, entry.config))
        self._y.append(entry.objective)

    def _suggest(self, rng: np.random.Generator, batch_offset: int = 0) -> Config:
        n = len(self.history)
        if n < self.n_startup:
            return sample(self.space, rng)
        X = np.vstack(self._X_rows)
        y = np.asarray(self._y)
        forest = fit_forest(
            X, y, self.forest_params, seed=derive_seed(self.seed, n, _SALT_SMBO_FOREST)
        )

        cols, masks, prior_X = sample_columns(self.space, rng, self.n_prior_candidates)

        order = np.argsort(y, kind="stable")
        top = order[: self.n_incumbents]
        local_configs: list[Config] = []
        local_rows: list[np.ndarray] = []
        for i in top:
            base = X[i]
            noise = rng.normal(0.0, self.perturb_sigma, size=(self.n_perturbations, X.shape[1]))
            for row in np.clip(base + noise, 0.0, 1.0):
                cfg = decode(self.space, row)
                local_configs.append(cfg)
                local_rows.append(encode(self.space, cfg))

        cand_X = np.vstack([prior_X] + local_rows) if local_rows else prior_X
        mean, var = forest.predict_mean_var(cand_X)
        ei = expected_improvement(mean, np.sqrt(var), best=float(y.min()))
        winner = int(np.argmax(ei))
        if winner < self.n_prior_candidates:
            return materialize_row(self.space, cols, masks, winner)
        return local_configs[winner - self.n_prior_candidates]
