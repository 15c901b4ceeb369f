"""Optimizer strategies: random search, density-ratio (TPE), forest-based
sequential model-based optimization, and a genetic algorithm."""

from __future__ import annotations

from ..space import SearchSpace
from .base import DuplicateReportError, HistoryEntry, Optimizer, RandomSearch
from .ga import GAIndividual, GAOptimizer, ga_step
from .smbo import SMBOOptimizer, expected_improvement
from .tpe import ParzenMixture, TPEOptimizer, tpe_split, tpe_suggest_categorical, tpe_suggest_param

STRATEGIES = {
    "random": RandomSearch,
    "tpe": TPEOptimizer,
    "smbo": SMBOOptimizer,
    "ga": GAOptimizer,
}


def make_optimizer(name: str, space: SearchSpace, seed: int, **params) -> Optimizer:
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}"
        ) from None
    return cls(space, seed, **params)


__all__ = [
    "DuplicateReportError",
    "GAIndividual",
    "GAOptimizer",
    "HistoryEntry",
    "Optimizer",
    "ParzenMixture",
    "RandomSearch",
    "SMBOOptimizer",
    "STRATEGIES",
    "TPEOptimizer",
    "expected_improvement",
    "ga_step",
    "make_optimizer",
    "tpe_split",
    "tpe_suggest_categorical",
    "tpe_suggest_param",
]
