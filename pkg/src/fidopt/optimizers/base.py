"""Suggest/report optimizer core.

An optimizer owns a search space and a seed. ``suggest`` proposes a valid
configuration and ``report`` feeds back an observed objective; the next
suggestion is a pure function of (seed, reported history), so repeated calls
without an intervening report return the same configuration and a replayed
history reconstructs the optimizer exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..space import Config, SearchSpace, sample
from ..utils import spawn_rng

_SALT_SUGGEST = 0x5347


class DuplicateReportError(ValueError):
    """The same trial id was reported twice."""


@dataclass
class HistoryEntry:
    trial_id: int
    config: Config
    objective: float


class Optimizer:
    """Base class: bookkeeping plus the deterministic per-call generator."""

    name = "base"

    def __init__(self, space: SearchSpace, seed: int):
        self.space = space
        self.seed = int(seed)
        self.history: list[HistoryEntry] = []
        self.pending: list[Config] = []
        self._reported_ids: set[int] = set()

    # -- public API ---------------------------------------------------------

    def suggest(self, batch_offset: int = 0) -> Config:
        """Propose a configuration.

        ``batch_offset`` distinguishes simultaneous proposals within one
        evaluation batch; slot 0 is the plain serial call, and repeated calls
        with the same offset and history return the same configuration.
        """
        cfg = self._suggest(self._suggest_rng(batch_offset), batch_offset)
        if cfg not in self.pending:
            self.pending.append(dict(cfg))
        return dict(cfg)

    def report(self, trial_id: int, config: Config, objective: float) -> None:
        """Record an evaluated configuration.

        Accepts configurations that were never suggested (warm starts) and
        out-of-order reports; rejects duplicate trial ids.
        """
        if trial_id in self._reported_ids:
            raise DuplicateReportError(f"trial {trial_id} was already reported")
        self._reported_ids.add(trial_id)
        try:
            self.pending.remove(config)
        except ValueError:
            pass
        entry = HistoryEntry(int(trial_id), dict(config), float(objective))
        self.history.append(entry)
        self._on_report(entry)

    # -- extension points ----------------------------------------------------

    def _suggest(self, rng: np.random.Generator, batch_offset: int = 0) -> Config:
        raise NotImplementedError

    def _on_report(self, entry: HistoryEntry) -> None:
        pass

    def _suggest_rng(self, batch_offset: int = 0) -> np.random.Generator:
        return spawn_rng(self.seed, len(self.history), _SALT_SUGGEST, batch_offset)


class RandomSearch(Optimizer):
    """Independent draws from the prior distribution over the space."""

    name = "random"

    def _suggest(self, rng: np.random.Generator, batch_offset: int = 0) -> Config:
        return sample(self.space, rng)
