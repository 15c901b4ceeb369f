"""Increasing-fidelity optimization campaigns.

A campaign walks an ordered schedule of (fidelity, budget) stages. Within a
stage it runs plain suggest -> evaluate -> report cycles. At each boundary it
extracts the stage's elite quantile, shrinks the search space around it,
re-derives resolution-coupled bounds for the next fidelity, and hands the
best elites to a fresh optimizer as re-evaluated warm starts (counted against
the next stage's budget, so the grand total stays the sum of stage budgets).

Everything downstream of the campaign seed is deterministic for synthetic
evaluators, which is what makes kill/resume replay byte-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .evaluators import TrialRequest, TrialResult
from .optimizers import Optimizer, make_optimizer
from .space import Config, InsufficientElitesError, SearchSpace, refine, validate
from .trial_log import Checkpoint, TrialLog, TrialRecord, digest_of_prefix
from .utils import derive_seed

_SALT_OPTIMIZER = 0x09F1
_SALT_TRIAL = 0x7A1A

#: Reported objective for a failed trial when nothing succeeded yet.
_FALLBACK_PENALTY = 1.0


class CampaignError(RuntimeError):
    pass


class ReplayError(CampaignError):
    """The log disagrees with what the campaign would have produced."""


class CheckpointMismatch(CampaignError):
    """Checkpoint and log describe different campaigns."""


@dataclass(frozen=True)
class FidelityStage:
    fidelity: float
    budget: int

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("stage budget must be at least 1")
        if self.fidelity <= 0:
            raise ValueError("fidelity must be positive")


def check_schedule(schedule: Sequence[FidelityStage]) -> None:
    if not schedule:
        raise ValueError("schedule must have at least one stage")
    fids = [s.fidelity for s in schedule]
    if any(b >= a for b, a in zip(fids, fids[1:])):
        raise ValueError("fidelity must strictly increase across stages")


@dataclass(frozen=True)
class CampaignSpec:
    """Everything a campaign needs, round-trippable through the config file."""

    space: SearchSpace
    schedule: tuple[FidelityStage, ...]
    strategy: str
    strategy_params: dict
    evaluator_doc: dict
    seed: int
    q: float = 0.15
    margin: float = 0.1
    k_warm: int = 10
    workers: int = 1
    doc: dict = field(default_factory=dict, compare=False)

    @property
    def total_budget(self) -> int:
        return sum(s.budget for s in self.schedule)


@dataclass
class CampaignResult:
    records: list[TrialRecord]
    best_objective: float | None
    best_config: Config | None
    best_trial_id: int | None
    total_cost_minutes: float
    stage_cost_minutes: list[float]


def select_elites(trials: Sequence, q: float) -> list:
    """Best floor(q * n) evaluated trials, ties broken by earlier trial id."""
    usable = [t for t in trials if t.objective is not None and math.isfinite(t.objective)]
    n_elite = int(q * len(usable) + 1e-9)
    if n_elite <= 0:
        raise InsufficientElitesError(
            f"insufficient elites: quantile {q} of {len(usable)} trials selects none"
        )
    return sorted(usable, key=lambda t: (t.objective, t.trial_id))[:n_elite]


def lift_config(
    config: Config, from_fidelity: float, to_fidelity: float, space_at_target: SearchSpace
) -> Config:
    """Carry a configuration across a fidelity boundary.

    Non-coupled values are copied (clamped only to absorb transform round-off);
    resolution-coupled integers are clamped into the target bounds — never
    grown — and parameters orphaned by the clamp are dropped. Parameters the
    lift newly activates are filled with their transformed-scale midpoint.
    """
    out: Config = {}
    for name in space_at_target.topological_order:
        if not space_at_target.is_active(name, out):
            continue
        p = space_at_target.param(name)
        if name in config:
            v = config[name]
            if p.is_numeric:
                v = min(max(v, p.low), p.high)
                if p.kind == "integer":
                    v = int(v)
        else:
            v = p.from_unit(0.5)
        out[name] = v
    problems = validate(space_at_target, out)
    if problems:
        raise CampaignError(f"lifted configuration invalid: {problems}")
    return out


class CampaignRunner:
    """Owns one campaign's state; single-writer over its log."""

    def __init__(
        self,
        spec: CampaignSpec,
        evaluator,
        log: TrialLog | None = None,
        checkpoint_path=None,
        replay_records: Sequence[TrialRecord] | None = None,
    ):
        check_schedule(spec.schedule)
        for stage in spec.schedule[1:]:
            if stage.budget < 1:
                raise ValueError("every stage needs budget for at least one trial")
        self.spec = spec
        self.evaluator = evaluator
        self.log = log
        self.checkpoint_path = checkpoint_path
        self.records: list[TrialRecord] = []
        self.stage_index = 0
        self.space = spec.space
        self.optimizer = self._fresh_optimizer()
        self.warm_queue: list[Config] = []
        self.cum_cost = 0.0
        self._stage_counts = [0] * len(spec.schedule)
        self._replaying = False
        if replay_records:
            self._replay(replay_records)
        self._write_checkpoint()

    # -- plumbing -----------------------------------------------------------

    def _fresh_optimizer(self) -> Optimizer:
        return make_optimizer(
            self.spec.strategy,
            self.space,
            derive_seed(self.spec.seed, _SALT_OPTIMIZER, self.stage_index),
            **self.spec.strategy_params,
        )

    @property
    def current_stage(self) -> FidelityStage:
        return self.spec.schedule[self.stage_index]

    @property
    def done(self) -> bool:
        return len(self.records) >= self.spec.total_budget

    def _stage_exhausted(self) -> bool:
        return self._stage_counts[self.stage_index] >= self.current_stage.budget

    def _stage_records(self, stage: int) -> list[TrialRecord]:
        return [r for r in self.records if r.stage == stage]

    def _penalty_objective(self) -> float:
        worst = max(
            (r.objective for r in self.records if r.ok and r.objective is not None),
            default=_FALLBACK_PENALTY,
        )
        return worst * 1.1

    def _timestamp(self, result: TrialResult) -> float:
        if getattr(self.evaluator, "simulated", False):
            return self.cum_cost
        return time.time()

    def _write_checkpoint(self) -> None:
        if self.checkpoint_path is None or self._replaying:
            return
        Checkpoint(
            config_doc=self.spec.doc,
            trial_count=len(self.records),
            stage_index=self.stage_index,
            cum_cost_minutes=self.cum_cost,
            log_digest=self.log.digest_hex if self.log else "",
        ).save(self.checkpoint_path)

    # -- the loop -----------------------------------------------------------

    def _next_config(self) -> tuple[Config, bool]:
        if self.warm_queue:
            return self.warm_queue.pop(0), True
        return self.optimizer.suggest(), False

    def _ingest(self, config: Config, result: TrialResult, seed: int) -> TrialRecord:
        self.cum_cost += result.cost_minutes
        record = TrialRecord(
            trial_id=result.trial_id,
            stage=self.stage_index,
            fidelity=self.current_stage.fidelity,
            config=dict(config),
            objective=result.objective if result.ok else None,
            cost_minutes=result.cost_minutes,
            cum_cost_minutes=self.cum_cost,
            status=result.status,
            seed=seed,
            ts=self._timestamp(result),
        )
        if self.log and not self._replaying:
            self.log.append(record)
        self.records.append(record)
        self._stage_counts[self.stage_index] += 1
        reported = record.objective if record.ok else self._penalty_objective()
        self.optimizer.report(record.trial_id, config, reported)
        return record

    def step(self) -> TrialRecord:
        """Run exactly one trial (advancing the stage first if needed)."""
        if self.done:
            raise CampaignError("campaign budget exhausted")
        if self._stage_exhausted():
            self.advance_stage()
        config, _ = self._next_config()
        trial_id = len(self.records) + 1
        seed = derive_seed(self.spec.seed, _SALT_TRIAL, trial_id)
        request = TrialRequest(trial_id, config, self.current_stage.fidelity, seed)
        result = self.evaluator.evaluate(request)
        record = self._ingest(config, result, seed)
        self._write_checkpoint()
        return record

    def _step_batch(self, k: int) -> list[TrialRecord]:
        """Evaluate up to k trials concurrently; reports land in trial-id
        order, so the final state is independent of completion order."""
        pending: list[tuple[Config, TrialRequest]] = []
        room = self.current_stage.budget - self._stage_counts[self.stage_index]
        take_warm = bool(self.warm_queue)
        while len(pending) < min(k, room):
            if take_warm:
                if not self.warm_queue:
                    break  # never mix warm and suggested trials in one batch
                config = self.warm_queue.pop(0)
            else:
                config = self.optimizer.suggest(batch_offset=len(pending))
            trial_id = len(self.records) + len(pending) + 1
            seed = derive_seed(self.spec.seed, _SALT_TRIAL, trial_id)
            pending.append((config, TrialRequest(trial_id, config, self.current_stage.fidelity, seed)))
        results = self.evaluator.evaluate_batch([req for _, req in pending])
        out = []
        for (config, req), result in zip(pending, results):
            out.append(self._ingest(config, result, req.seed))
        self._write_checkpoint()
        return out

    def advance_stage(self) -> None:
        """Stage boundary: elites -> refined space -> fresh optimizer -> warm starts."""
        if self.stage_index + 1 >= len(self.spec.schedule):
            raise CampaignError("already at final stage")
        if not self._stage_exhausted():
            raise CampaignError("current stage budget not exhausted yet")
        stage_ok = [r for r in self._stage_records(self.stage_index) if r.ok]
        elites = select_elites(stage_ok, self.spec.q)
        refined = refine(self.space, stage_ok, self.spec.q, self.spec.margin)
        next_stage = self.spec.schedule[self.stage_index + 1]
        from_fidelity = self.current_stage.fidelity
        refined = refined.with_resolution(int(next_stage.fidelity))
        k = min(self.spec.k_warm, len(elites), next_stage.budget)
        self.warm_queue = [
            lift_config(e.config, from_fidelity, next_stage.fidelity, refined)
            for e in elites[:k]
        ]
        self.stage_index += 1
        self.space = refined
        self.optimizer = self._fresh_optimizer()
        self._write_checkpoint()

    def run(self) -> CampaignResult:
        workers = max(1, self.spec.workers)
        while not self.done:
            if self._stage_exhausted():
                self.advance_stage()
            if workers == 1:
                self.step()
            else:
                self._step_batch(workers)
        self._write_checkpoint()
        return self.result()

    def result(self) -> CampaignResult:
        final_stage = len(self.spec.schedule) - 1
        best: TrialRecord | None = None
        for r in self.records:
            if r.stage == final_stage and r.ok and r.objective is not None:
                if best is None or r.objective < best.objective:
                    best = r
        stage_costs = [
            sum(r.cost_minutes for r in self._stage_records(s))
            for s in range(len(self.spec.schedule))
        ]
        return CampaignResult(
            records=list(self.records),
            best_objective=best.objective if best else None,
            best_config=dict(best.config) if best else None,
            best_trial_id=best.trial_id if best else None,
            total_cost_minutes=self.cum_cost,
            stage_cost_minutes=stage_costs,
        )

    # -- replay / resume ----------------------------------------------------

    def _replay(self, records: Sequence[TrialRecord]) -> None:
        """Rebuild state by walking logged trials through the real loop.

        Suggestions are recomputed (with the same batch slotting the run used)
        and compared against the log, so a replay doubles as a determinism
        check; any mismatch (different seed, edited log, version drift) raises
        instead of silently diverging.
        """
        self._replaying = True
        workers = max(1, self.spec.workers)
        try:
            pos = 0
            while pos < len(records):
                if self.done:
                    raise ReplayError("log holds more trials than the schedule allows")
                if self._stage_exhausted():
                    self.advance_stage()
                room = self.current_stage.budget - self._stage_counts[self.stage_index]
                n = min(workers, room, len(records) - pos)
                take_warm = bool(self.warm_queue)
                batch: list[Config] = []
                for j in range(n):
                    if take_warm:
                        if not self.warm_queue:
                            break
                        batch.append(self.warm_queue.pop(0))
                    else:
                        batch.append(self.optimizer.suggest(batch_offset=j))
                for config in batch:
                    rec = records[pos]
                    if rec.trial_id != len(self.records) + 1:
                        raise ReplayError(f"log out of sequence at trial {rec.trial_id}")
                    if rec.stage != self.stage_index:
                        raise ReplayError(
                            f"trial {rec.trial_id}: log says stage {rec.stage}, "
                            f"replay reached stage {self.stage_index}"
                        )
                    if config != rec.config:
                        raise ReplayError(
                            f"trial {rec.trial_id}: replayed configuration diverges from the log"
                        )
                    result = TrialResult(
                        rec.trial_id,
                        rec.objective,
                        rec.cost_minutes,
                        rec.status,
                    )
                    self._ingest(config, result, rec.seed)
                    pos += 1
        finally:
            self._replaying = False


def run_campaign(
    space: SearchSpace,
    strategy: str,
    evaluator,
    schedule: Sequence[FidelityStage],
    q: float = 0.15,
    margin: float = 0.1,
    k_warm: int = 10,
    seed: int = 0,
    strategy_params: dict | None = None,
    log: TrialLog | None = None,
    checkpoint_path=None,
    workers: int = 1,
) -> CampaignResult:
    """One-call campaign: all trials, the final-fidelity best, and cost totals."""
    spec = CampaignSpec(
        space=space,
        schedule=tuple(schedule),
        strategy=strategy,
        strategy_params=dict(strategy_params or {}),
        evaluator_doc={},
        seed=seed,
        q=q,
        margin=margin,
        k_warm=k_warm,
        workers=workers,
    )
    runner = CampaignRunner(spec, evaluator, log=log, checkpoint_path=checkpoint_path)
    return runner.run()


def resume_campaign(checkpoint_path, log_path, evaluator=None) -> CampaignRunner:
    """Reconstruct a runner from its checkpoint and log.

    The checkpoint's digest must match the log prefix it describes; the log
    may be longer (trials recorded after the snapshot) and may end in a torn
    line, which recovery truncates. Continuing the returned runner reproduces
    the uninterrupted campaign exactly for synthetic evaluators.
    """
    from .config import build_spec_from_doc, make_evaluator

    cp = Checkpoint.load(checkpoint_path)
    log = TrialLog(log_path)
    if cp.trial_count > log.count:
        raise CheckpointMismatch(
            f"checkpoint expects {cp.trial_count} trials, log holds {log.count}"
        )
    if cp.trial_count and digest_of_prefix(log_path, cp.trial_count) != cp.log_digest:
        raise CheckpointMismatch("log prefix digest does not match the checkpoint")
    spec = build_spec_from_doc(cp.config_doc)
    if evaluator is None:
        evaluator = make_evaluator(spec.evaluator_doc, workers=spec.workers)
    return CampaignRunner(
        spec,
        evaluator,
        log=log,
        checkpoint_path=checkpoint_path,
        replay_records=log.records,
    )
