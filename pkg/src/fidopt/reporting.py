"""Report views over trial logs.

Best-objective-so-far curves indexed by evaluations or by cumulative cost,
campaign summaries (headline best taken at the final fidelity only), and the
percentage time reduction between a standard and a multi-stage campaign.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass
from typing import Sequence

from .trial_log import TrialRecord
from .utils import round_half_up

Curve = list[tuple[float, float | None]]


def best_so_far(records: Sequence[TrialRecord], by: str = "evaluations") -> Curve:
    """Stepwise running minimum; failed trials advance x without improving y.

    ``by`` selects the x axis: "evaluations" counts trials, "cost" uses the
    cumulative cost prefix sums.
    """
    if by not in ("evaluations", "cost"):
        raise ValueError(f"unknown axis {by!r}")
    if not any(r.ok for r in records):
        raise ValueError("no evaluated trials to build a curve from")
    curve: Curve = []
    best: float | None = None
    for i, r in enumerate(records, start=1):
        if r.ok and r.objective is not None and (best is None or r.objective < best):
            best = r.objective
        x = float(i) if by == "evaluations" else r.cum_cost_minutes
        curve.append((x, best))
    return curve


def time_reduction(standard_minutes: float, staged_minutes: float) -> int:
    """Percent saved by the multi-stage run, rounded half-up to an integer."""
    if standard_minutes <= 0 or staged_minutes <= 0:
        raise ValueError("both totals must be positive")
    return round_half_up(100.0 * (1.0 - staged_minutes / standard_minutes))


@dataclass(frozen=True)
class CampaignSummary:
    best_objective: float | None
    best_trial_id: int | None
    best_config: dict | None
    final_fidelity: float | None
    total_cost_minutes: float
    n_trials: int
    n_ok: int
    n_failed: int
    strategy: str | None = None
    seed: int | None = None
    schedule: list | None = None

    def to_json(self) -> dict:
        return {
            "best_objective": self.best_objective,
            "best_trial_id": self.best_trial_id,
            "best_config": self.best_config,
            "final_fidelity": self.final_fidelity,
            "total_cost_minutes": self.total_cost_minutes,
            "n_trials": self.n_trials,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "strategy": self.strategy,
            "seed": self.seed,
            "schedule": self.schedule,
        }


def summarize(
    records: Sequence[TrialRecord],
    strategy: str | None = None,
    seed: int | None = None,
    schedule: list | None = None,
) -> CampaignSummary:
    """Headline numbers; the best objective counts final-fidelity trials only,
    lower-fidelity stages being systematically pessimistic."""
    n_ok = sum(1 for r in records if r.ok)
    total = records[-1].cum_cost_minutes if records else 0.0
    final_stage = max((r.stage for r in records), default=None)
    best: TrialRecord | None = None
    final_fid = None
    if final_stage is not None:
        final_records = [r for r in records if r.stage == final_stage]
        final_fid = final_records[0].fidelity
        for r in final_records:
            if r.ok and r.objective is not None and (best is None or r.objective < best.objective):
                best = r
    return CampaignSummary(
        best_objective=best.objective if best else None,
        best_trial_id=best.trial_id if best else None,
        best_config=dict(best.config) if best else None,
        final_fidelity=final_fid,
        total_cost_minutes=total,
        n_trials=len(records),
        n_ok=n_ok,
        n_failed=len(records) - n_ok,
        strategy=strategy,
        seed=seed,
        schedule=schedule,
    )


def comparison_report(
    standard: Sequence[Sequence[TrialRecord]], multi_stage: Sequence[Sequence[TrialRecord]]
) -> dict:
    """Side-by-side totals and the time-reduction percentage.

    Accepts one or more repetitions per arm; spreads are labeled explicitly
    as standard deviations over repetitions.
    """
    if not standard or not multi_stage:
        raise ValueError("both arms need at least one log")
    std_totals = [recs[-1].cum_cost_minutes for recs in standard if recs]
    staged_totals = [recs[-1].cum_cost_minutes for recs in multi_stage if recs]
    if not std_totals or not staged_totals:
        raise ValueError("empty log supplied")
    std_mean = sum(std_totals) / len(std_totals)
    staged_mean = sum(staged_totals) / len(staged_totals)
    doc = {
        "standard_minutes": std_mean,
        "staged_minutes": staged_mean,
        "time_reduction_pct": time_reduction(std_mean, staged_mean),
        "repetitions": {"standard": len(std_totals), "staged": len(staged_totals)},
        "spread_label": "stddev over repetitions",
        "standard_minutes_stddev": statistics.pstdev(std_totals) if len(std_totals) > 1 else 0.0,
        "staged_minutes_stddev": statistics.pstdev(staged_totals) if len(staged_totals) > 1 else 0.0,
        "standard_best": summarize(standard[0]).best_objective,
        "staged_best": summarize(multi_stage[0]).best_objective,
    }
    return doc


def write_curve_csv(curve: Curve, path, x_label: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([x_label, "best_objective"])
        for x, y in curve:
            writer.writerow([repr(float(x)), "" if y is None else repr(float(y))])


def write_summary_json(summary: CampaignSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_json(), fh, indent=2)
        fh.write("\n")


def cost_to_reach(records: Sequence[TrialRecord], target: float) -> float | None:
    """Cumulative cost at the first evaluated trial at or below ``target``."""
    for r in records:
        if r.ok and r.objective is not None and r.objective <= target:
            return r.cum_cost_minutes
    return None
