"""Command-line entry point: run, resume, analyze, report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import CampaignError, CampaignRunner, resume_campaign
from .config import ConfigError, load_campaign_config, make_evaluator
from .fanova import importance_table, write_importance_csv, write_importance_json
from .reporting import (
    best_so_far,
    comparison_report,
    summarize,
    write_curve_csv,
    write_summary_json,
)
from .trial_log import CheckpointError, TrialLog, read_records
from .utils import canonical_json


def _progress(verbose: bool, msg: str) -> None:
    if verbose:
        print(msg, file=sys.stderr)


def cmd_run(args) -> int:
    spec = load_campaign_config(args.config, seed_override=args.seed, workers_override=args.workers)
    evaluator = make_evaluator(spec.evaluator_doc, workers=spec.workers)
    log = TrialLog(args.log) if args.log else None
    try:
        runner = CampaignRunner(spec, evaluator, log=log, checkpoint_path=args.checkpoint)
        _progress(args.verbose, f"running {spec.total_budget} trials with {spec.strategy}")
        result = runner.run()
    finally:
        evaluator.close()
        if log:
            log.close()
    summary = summarize(result.records, spec.strategy, spec.seed,
                        [[s.fidelity, s.budget] for s in spec.schedule])
    if args.log:
        write_summary_json(summary, str(args.log) + ".summary.json")
    print(f"evaluations: {summary.n_trials} ({summary.n_failed} failed)")
    print(f"best objective (final fidelity): {summary.best_objective}")
    print(f"total cost: {summary.total_cost_minutes:.3f} minutes")
    return 0


def cmd_resume(args) -> int:
    runner = resume_campaign(args.checkpoint, args.log)
    _progress(args.verbose, f"resuming at trial {len(runner.records) + 1}")
    try:
        result = runner.run()
    finally:
        runner.evaluator.close()
        if runner.log:
            runner.log.close()
    summary = summarize(result.records)
    write_summary_json(summary, str(args.log) + ".summary.json")
    print(f"evaluations: {summary.n_trials} ({summary.n_failed} failed)")
    print(f"best objective (final fidelity): {summary.best_objective}")
    print(f"total cost: {summary.total_cost_minutes:.3f} minutes")
    return 0


def cmd_analyze(args) -> int:
    from .space import SearchSpace

    records = read_records(args.log)
    if args.space:
        space = SearchSpace.load(args.space)
    else:
        space = _space_from_records(records)
    report = importance_table(records, space, top_n=args.top_n)
    base = str(args.out) if args.out else str(args.log) + ".importance"
    csv_path, json_path = Path(base + ".csv"), Path(base + ".json")
    write_importance_csv(report, csv_path)
    write_importance_json(report, json_path)
    print(f"wrote {csv_path} and {json_path}")
    for rank, (subset, frac) in enumerate(report.entries[: args.top_n], start=1):
        print(f"{rank:3d}  {'+'.join(subset):40s} {frac:.4f}")
    return 0


def _space_from_records(records):
    """Rebuild a space wide enough to encode every logged configuration."""
    from .evaluators import build_quadratic_space
    from .space import build_cnn_space

    if not records:
        raise ConfigError("empty log")
    keys = set()
    for r in records:
        keys.update(r.config)
    if keys == {"x1", "x2"}:
        return build_quadratic_space()
    max_fid = max(int(r.fidelity) for r in records)
    return build_cnn_space(max_fid, max_fid)


def cmd_report(args) -> int:
    standard = read_records(args.standard_log)
    multi = read_records(args.staged_log)
    if not standard or not multi:
        raise ConfigError("both logs must contain trials")
    doc = comparison_report([standard], [multi])
    out = Path(args.out) if args.out else Path(str(args.staged_log) + ".compare")
    for label, recs in (("standard", standard), ("staged", multi)):
        for axis in ("evaluations", "cost"):
            write_curve_csv(
                best_so_far(recs, by=axis), f"{out}.{label}.{axis}.csv", axis
            )
    Path(f"{out}.json").write_text(canonical_json(doc) + "\n", encoding="utf-8")
    print(f"standard: {doc['standard_minutes']:.1f} min, staged: {doc['staged_minutes']:.1f} min")
    print(f"time reduction: {doc['time_reduction_pct']}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fidopt",
        description="Multi-fidelity hyperparameter optimization campaigns",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a campaign from a config file")
    run.add_argument("--config", required=True, help="campaign configuration (JSON)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--log", default=None, help="trial log path (JSON lines)")
    run.add_argument("--checkpoint", default=None, help="checkpoint snapshot path")
    run.add_argument("--workers", type=int, default=None, help="concurrent evaluations")
    run.add_argument("-v", dest="verbose", action="store_true")
    run.set_defaults(func=cmd_run)

    res = sub.add_parser("resume", help="continue a campaign from checkpoint + log")
    res.add_argument("--checkpoint", required=True)
    res.add_argument("--log", required=True)
    res.add_argument("-v", dest="verbose", action="store_true")
    res.set_defaults(func=cmd_resume)

    ana = sub.add_parser("analyze", help="hyperparameter importance from a trial log")
    ana.add_argument("--log", required=True)
    ana.add_argument("--top-n", type=int, default=18)
    ana.add_argument("--space", default=None, help="space declaration file (JSON)")
    ana.add_argument("--out", default=None, help="output basename")
    ana.add_argument("-v", dest="verbose", action="store_true")
    ana.set_defaults(func=cmd_analyze)

    rep = sub.add_parser("report", help="compare a standard log against a multi-stage log")
    rep.add_argument("standard_log")
    rep.add_argument("staged_log")
    rep.add_argument("--out", default=None, help="output basename")
    rep.add_argument("-v", dest="verbose", action="store_true")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, CampaignError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
