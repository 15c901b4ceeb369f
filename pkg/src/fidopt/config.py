"""Campaign configuration files.

A campaign is one JSON document: search space (inline schema or a named
builtin), stage schedule, strategy block, refinement block, evaluator block,
seed, and worker count. Every strategy default is overridable here.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .campaign import CampaignSpec, FidelityStage, check_schedule
from .evaluators import CnnMimicEvaluator, ExternalEvaluator, QuadraticEvaluator, build_quadratic_space
from .space import SearchSpace, SpaceError, build_cnn_space


class ConfigError(ValueError):
    """Schema violation in a campaign configuration, with location context."""


def _require(doc: dict, key: str, where: str) -> Any:
    if key not in doc:
        raise ConfigError(f"{where}: required key {key!r} missing")
    return doc[key]


def _build_schedule(doc: Any) -> tuple[FidelityStage, ...]:
    if not isinstance(doc, list) or not doc:
        raise ConfigError("schedule: expected a non-empty list of stages")
    stages = []
    for i, entry in enumerate(doc):
        where = f"schedule[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object with fidelity and budget")
        try:
            stages.append(
                FidelityStage(
                    fidelity=_require(entry, "fidelity", where),
                    budget=int(_require(entry, "budget", where)),
                )
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}: {e}") from e
    try:
        check_schedule(stages)
    except ValueError as e:
        raise ConfigError(f"schedule: {e}") from e
    return tuple(stages)


def _build_space(doc: Any, schedule: tuple[FidelityStage, ...]) -> SearchSpace:
    if not isinstance(doc, dict):
        raise ConfigError("space: expected an object")
    builtin = doc.get("builtin")
    try:
        if builtin == "cnn":
            resolution = int(doc.get("resolution", schedule[0].fidelity))
            max_resolution = int(doc.get("max_resolution", schedule[-1].fidelity))
            return build_cnn_space(resolution, max_resolution)
        if builtin == "quadratic":
            return build_quadratic_space()
        if builtin is not None:
            raise ConfigError(f"space: unknown builtin {builtin!r}")
        return SearchSpace.from_json(doc)
    except (SpaceError, KeyError, TypeError) as e:
        raise ConfigError(f"space: {e}") from e


def make_evaluator(doc: dict, workers: int = 1):
    """Instantiate the evaluator named by a config block."""
    if not isinstance(doc, dict):
        raise ConfigError("evaluator: expected an object")
    name = _require(doc, "name", "evaluator")
    if name == "cnn_mimic":
        return CnnMimicEvaluator(noise_sigma=float(doc.get("noise_sigma", 0.01)))
    if name == "quadratic":
        return QuadraticEvaluator(
            fid_max=float(doc.get("fid_max", 1.0)),
            noise_sigma=float(doc.get("noise_sigma", 0.005)),
        )
    if name == "external":
        cmd = _require(doc, "cmd", "evaluator")
        if not isinstance(cmd, list) or not all(isinstance(c, str) for c in cmd):
            raise ConfigError("evaluator.cmd: expected a list of strings")
        return ExternalEvaluator(
            cmd, timeout_s=float(doc.get("timeout_s", 60.0)), workers=workers
        )
    raise ConfigError(f"evaluator: unknown name {name!r}")


def build_spec_from_doc(
    doc: dict, seed_override: int | None = None, workers_override: int | None = None
) -> CampaignSpec:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a JSON object")
    schedule = _build_schedule(_require(doc, "schedule", "top level"))
    space = _build_space(_require(doc, "space", "top level"), schedule)
    strategy_doc = _require(doc, "strategy", "top level")
    if not isinstance(strategy_doc, dict):
        raise ConfigError("strategy: expected an object")
    strategy = _require(strategy_doc, "name", "strategy")
    strategy_params = {k: v for k, v in strategy_doc.items() if k != "name"}
    evaluator_doc = _require(doc, "evaluator", "top level")
    if not isinstance(evaluator_doc, dict) or "name" not in evaluator_doc:
        raise ConfigError("evaluator: expected an object with a name")
    refinement = doc.get("refinement", {})
    if not isinstance(refinement, dict):
        raise ConfigError("refinement: expected an object")
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    workers = int(doc.get("workers", 1)) if workers_override is None else int(workers_override)

    effective = dict(doc)
    effective["seed"] = seed
    effective["workers"] = workers
    spec = CampaignSpec(
        space=space,
        schedule=schedule,
        strategy=str(strategy),
        strategy_params=strategy_params,
        evaluator_doc=dict(evaluator_doc),
        seed=seed,
        q=float(refinement.get("q", 0.15)),
        margin=float(refinement.get("margin", 0.1)),
        k_warm=int(refinement.get("k_warm", 10)),
        workers=workers,
        doc=effective,
    )
    if spec.strategy not in ("random", "tpe", "smbo", "ga"):
        raise ConfigError(f"strategy: unknown name {spec.strategy!r}")
    if not 0.0 < spec.q <= 1.0:
        raise ConfigError(f"refinement.q: must be in (0, 1], got {spec.q}")
    if spec.margin < 0:
        raise ConfigError(f"refinement.margin: must be nonnegative, got {spec.margin}")
    if spec.k_warm < 0:
        raise ConfigError(f"refinement.k_warm: must be nonnegative, got {spec.k_warm}")
    if spec.workers < 1:
        raise ConfigError(f"workers: must be at least 1, got {spec.workers}")
    return spec


def load_campaign_config(
    path, seed_override: int | None = None, workers_override: int | None = None
) -> CampaignSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})") from e
    return build_spec_from_doc(doc, seed_override=seed_override, workers_override=workers_override)
