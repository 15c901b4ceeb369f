"""Conditional hyperparameter search spaces.

Declares parameters (continuous / integer / categorical, optionally on a
log10 scale), one-parent activation conditions, and the operations the rest
of the toolkit builds on: sampling, validation, unit-cube encoding/decoding,
quantile-based bound refinement, and the pooling-depth rule that ties layer
counts to input resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .utils import as_native

KINDS = ("continuous", "integer", "categorical")
SCALES = ("linear", "log10")

#: Unit-cube coordinate assigned to conditionally inactive parameters.
INACTIVE_COORD = 1.0

#: Refined numeric bounds never shrink below this fraction of the originally
#: declared transformed range.
SPAN_FLOOR_FRACTION = 0.05

Config = dict[str, Any]
Configuration = Config


class SpaceError(ValueError):
    """Malformed parameter, condition, or space declaration."""


class InsufficientElitesError(ValueError):
    """The elite quantile selects no trials, so refinement has nothing to work with."""


# ---------------------------------------------------------------------------
# declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    """One tunable parameter.

    ``low``/``high`` bound continuous and integer parameters on their native
    scale; categorical parameters carry an ordered ``choices`` tuple instead.
    ``min_span`` is stamped by :func:`refine` the first time bounds shrink and
    records the narrowest transformed width refinement may ever produce
    (a fraction of the originally declared range), so repeated refinement
    cannot collapse a parameter to a point.
    """

    name: str
    kind: str
    low: float | int | None = None
    high: float | int | None = None
    choices: tuple[Any, ...] | None = None
    scale: str = "linear"
    resolution_coupled: bool = False
    min_span: float | None = None

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise SpaceError("parameter name must be a non-empty string")
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.choices:
                raise SpaceError(f"{self.name}: choice list must be non-empty")
            if len(set(self.choices)) != len(self.choices):
                raise SpaceError(f"{self.name}: choices must be unique")
            if self.low is not None or self.high is not None:
                raise SpaceError(f"{self.name}: categorical parameters take choices, not bounds")
            object.__setattr__(self, "choices", tuple(self.choices))
            return
        if self.choices is not None:
            raise SpaceError(f"{self.name}: only categorical parameters take choices")
        if self.low is None or self.high is None:
            raise SpaceError(f"{self.name}: numeric parameters need low and high bounds")
        if not (self.low < self.high):
            raise SpaceError(f"{self.name}: low must be strictly below high")
        if self.scale not in SCALES:
            raise SpaceError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == "log10" and self.low <= 0:
            raise SpaceError(f"{self.name}: log10 scale requires low > 0")
        if self.kind == "integer":
            if int(self.low) != self.low or int(self.high) != self.high:
                raise SpaceError(f"{self.name}: integer bounds must be integers")
            object.__setattr__(self, "low", int(self.low))
            object.__setattr__(self, "high", int(self.high))

    # -- scale helpers ------------------------------------------------------

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("continuous", "integer")

    def transform(self, value: float) -> float:
        """Native value -> transformed scale (log10 where declared)."""
        return math.log10(value) if self.scale == "log10" else float(value)

    def untransform(self, t: float) -> float:
        return 10.0**t if self.scale == "log10" else float(t)

    def transformed_bounds(self) -> tuple[float, float]:
        return self.transform(self.low), self.transform(self.high)

    def to_unit(self, value: Any) -> float:
        """Map an active value onto [0, 1]."""
        if self.kind == "categorical":
            return (self.choices.index(value) + 0.5) / len(self.choices)
        t_lo, t_hi = self.transformed_bounds()
        return (self.transform(value) - t_lo) / (t_hi - t_lo)

    def from_unit(self, u: float) -> Any:
        """Inverse of :meth:`to_unit`, clipping into the declared domain."""
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == "categorical":
            k = len(self.choices)
            return self.choices[min(int(u * k), k - 1)]
        t_lo, t_hi = self.transformed_bounds()
        v = self.untransform(t_lo + u * (t_hi - t_lo))
        if self.kind == "integer":
            return min(max(int(round(v)), self.low), self.high)
        return min(max(v, self.low), self.high)

    def contains(self, value: Any) -> bool:
        if self.kind == "categorical":
            return value in self.choices
        return self.low <= value <= self.high

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            doc["choices"] = list(self.choices)
        else:
            doc["low"] = self.low
            doc["high"] = self.high
            doc["scale"] = self.scale
        if self.resolution_coupled:
            doc["resolution_coupled"] = True
        if self.min_span is not None:
            doc["min_span"] = self.min_span
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "ParamSpec":
        return cls(
            name=doc["name"],
            kind=doc["kind"],
            low=doc.get("low"),
            high=doc.get("high"),
            choices=tuple(doc["choices"]) if "choices" in doc else None,
            scale=doc.get("scale", "linear"),
            resolution_coupled=bool(doc.get("resolution_coupled", False)),
            min_span=doc.get("min_span"),
        )


@dataclass(frozen=True)
class When:
    """Activation predicate over a parent's value: set membership or threshold."""

    op: str  # "in" | "ge" | "le"
    values: tuple[Any, ...] | None = None
    value: float | None = None

    def __post_init__(self) -> None:
        if self.op == "in":
            if not self.values:
                raise SpaceError("'in' predicate needs a non-empty value set")
            object.__setattr__(self, "values", tuple(self.values))
        elif self.op in ("ge", "le"):
            if self.value is None:
                raise SpaceError(f"{self.op!r} predicate needs a threshold value")
        else:
            raise SpaceError(f"unknown predicate op {self.op!r}")

    def matches(self, parent_value: Any) -> bool:
        if self.op == "in":
            return parent_value in self.values
        if self.op == "ge":
            return parent_value >= self.value
        return parent_value <= self.value

    def matches_array(self, parent_values: np.ndarray) -> np.ndarray:
        if self.op == "in":
            return np.isin(parent_values, np.asarray(self.values))
        if self.op == "ge":
            return parent_values >= self.value
        return parent_values <= self.value

    def to_json(self) -> dict:
        if self.op == "in":
            return {"op": "in", "values": list(self.values)}
        return {"op": self.op, "value": self.value}

    @classmethod
    def from_json(cls, doc: Mapping) -> "When":
        return cls(op=doc["op"], values=tuple(doc.get("values", ())) or None, value=doc.get("value"))


@dataclass(frozen=True)
class Condition:
    """``child`` is active exactly when ``when`` holds for the parent's value."""

    child: str
    parent: str
    when: When

    def to_json(self) -> dict:
        return {"child": self.child, "parent": self.parent, "when": self.when.to_json()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Condition":
        return cls(child=doc["child"], parent=doc["parent"], when=When.from_json(doc["when"]))


@dataclass(frozen=True)
class SearchSpace:
    """Ordered parameters plus an acyclic one-condition-per-child graph."""

    params: tuple[ParamSpec, ...]
    conditions: tuple[Condition, ...] = ()
    _by_name: dict = field(init=False, repr=False, compare=False)
    _cond_by_child: dict = field(init=False, repr=False, compare=False)
    _topo: tuple[str, ...] = field(init=False, repr=False, compare=False)
    _names: tuple[str, ...] = field(init=False, repr=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceError("parameter names must be unique")
        by_name = {p.name: p for p in self.params}
        cond_by_child: dict[str, Condition] = {}
        for c in self.conditions:
            if c.child not in by_name or c.parent not in by_name:
                raise SpaceError(f"condition references unknown parameter: {c.child} <- {c.parent}")
            if c.child == c.parent:
                raise SpaceError(f"{c.child}: parameter cannot condition itself")
            if c.child in cond_by_child:
                raise SpaceError(f"{c.child}: a child takes at most one condition")
            cond_by_child[c.child] = c
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_cond_by_child", cond_by_child)
        object.__setattr__(self, "_topo", self._topological_order(names, cond_by_child))
        object.__setattr__(self, "_names", tuple(names))
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @staticmethod
    def _topological_order(names: list[str], conds: dict[str, Condition]) -> tuple[str, ...]:
        remaining = dict(conds)
        placed: list[str] = []
        seen: set[str] = set()
        # Kahn's algorithm over the (sparse) condition edges, preserving
        # declaration order among simultaneously ready parameters.
        while len(placed) < len(names):
            progressed = False
            for n in names:
                if n in seen:
                    continue
                c = remaining.get(n)
                if c is None or c.parent in seen:
                    placed.append(n)
                    seen.add(n)
                    progressed = True
            if not progressed:
                raise SpaceError("condition graph contains a cycle")
        return tuple(placed)

    # -- accessors ----------------------------------------------------------

    @property
    def dimensionality(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._topo

    def param(self, name: str) -> ParamSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SpaceError(f"unknown parameter {name!r}") from None

    def index(self, name: str) -> int:
        return self._index[name]

    def condition_for(self, name: str) -> Condition | None:
        return self._cond_by_child.get(name)

    def is_active(self, name: str, values: Mapping[str, Any]) -> bool:
        """Whether ``name`` is active given the parent values present in ``values``."""
        cond = self._cond_by_child.get(name)
        if cond is None:
            return True
        if cond.parent not in values:
            return False
        return cond.when.matches(values[cond.parent])

    def with_resolution(self, resolution: int) -> "SearchSpace":
        """Re-derive resolution-coupled integer bounds for a new input resolution."""
        out = []
        for p in self.params:
            if p.resolution_coupled and p.kind == "integer":
                high = max_conv_layers(resolution)
                if high <= p.low:
                    raise SpaceError(
                        f"{p.name}: resolution {resolution} admits at most {high} "
                        f"levels, below the declared minimum {p.low}"
                    )
                out.append(replace(p, high=high))
            else:
                out.append(p)
        return SearchSpace(tuple(out), self.conditions)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "params": [p.to_json() for p in self.params],
            "conditions": [c.to_json() for c in self.conditions],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "SearchSpace":
        return cls(
            params=tuple(ParamSpec.from_json(p) for p in doc["params"]),
            conditions=tuple(Condition.from_json(c) for c in doc.get("conditions", ())),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SearchSpace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _draw(p: ParamSpec, rng: np.random.Generator) -> Any:
    if p.kind == "categorical":
        return p.choices[int(rng.integers(0, len(p.choices)))]
    if p.kind == "integer":
        if p.scale == "log10":
            v = int(round(10.0 ** rng.uniform(math.log10(p.low), math.log10(p.high))))
            return min(max(v, p.low), p.high)
        return int(rng.integers(p.low, p.high + 1))
    if p.scale == "log10":
        return float(10.0 ** rng.uniform(math.log10(p.low), math.log10(p.high)))
    return float(rng.uniform(p.low, p.high))


def sample(space: SearchSpace, rng: np.random.Generator) -> Config:
    """Draw one configuration: uniform on each parameter's transformed scale,
    parents drawn before children so activity is settled first."""
    values: Config = {}
    for name in space.topological_order:
        if space.is_active(name, values):
            values[name] = _draw(space.param(name), rng)
    return values


def sample_columns(
    space: SearchSpace, rng: np.random.Generator, n: int
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], np.ndarray]:
    """Vectorized batch sampling.

    Returns per-parameter value columns, per-parameter activity masks, and the
    (n, d) unit-cube encoding. Columns hold draws for every row; the mask says
    which rows actually carry the parameter. Used where many candidate
    configurations are needed but only a few are ever materialized as dicts.
    """
    cols: dict[str, np.ndarray] = {}
    masks: dict[str, np.ndarray] = {}
    X = np.full((n, space.dimensionality), INACTIVE_COORD)
    for name in space.topological_order:
        p = space.param(name)
        cond = space.condition_for(name)
        if cond is None:
            mask = np.ones(n, dtype=bool)
        else:
            mask = masks[cond.parent] & cond.when.matches_array(cols[cond.parent])
        if p.kind == "categorical":
            idx = rng.integers(0, len(p.choices), size=n)
            vals = np.asarray(p.choices, dtype=object)[idx]
            unit = (idx + 0.5) / len(p.choices)
        elif p.kind == "integer":
            t_lo, t_hi = p.transformed_bounds()
            if p.scale == "log10":
                vals = np.clip(np.round(10.0 ** rng.uniform(t_lo, t_hi, size=n)), p.low, p.high)
            else:
                vals = rng.integers(p.low, p.high + 1, size=n).astype(float)
            unit = (np.log10(vals) - t_lo) / (t_hi - t_lo) if p.scale == "log10" else (
                (vals - t_lo) / (t_hi - t_lo)
            )
        else:
            t_lo, t_hi = p.transformed_bounds()
            t = rng.uniform(t_lo, t_hi, size=n)
            vals = 10.0**t if p.scale == "log10" else t
            unit = (t - t_lo) / (t_hi - t_lo)
        cols[name] = vals
        masks[name] = mask
        j = space.index(name)
        X[mask, j] = unit[mask]
    return cols, masks, X


def materialize_row(
    space: SearchSpace, cols: Mapping[str, np.ndarray], masks: Mapping[str, np.ndarray], i: int
) -> Config:
    """Assemble row ``i`` of a :func:`sample_columns` batch into a configuration."""
    values: Config = {}
    for name in space.topological_order:
        if not masks[name][i]:
            continue
        p = space.param(name)
        v = cols[name][i]
        if p.kind == "integer":
            values[name] = int(v)
        elif p.kind == "continuous":
            values[name] = float(v)
        else:
            values[name] = as_native(v)
    return values


def sample_batch(space: SearchSpace, rng: np.random.Generator, n: int) -> list[Config]:
    cols, masks, _ = sample_columns(space, rng, n)
    return [materialize_row(space, cols, masks, i) for i in range(n)]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    param: str
    rule: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.param}: {self.rule} ({self.message})"


def validate(space: SearchSpace, config: Mapping[str, Any]) -> list[Violation]:
    """Check a configuration against the space; an empty list means ok."""
    violations: list[Violation] = []
    for name in config:
        if name not in space._by_name:
            violations.append(Violation(name, "unknown parameter", "not declared in the space"))
    for p in space.params:
        active = space.is_active(p.name, config)
        present = p.name in config
        if active and not present:
            violations.append(Violation(p.name, "missing parameter", "active but absent"))
            continue
        if not active and present:
            violations.append(
                Violation(p.name, "inactive parameter present", "conditions make it inactive")
            )
            continue
        if not present:
            continue
        v = config[p.name]
        if p.kind == "categorical":
            if v not in p.choices:
                violations.append(Violation(p.name, "not in choices", f"value {v!r}"))
        elif p.kind == "integer":
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                violations.append(Violation(p.name, "wrong type", f"expected integer, got {v!r}"))
            elif not (p.low <= v <= p.high):
                violations.append(
                    Violation(p.name, "out of bounds", f"{v!r} outside [{p.low}, {p.high}]")
                )
        else:
            if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
                violations.append(Violation(p.name, "wrong type", f"expected number, got {v!r}"))
            elif not math.isfinite(float(v)):
                violations.append(Violation(p.name, "wrong type", "non-finite value"))
            elif not (p.low <= v <= p.high):
                violations.append(
                    Violation(p.name, "out of bounds", f"{v!r} outside [{p.low}, {p.high}]")
                )
    return violations


def is_valid(space: SearchSpace, config: Mapping[str, Any]) -> bool:
    return not validate(space, config)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def encode(space: SearchSpace, config: Mapping[str, Any]) -> np.ndarray:
    """Unit-cube vector: affine on the transformed scale for numerics, bin
    midpoints for categoricals, the sentinel coordinate for inactive entries."""
    x = np.full(space.dimensionality, INACTIVE_COORD)
    for j, p in enumerate(space.params):
        if p.name in config:
            x[j] = p.to_unit(config[p.name])
    return x


def encode_batch(space: SearchSpace, configs: Sequence[Mapping[str, Any]]) -> np.ndarray:
    out = np.full((len(configs), space.dimensionality), INACTIVE_COORD)
    for i, cfg in enumerate(configs):
        for j, p in enumerate(space.params):
            if p.name in cfg:
                out[i, j] = p.to_unit(cfg[p.name])
    return out


def decode(space: SearchSpace, x: np.ndarray) -> Config:
    """Nearest valid configuration for a unit-cube point (activity re-derived
    from the decoded parents, coordinates of inactive parameters ignored)."""
    values: Config = {}
    for name in space.topological_order:
        if not space.is_active(name, values):
            continue
        p = space.param(name)
        values[name] = p.from_unit(float(x[space.index(name)]))
    return values


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------


def refine(space: SearchSpace, trials: Sequence, q: float, margin: float) -> SearchSpace:
    """Shrink the space around the best-``q`` quantile of ``trials``.

    Numeric bounds become the elite min/max on the transformed scale, expanded
    by ``margin`` times the observed span, clamped into the current bounds and
    never narrower than the span floor. Categorical choices keep exactly the
    values observed among active elites. Resolution-coupled parameters keep
    their bounds untouched; a parameter never active among elites is also left
    untouched. Trial objects need ``config``, ``objective`` and ``trial_id``.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {q}")
    if margin < 0.0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    usable = [t for t in trials if t.objective is not None and math.isfinite(t.objective)]
    n_elite = int(q * len(usable) + 1e-9)
    if n_elite <= 0:
        raise InsufficientElitesError(
            f"insufficient elites: quantile {q} of {len(usable)} usable trials selects none"
        )
    ranked = sorted(usable, key=lambda t: (t.objective, t.trial_id))
    elites = ranked[:n_elite]

    new_params: list[ParamSpec] = []
    for p in space.params:
        if p.resolution_coupled:
            new_params.append(p)
            continue
        observed = [t.config[p.name] for t in elites if p.name in t.config]
        if not observed:
            new_params.append(p)
            continue
        if p.kind == "categorical":
            seen = set(observed)
            kept = tuple(c for c in p.choices if c in seen)
            new_params.append(p if kept == p.choices else replace(p, choices=kept))
            continue
        t_lo, t_hi = p.transformed_bounds()
        floor_w = p.min_span if p.min_span is not None else SPAN_FLOOR_FRACTION * (t_hi - t_lo)
        tv = [p.transform(v) for v in observed]
        lo, hi = min(tv), max(tv)
        span = hi - lo
        lo = max(lo - margin * span, t_lo)
        hi = min(hi + margin * span, t_hi)
        if hi - lo < floor_w:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - 0.5 * floor_w, mid + 0.5 * floor_w
            if lo < t_lo:
                hi += t_lo - lo
                lo = t_lo
            if hi > t_hi:
                lo -= hi - t_hi
                hi = t_hi
            lo = max(lo, t_lo)
        new_low: float | int = p.untransform(lo)
        new_high: float | int = p.untransform(hi)
        if p.kind == "integer":
            new_low = max(int(math.floor(new_low)), p.low)
            new_high = min(int(math.ceil(new_high)), p.high)
            if new_low == new_high:  # keep low < high within the parent bounds
                if new_high < p.high:
                    new_high += 1
                else:
                    new_low -= 1
        if new_low == p.low and new_high == p.high:
            new_params.append(p)
        else:
            new_params.append(replace(p, low=new_low, high=new_high, min_span=floor_w))
    return SearchSpace(tuple(new_params), space.conditions)


# ---------------------------------------------------------------------------
# resolution coupling
# ---------------------------------------------------------------------------


def max_conv_layers(resolution: int) -> int:
    """Largest number of halving (pooling) steps that keeps at least 2 pixels
    per side: the unique L with resolution / 2**L >= 2 > resolution / 2**(L+1)."""
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    r = int(resolution)
    count = 0
    while r >= 4:
        r //= 2
        count += 1
    return count


# ---------------------------------------------------------------------------
# default CNN space
# ---------------------------------------------------------------------------


def build_cnn_space(resolution: int, max_resolution: int | None = None) -> SearchSpace:
    """The default convolutional-network space.

    Layer count is resolution-coupled: its upper bound is the pooling depth at
    ``resolution``. Per-layer parameters are declared up to the depth allowed
    at ``max_resolution`` (the largest fidelity a campaign will reach) so the
    parameter roster stays fixed while the layer-count bound moves.
    """
    depth_here = max_conv_layers(resolution)
    if depth_here < 2:
        raise SpaceError(f"resolution {resolution} leaves no room for a layer-count range")
    depth_all = max(depth_here, max_conv_layers(max_resolution) if max_resolution else 0)

    params: list[ParamSpec] = [
        ParamSpec("learning_rate", "continuous", low=1e-5, high=1.0, scale="log10"),
        ParamSpec("n_conv", "integer", low=1, high=depth_here, resolution_coupled=True),
        ParamSpec("n_fc", "integer", low=1, high=3),
    ]
    conditions: list[Condition] = []
    for i in range(1, depth_all + 1):
        params.append(ParamSpec(f"filters_{i}", "integer", low=8, high=128, scale="log10"))
        params.append(ParamSpec(f"kernel_{i}", "categorical", choices=(3, 5, 7)))
        if i >= 2:
            when = When(op="ge", value=i)
            conditions.append(Condition(child=f"filters_{i}", parent="n_conv", when=when))
            conditions.append(Condition(child=f"kernel_{i}", parent="n_conv", when=when))
    for j in range(1, 4):
        params.append(ParamSpec(f"units_{j}", "integer", low=16, high=512, scale="log10"))
        if j >= 2:
            conditions.append(Condition(child=f"units_{j}", parent="n_fc", when=When(op="ge", value=j)))
    params.append(ParamSpec("batch_size", "categorical", choices=(16, 32, 64, 128, 256)))
    params.append(ParamSpec("l1", "continuous", low=1e-7, high=1e-2, scale="log10"))
    params.append(ParamSpec("l2", "continuous", low=1e-7, high=1e-2, scale="log10"))
    return SearchSpace(tuple(params), tuple(conditions))
