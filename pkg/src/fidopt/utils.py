"""Shared helpers: seed derivation, canonical JSON, rounding."""

from __future__ import annotations

import json
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

import numpy as np

_MASK32 = 0xFFFFFFFF


def spawn_rng(*keys: int) -> np.random.Generator:
    """Derive an independent generator from a tuple of integer keys.

    Equal keys always yield the same stream regardless of when or where the
    generator is created; all reproducibility guarantees rest on this.
    """
    return np.random.default_rng(np.random.SeedSequence([int(k) & _MASK32 for k in keys]))


def derive_seed(*keys: int) -> int:
    """Collapse a key tuple into a single 32-bit seed (loggable, replayable)."""
    ss = np.random.SeedSequence([int(k) & _MASK32 for k in keys])
    return int(ss.generate_state(1, np.uint32)[0])


def round_half_up(x: float) -> int:
    """Round to the nearest integer with ties going away from zero."""
    return int(Decimal(repr(float(x))).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def canonical_json(obj: Any) -> str:
    """Compact JSON with sorted keys; the log/checkpoint serialization."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def as_native(value: Any) -> Any:
    """Convert numpy scalars to plain Python so configs hash, compare and dump cleanly."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.str_):
        return str(value)
    return value
