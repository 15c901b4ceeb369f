"""Durable trial logs and campaign checkpoints.

The log is one JSON document per line, append-only, written with canonical
key order and full float precision so a resumed campaign can reproduce the
file byte for byte. Checkpoints are small snapshot documents carrying their
own content digest plus a digest over the log prefix they describe.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from .space import Config
from .utils import canonical_json

LOG_FIELDS = (
    "trial_id",
    "stage",
    "fidelity",
    "config",
    "objective",
    "cost_minutes",
    "cum_cost_minutes",
    "status",
    "seed",
    "ts",
)


class LogSequenceError(ValueError):
    """Trial ids must increase by exactly one."""


class LogCorruptionError(ValueError):
    """A non-final log line failed to parse."""


class CheckpointError(ValueError):
    """Checkpoint missing, corrupt, or inconsistent with its log."""


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    stage: int
    fidelity: float
    config: Config
    objective: float | None
    cost_minutes: float
    cum_cost_minutes: float
    status: str
    seed: int
    ts: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_line(self) -> str:
        return canonical_json(
            {
                "trial_id": self.trial_id,
                "stage": self.stage,
                "fidelity": self.fidelity,
                "config": self.config,
                "objective": self.objective,
                "cost_minutes": self.cost_minutes,
                "cum_cost_minutes": self.cum_cost_minutes,
                "status": self.status,
                "seed": self.seed,
                "ts": self.ts,
            }
        )

    @classmethod
    def from_doc(cls, doc: dict) -> "TrialRecord":
        return cls(
            trial_id=int(doc["trial_id"]),
            stage=int(doc["stage"]),
            fidelity=doc["fidelity"],
            config=dict(doc["config"]),
            objective=doc["objective"],
            cost_minutes=float(doc["cost_minutes"]),
            cum_cost_minutes=float(doc["cum_cost_minutes"]),
            status=str(doc["status"]),
            seed=int(doc["seed"]),
            ts=float(doc["ts"]),
        )


def _parse_lines(raw: bytes, tolerate_torn_tail: bool) -> tuple[list[TrialRecord], int]:
    """Parse log bytes; returns (records, byte length of the valid prefix)."""
    records: list[TrialRecord] = []
    offset = 0
    lines = raw.split(b"\n")
    for i, line in enumerate(lines):
        is_last = i == len(lines) - 1
        if line == b"" and is_last:
            break
        torn = is_last  # missing trailing newline means the write was cut
        try:
            doc = json.loads(line)
            rec = TrialRecord.from_doc(doc)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            if torn and tolerate_torn_tail:
                break
            raise LogCorruptionError(f"log line {i + 1} is not a valid trial record")
        if torn:
            if tolerate_torn_tail:
                break
            raise LogCorruptionError("log ends in an unterminated line")
        if records and rec.trial_id != records[-1].trial_id + 1:
            raise LogSequenceError(
                f"trial id {rec.trial_id} follows {records[-1].trial_id}"
            )
        records.append(rec)
        offset += len(line) + 1
    return records, offset


def read_records(path) -> list[TrialRecord]:
    """Load a trial log, ignoring a torn final line."""
    raw = Path(path).read_bytes()
    records, _ = _parse_lines(raw, tolerate_torn_tail=True)
    return records


class TrialLog:
    """Single-writer append-only log.

    Opening an existing file recovers it: valid leading records are kept and
    an unterminated final line (a crash artifact) is truncated away.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._fh = None
        self._digest = hashlib.sha256()
        self.records: list[TrialRecord] = []
        if self.path.exists():
            raw = self.path.read_bytes()
            self.records, keep = _parse_lines(raw, tolerate_torn_tail=True)
            if keep != len(raw):
                with open(self.path, "r+b") as fh:
                    fh.truncate(keep)
            self._digest.update(raw[:keep])
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def digest_hex(self) -> str:
        return self._digest.hexdigest()

    def append(self, record: TrialRecord) -> None:
        expected = self.records[-1].trial_id + 1 if self.records else 1
        if record.trial_id != expected:
            raise LogSequenceError(f"expected trial id {expected}, got {record.trial_id}")
        data = record.to_line().encode() + b"\n"
        if self._fh is None:
            self._fh = open(self.path, "ab")
        self._fh.write(data)
        self._fh.flush()
        self._digest.update(data)
        self.records.append(record)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "TrialLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def digest_of_prefix(path, n_records: int) -> str:
    """SHA-256 over the first ``n_records`` lines (bytes, newline included)."""
    h = hashlib.sha256()
    seen = 0
    with open(path, "rb") as fh:
        for line in fh:
            if seen >= n_records:
                break
            h.update(line)
            seen += 1
    if seen < n_records:
        raise CheckpointError(f"log holds {seen} records, checkpoint expects {n_records}")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    config_doc: dict
    trial_count: int
    stage_index: int
    cum_cost_minutes: float
    log_digest: str

    def payload(self) -> dict:
        return {
            "version": 1,
            "config": self.config_doc,
            "trial_count": self.trial_count,
            "stage_index": self.stage_index,
            "cum_cost_minutes": self.cum_cost_minutes,
            "log_digest": self.log_digest,
        }

    def save(self, path) -> None:
        payload = self.payload()
        digest = hashlib.sha256(canonical_json(payload).encode()).hexdigest()
        doc = {"payload": payload, "digest": digest}
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(canonical_json(doc) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            payload = doc["payload"]
            digest = doc["digest"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
        expect = hashlib.sha256(canonical_json(payload).encode()).hexdigest()
        if digest != expect:
            raise CheckpointError("checkpoint content digest mismatch")
        if payload.get("version") != 1:
            raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
        return cls(
            config_doc=payload["config"],
            trial_count=int(payload["trial_count"]),
            stage_index=int(payload["stage_index"]),
            cum_cost_minutes=float(payload["cum_cost_minutes"]),
            log_digest=str(payload["log_digest"]),
        )
