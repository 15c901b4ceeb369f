"""Objective functions.

Two deterministic synthetic benchmarks (a network-training mimic whose
landscape sharpens as fidelity grows, and a two-dimensional quadratic), plus
a line-delimited JSON client for external trainer processes. The mimic's
formula and coefficients are normative: every test that asserts objective
values derives them from the expressions here.
"""

from __future__ import annotations

import json
import math
import os
import select
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

from .space import Config, ParamSpec, SearchSpace, max_conv_layers
from .utils import canonical_json

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class TrialRequest:
    trial_id: int
    config: Config
    fidelity: float
    seed: int


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    objective: float | None
    cost_minutes: float
    status: str  # "ok" | "failed"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _failed(req: TrialRequest, message: str) -> TrialResult:
    return TrialResult(req.trial_id, None, 0.0, "failed", message)


# ---------------------------------------------------------------------------
# network-training mimic
# ---------------------------------------------------------------------------

# canonical encodings used by the mimic, matching the default space bounds
_LR_LOG_LOW, _LR_LOG_SPAN = -5.0, 5.0
_FILT_LOG_LOW = math.log10(8.0)
_FILT_LOG_SPAN = math.log10(128.0) - math.log10(8.0)
_L2_LOG_LOW, _L2_LOG_SPAN = -7.0, 5.0


def mimic_objective(config: Config, fidelity: float, seed: int, noise_sigma: float = 0.01) -> float:
    """Deterministic validation-error stand-in.

    Best at a learning rate of 10**-1.5, one dense layer, a convolution depth
    that tracks the input resolution, mid-range filter counts and mid-range
    weight decay; a bias term shrinking as 0.30 * (32 / fidelity) makes low
    fidelities systematically pessimistic while preserving ranking.
    """
    u_lr = (math.log10(config["learning_rate"]) - _LR_LOG_LOW) / _LR_LOG_SPAN
    n_conv = config["n_conv"]
    n_fc = config["n_fc"]
    depth = max_conv_layers(int(fidelity))
    opt_conv = math.log2(fidelity) - 3.0
    filt = [
        (math.log10(config[f"filters_{i}"]) - _FILT_LOG_LOW) / _FILT_LOG_SPAN
        for i in range(1, n_conv + 1)
        if f"filters_{i}" in config
    ]
    filt_term = 0.05 * (sum((f - 0.6) ** 2 for f in filt) / len(filt)) if filt else 0.0
    u_l2 = (math.log10(config["l2"]) - _L2_LOG_LOW) / _L2_LOG_SPAN
    noise = float(np.random.default_rng(seed).normal(0.0, noise_sigma)) if noise_sigma > 0 else 0.0
    return (
        0.20
        + 0.50 * (u_lr - 0.7) ** 2
        + 0.15 * abs(n_conv - opt_conv) / depth
        + 0.10 * ((n_fc - 1) / 2.0) ** 2
        + filt_term
        + 0.04 * (u_l2 - 0.5) ** 2
        + 0.30 * (32.0 / fidelity)
        + noise
    )


def mimic_cost(config: Config, fidelity: float) -> float:
    """Simulated training minutes; quadratic in resolution."""
    return (fidelity / 32.0) ** 2 * (1.0 + 0.1 * config["n_conv"] + 0.05 * config["n_fc"])


class CnnMimicEvaluator:
    """Pure-function benchmark shaped like small-image network training."""

    name = "cnn_mimic"
    simulated = True

    def __init__(self, noise_sigma: float = 0.01):
        self.noise_sigma = float(noise_sigma)

    def evaluate(self, req: TrialRequest) -> TrialResult:
        try:
            objective = mimic_objective(req.config, req.fidelity, req.seed, self.noise_sigma)
            cost = mimic_cost(req.config, req.fidelity)
        except (KeyError, TypeError, ValueError) as e:
            return _failed(req, f"invalid configuration: {e!r}")
        return TrialResult(req.trial_id, objective, cost, "ok")

    def evaluate_batch(self, reqs: list[TrialRequest]) -> list[TrialResult]:
        return [self.evaluate(r) for r in reqs]

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# two-dimensional quadratic
# ---------------------------------------------------------------------------


def build_quadratic_space() -> SearchSpace:
    return SearchSpace(
        (
            ParamSpec("x1", "continuous", low=0.0, high=1.0),
            ParamSpec("x2", "continuous", low=0.0, high=1.0),
        )
    )


class QuadraticEvaluator:
    """Sum of squared offsets from 0.3 with a fidelity-fading asymmetry bias."""

    name = "quadratic"
    simulated = True

    def __init__(self, fid_max: float = 1.0, noise_sigma: float = 0.005):
        self.fid_max = float(fid_max)
        self.noise_sigma = float(noise_sigma)

    def evaluate(self, req: TrialRequest) -> TrialResult:
        cfg = req.config
        if set(cfg) != {"x1", "x2"}:
            return _failed(req, f"expected exactly x1 and x2, got {sorted(cfg)}")
        x1, x2 = float(cfg["x1"]), float(cfg["x2"])
        bias = 0.5 * (1.0 - req.fidelity / self.fid_max) * abs(x1 - x2)
        noise = (
            float(np.random.default_rng(req.seed).normal(0.0, self.noise_sigma))
            if self.noise_sigma > 0
            else 0.0
        )
        objective = (x1 - 0.3) ** 2 + (x2 - 0.3) ** 2 + bias + noise
        return TrialResult(req.trial_id, objective, (req.fidelity / self.fid_max) ** 2, "ok")

    def evaluate_batch(self, reqs: list[TrialRequest]) -> list[TrialResult]:
        return [self.evaluate(r) for r in reqs]

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# external worker protocol
# ---------------------------------------------------------------------------


class WorkerProtocolError(RuntimeError):
    pass


class WorkerTimeoutError(WorkerProtocolError):
    pass


class WorkerHandle:
    """One child process speaking line-delimited JSON on stdin/stdout.

    Single request in flight; the handshake line must arrive before the first
    request goes out.
    """

    def __init__(self, cmd: list[str], timeout_s: float = 60.0):
        self.cmd = list(cmd)
        self.timeout_s = float(timeout_s)
        self.worker_name = ""
        self._proc: subprocess.Popen | None = None
        self._buf = b""

    def start(self) -> None:
        self._buf = b""
        try:
            stderr_fd = sys.stderr.fileno()
        except (AttributeError, OSError, ValueError):
            stderr_fd = None
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=stderr_fd,
        )
        hello = self._read_doc(self.timeout_s)
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise WorkerProtocolError(f"bad handshake: {hello!r}")
        self.worker_name = str(hello.get("name", ""))

    @property
    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _read_line(self, timeout_s: float) -> bytes:
        deadline = time.monotonic() + timeout_s
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise WorkerTimeoutError(f"no response within {timeout_s:.1f}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise WorkerProtocolError("worker closed its output")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _read_doc(self, timeout_s: float) -> dict:
        line = self._read_line(timeout_s)
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise WorkerProtocolError(f"malformed line from worker: {line[:200]!r}") from e
        if not isinstance(doc, dict):
            raise WorkerProtocolError(f"expected a JSON object, got {type(doc).__name__}")
        return doc

    def request(self, req: TrialRequest) -> TrialResult:
        if not self.alive:
            raise WorkerProtocolError("worker process is not running")
        doc = {
            "trial_id": int(req.trial_id),
            "fidelity": req.fidelity,
            "seed": int(req.seed),
            "config": req.config,
        }
        self._proc.stdin.write(canonical_json(doc).encode() + b"\n")
        self._proc.stdin.flush()
        resp = self._read_doc(self.timeout_s)
        if resp.get("trial_id") != req.trial_id:
            raise WorkerProtocolError(
                f"trial id mismatch: sent {req.trial_id}, got {resp.get('trial_id')!r}"
            )
        status = resp.get("status")
        if status == "ok":
            objective = float(resp["objective"])
            cost = float(resp.get("cost_minutes", 0.0))
            if not math.isfinite(objective):
                raise WorkerProtocolError("ok response with non-finite objective")
            return TrialResult(req.trial_id, objective, cost, "ok", str(resp.get("message", "")))
        if status == "failed":
            return TrialResult(
                req.trial_id,
                None,
                float(resp.get("cost_minutes", 0.0)),
                "failed",
                str(resp.get("message", "")),
            )
        raise WorkerProtocolError(f"unknown status {status!r}")

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()
            self._proc.wait()
        self._proc = None


class ExternalEvaluator:
    """Runs trials on external worker processes; one retry on a fresh worker."""

    name = "external"
    simulated = False

    def __init__(self, cmd: list[str], timeout_s: float = 60.0, workers: int = 1):
        self.cmd = list(cmd)
        self.timeout_s = float(timeout_s)
        self._handles: list[WorkerHandle] = [
            WorkerHandle(cmd, timeout_s) for _ in range(max(1, workers))
        ]

    def _attempt(self, handle: WorkerHandle, req: TrialRequest) -> TrialResult:
        if not handle.alive:
            handle.close()
            handle.start()
        return handle.request(req)

    def _evaluate_on(self, handle: WorkerHandle, req: TrialRequest) -> TrialResult:
        last_error = ""
        for attempt in range(2):
            try:
                return self._attempt(handle, req)
            except WorkerProtocolError as e:
                last_error = str(e)
                handle.close()  # a fresh process for the retry
        return _failed(req, f"worker failed twice: {last_error}")

    def evaluate(self, req: TrialRequest) -> TrialResult:
        return self._evaluate_on(self._handles[0], req)

    def evaluate_batch(self, reqs: list[TrialRequest]) -> list[TrialResult]:
        if len(self._handles) == 1 or len(reqs) == 1:
            return [self.evaluate(r) for r in reqs]
        from concurrent.futures import ThreadPoolExecutor

        # each handle is single-in-flight: lane i serially works reqs[i::L]
        lanes = min(len(self._handles), len(reqs))

        def run_lane(lane: int) -> list[tuple[int, TrialResult]]:
            return [
                (j, self._evaluate_on(self._handles[lane], reqs[j]))
                for j in range(lane, len(reqs), lanes)
            ]

        results: dict[int, TrialResult] = {}
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            for fut in [pool.submit(run_lane, lane) for lane in range(lanes)]:
                for j, res in fut.result():
                    results[j] = res
        return [results[j] for j in range(len(reqs))]

    def close(self) -> None:
        for h in self._handles:
            h.close()
