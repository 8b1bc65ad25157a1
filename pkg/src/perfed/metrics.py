"""Relative test accuracy, round metrics, and structured log emission.

Round 0 always holds the local baselines, so every client's relative test
accuracy (federated accuracy divided by its own local baseline) starts at
exactly 1.0. Output files are rewritten atomically and contain no
timestamps, so re-emitting the same log is byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, UndefinedBaselineError

__all__ = [
    "ClientRound",
    "RoundMetrics",
    "MetricsLog",
    "relative_test_accuracy",
    "mean_rta",
    "emit_logs",
    "EVENT_PHASES",
]

EVENT_PHASES = ("init", "gan", "aggregate", "dispatch", "update", "eval")


@dataclass(frozen=True)
class ClientRound:
    client_id: int
    test_accuracy: float
    rta: float


@dataclass(frozen=True)
class RoundMetrics:
    """One round's record: per-client accuracy and relative accuracy,
    their mean, and the mean pairwise disagreement on the shared probe set."""

    round: int
    clients: tuple[ClientRound, ...]
    mrta: float
    mean_pairwise_disagreement: float


@dataclass
class MetricsLog:
    rounds: list[RoundMetrics] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def add_event(self, round_idx: int, phase: str, detail: dict):
        if phase not in EVENT_PHASES:
            raise ContractError(f"unknown phase {phase!r}")
        self.events.append({"round": round_idx, "phase": phase, "detail": detail})

    def final_mrta(self) -> float:
        if not self.rounds:
            raise ContractError("log holds no rounds")
        return self.rounds[-1].mrta


def relative_test_accuracy(fed_acc: float, local_acc: float) -> float:
    """Federated accuracy divided by the client's local baseline."""
    if not (0 <= fed_acc <= 1 and 0 <= local_acc <= 1):
        raise ContractError(f"accuracies must lie in [0, 1], got {fed_acc}, {local_acc}")
    if local_acc == 0:
        raise UndefinedBaselineError("local baseline accuracy is 0; relative accuracy undefined")
    return fed_acc / local_acc


def mean_rta(rtas) -> float:
    """Arithmetic mean via exact summation, so it is order-independent."""
    values = list(rtas)
    if not values:
        raise ContractError("mean_rta of an empty list")
    return math.fsum(values) / len(values)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".9g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_logs(log: MetricsLog, out_dir) -> list[Path]:
    """Write per_client.csv, summary.csv, and events.jsonl.

    Floats carry 9 significant digits. Files are replaced atomically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["round,client_id,test_accuracy,rta"]
    for rm in log.rounds:
        for cr in rm.clients:
            lines.append(
                f"{rm.round},{cr.client_id},{_fmt(cr.test_accuracy)},{_fmt(cr.rta)}"
            )
    per_client = out / "per_client.csv"
    _write_atomic(per_client, "\n".join(lines) + "\n")

    lines = ["round,mrta,mean_disagreement"]
    for rm in log.rounds:
        lines.append(f"{rm.round},{_fmt(rm.mrta)},{_fmt(rm.mean_pairwise_disagreement)}")
    summary = out / "summary.csv"
    _write_atomic(summary, "\n".join(lines) + "\n")

    events = out / "events.jsonl"
    payload = "".join(
        json.dumps(_round_floats(event), sort_keys=True) + "\n" for event in log.events
    )
    _write_atomic(events, payload)

    return [per_client, summary, events]
