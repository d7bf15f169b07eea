"""Event records: the only logic-visible outcome carrier besides initial state."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

from graphflow.predicates import Keyword

EVENT_KINDS = frozenset(
    {
        "RunStarted",
        "NodeEntered",
        "BoundaryOutcome",
        "DecisionEvaluated",
        "GuardChecked",
        "GuardViolated",
        "ListenerArmed",
        "SignalReceived",
        "TimerFired",
        "NodeCompleted",
        "RunCompleted",
        "RunErrored",
        "CheckpointTaken",
    }
)

TERMINAL_KINDS = frozenset({"RunCompleted", "RunErrored"})

# Field order is part of the on-disk contract.
FIELD_ORDER = ("seq", "run_id", "at", "node_id", "kind", "payload", "idempotency_key", "chain")


@dataclass(frozen=True)
class EventRecord:
    seq: int
    run_id: str
    at: float
    node_id: str | None
    kind: str
    payload: dict
    idempotency_key: str | None = None
    chain: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @property
    def terminal(self) -> bool:
        return self.kind in TERMINAL_KINDS


def encode_value(v: Any) -> Any:
    """JSON-safe encoding; keywords survive the round-trip."""
    if isinstance(v, Keyword):
        return {"__kw__": v.name}
    if isinstance(v, dict):
        return {k: encode_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [encode_value(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return sorted(encode_value(x) for x in v)
    return v


def decode_value(v: Any) -> Any:
    if isinstance(v, dict):
        if set(v.keys()) == {"__kw__"}:
            return Keyword(v["__kw__"])
        return {k: decode_value(x) for k, x in v.items()}
    if isinstance(v, list):
        return [decode_value(x) for x in v]
    return v


def canonical_json(v: Any) -> str:
    return json.dumps(encode_value(v), sort_keys=True, separators=(",", ":"))


def chain_hash(prev: str | None, record_body: str) -> str:
    h = hashlib.sha256()
    h.update((prev or "").encode("utf-8"))
    h.update(record_body.encode("utf-8"))
    return h.hexdigest()[:16]


def to_json_line(ev: EventRecord) -> str:
    body = {
        "seq": ev.seq,
        "run_id": ev.run_id,
        "at": ev.at,
        "node_id": ev.node_id,
        "kind": ev.kind,
        "payload": encode_value(ev.payload),
        "idempotency_key": ev.idempotency_key,
        "chain": ev.chain,
    }
    return json.dumps(body, separators=(",", ":"))


def from_json_line(line: str) -> EventRecord:
    body = json.loads(line)
    return EventRecord(
        seq=body["seq"],
        run_id=body["run_id"],
        at=body["at"],
        node_id=body.get("node_id"),
        kind=body["kind"],
        payload=decode_value(body.get("payload") or {}),
        idempotency_key=body.get("idempotency_key"),
        chain=body.get("chain"),
    )
