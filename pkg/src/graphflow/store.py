"""Durable append-only persistence with workspace isolation.

Two backends behind one interface: in-memory for tests and simulation, and
file-per-run line-delimited records for serve mode. Run streams are strictly
append-only; a chained per-record hash makes tampering evident. Checkpoints,
resources, automations, and metric samples live in per-workspace namespaces.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from graphflow.events import (
    EventRecord,
    TERMINAL_KINDS,
    canonical_json,
    chain_hash,
    decode_value,
    encode_value,
    from_json_line,
    to_json_line,
)


class StoreError(Exception):
    pass


class WorkspaceUnknown(StoreError):
    pass


class RunUnknown(StoreError):
    pass


class TerminalRun(StoreError):
    """Append rejected: the run already has its terminal event."""


@dataclass
class Checkpoint:
    seq: int
    snapshot: dict


class EventStore:
    """Interface; see MemoryEventStore and FileEventStore."""

    # -- workspaces ---------------------------------------------------------
    def create_workspace(self, ws: str) -> None:
        raise NotImplementedError

    def has_workspace(self, ws: str) -> bool:
        raise NotImplementedError

    def list_workspaces(self) -> list[str]:
        raise NotImplementedError

    # -- run streams --------------------------------------------------------
    def append(
        self,
        ws: str,
        run_id: str,
        kind: str,
        payload: dict,
        node_id: str | None = None,
        idempotency_key: str | None = None,
        at: float = 0.0,
    ) -> EventRecord:
        raise NotImplementedError

    def read(self, ws: str, run_id: str, from_seq: int = 1) -> list[EventRecord]:
        raise NotImplementedError

    def run_exists(self, ws: str, run_id: str) -> bool:
        raise NotImplementedError

    def list_runs(self, ws: str) -> list[str]:
        raise NotImplementedError

    # -- checkpoints ---------------------------------------------------------
    def save_checkpoint(self, ws: str, run_id: str, seq: int, snapshot: dict) -> Checkpoint:
        raise NotImplementedError

    def latest_checkpoint(self, ws: str, run_id: str) -> Checkpoint | None:
        raise NotImplementedError

    # -- resources -----------------------------------------------------------
    def put_resource(self, ws: str, record: dict) -> None:
        raise NotImplementedError

    def load_resources(self, ws: str) -> list[dict]:
        raise NotImplementedError

    # -- automations ----------------------------------------------------------
    def put_automation(self, ws: str, slug: str, digest: str, record: dict) -> None:
        raise NotImplementedError

    def load_automations(self, ws: str) -> list[dict]:
        raise NotImplementedError

    # -- metric samples --------------------------------------------------------
    def append_metric_sample(self, ws: str, slug: str, sample: dict) -> None:
        raise NotImplementedError

    def read_metric_samples(self, ws: str, slug: str) -> list[dict]:
        raise NotImplementedError


def _check_appendable(records: list[EventRecord], kind: str) -> None:
    if records and records[-1].kind in TERMINAL_KINDS and kind != "CheckpointTaken":
        raise TerminalRun(f"run is terminal ({records[-1].kind})")


class MemoryEventStore(EventStore):
    """Dict-backed store for tests and simulation; per-workspace locking."""

    @dataclass
    class _Workspace:
        runs: dict[str, list[EventRecord]] = field(default_factory=dict)
        checkpoints: dict[str, list[Checkpoint]] = field(default_factory=dict)
        resources: dict[str, dict] = field(default_factory=dict)
        resource_order: list[str] = field(default_factory=list)
        automations: dict = field(default_factory=dict)
        metric_samples: dict[str, list[dict]] = field(default_factory=dict)

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._spaces: dict[str, MemoryEventStore._Workspace] = {}

    def _space(self, ws: str) -> "MemoryEventStore._Workspace":
        space = self._spaces.get(ws)
        if space is None:
            raise WorkspaceUnknown(ws)
        return space

    def create_workspace(self, ws: str) -> None:
        with self._lock:
            self._spaces.setdefault(ws, self._Workspace())

    def has_workspace(self, ws: str) -> bool:
        with self._lock:
            return ws in self._spaces

    def list_workspaces(self) -> list[str]:
        with self._lock:
            return sorted(self._spaces)

    def append(self, ws, run_id, kind, payload, node_id=None, idempotency_key=None, at=0.0):
        with self._lock:
            space = self._space(ws)
            records = space.runs.setdefault(run_id, [])
            _check_appendable(records, kind)
            prev_chain = records[-1].chain if records else None
            seq = len(records) + 1
            body = canonical_json({"seq": seq, "run": run_id, "kind": kind, "payload": payload})
            ev = EventRecord(
                seq=seq,
                run_id=run_id,
                at=at,
                node_id=node_id,
                kind=kind,
                payload=payload,
                idempotency_key=idempotency_key,
                chain=chain_hash(prev_chain, body),
            )
            records.append(ev)
            return ev

    def read(self, ws, run_id, from_seq=1):
        with self._lock:
            space = self._space(ws)
            if run_id not in space.runs:
                raise RunUnknown(run_id)
            return [e for e in space.runs[run_id] if e.seq >= from_seq]

    def run_exists(self, ws, run_id):
        with self._lock:
            return run_id in self._space(ws).runs

    def list_runs(self, ws):
        with self._lock:
            return list(self._space(ws).runs)

    def save_checkpoint(self, ws, run_id, seq, snapshot):
        with self._lock:
            space = self._space(ws)
            if run_id not in space.runs:
                raise RunUnknown(run_id)
            cp = Checkpoint(seq, json.loads(canonical_json(snapshot)))
            space.checkpoints.setdefault(run_id, []).append(cp)
            return cp

    def latest_checkpoint(self, ws, run_id):
        with self._lock:
            cps = self._space(ws).checkpoints.get(run_id)
            if not cps:
                return None
            cp = cps[-1]
            return Checkpoint(cp.seq, decode_value(cp.snapshot))

    def put_resource(self, ws, record):
        with self._lock:
            space = self._space(ws)
            rid = record["id"]
            if rid not in space.resources:
                space.resource_order.append(rid)
            space.resources[rid] = json.loads(canonical_json(record))

    def load_resources(self, ws):
        with self._lock:
            space = self._space(ws)
            return [decode_value(space.resources[r]) for r in space.resource_order]

    def put_automation(self, ws, slug, digest, record):
        with self._lock:
            self._space(ws).automations[(slug, digest)] = json.loads(canonical_json(record))

    def load_automations(self, ws):
        with self._lock:
            return [decode_value(r) for r in self._space(ws).automations.values()]

    def append_metric_sample(self, ws, slug, sample):
        with self._lock:
            self._space(ws).metric_samples.setdefault(slug, []).append(
                json.loads(canonical_json(sample))
            )

    def read_metric_samples(self, ws, slug):
        with self._lock:
            return [decode_value(s) for s in self._space(ws).metric_samples.get(slug, [])]


class FileEventStore(EventStore):
    """File-backed store: `<root>/<ws>/runs/<run>.log` and friends.

    Appends write one JSON line, flush, and (by default) fsync before
    returning: an acknowledged append survives a process kill. Reopening a
    root rebuilds every index from the files alone.
    """

    def __init__(self, root: str | Path, fsync: bool = True):
        self.root = Path(root)
        self.fsync = fsync
        self._lock = threading.RLock()
        self.root.mkdir(parents=True, exist_ok=True)
        # seq/chain tails per (ws, run): avoids re-reading files on append.
        self._tails: dict[tuple[str, str], tuple[int, str | None]] = {}
        self._terminal: set[tuple[str, str]] = set()

    # -- paths ----------------------------------------------------------------

    def _ws_dir(self, ws: str, must_exist: bool = True) -> Path:
        p = self.root / ws
        if must_exist and not p.is_dir():
            raise WorkspaceUnknown(ws)
        return p

    def _run_path(self, ws: str, run_id: str) -> Path:
        return self._ws_dir(ws) / "runs" / f"{run_id}.log"

    def create_workspace(self, ws):
        with self._lock:
            base = self.root / ws
            (base / "runs").mkdir(parents=True, exist_ok=True)
            (base / "automations").mkdir(exist_ok=True)
            (base / "metrics").mkdir(exist_ok=True)
            (base / "checkpoints").mkdir(exist_ok=True)

    def has_workspace(self, ws):
        return (self.root / ws).is_dir()

    def list_workspaces(self):
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def _append_line(self, path: Path, line: str) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())

    def _read_lines(self, path: Path) -> list[str]:
        if not path.exists():
            return []
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        out = []
        for i, line in enumerate(lines):
            try:
                json.loads(line)
                out.append(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1 and not text.endswith("\n"):
                    break  # torn final write: never acknowledged, drop it
                raise StoreError(f"corrupt record in {path} at line {i + 1}")
        return out

    def append(self, ws, run_id, kind, payload, node_id=None, idempotency_key=None, at=0.0):
        with self._lock:
            path = self._run_path(ws, run_id)
            key = (ws, run_id)
            if key not in self._tails:
                records = [from_json_line(l) for l in self._read_lines(path)]
                self._tails[key] = (
                    records[-1].seq if records else 0,
                    records[-1].chain if records else None,
                )
                if records and records[-1].terminal:
                    self._terminal.add(key)
            if key in self._terminal and kind != "CheckpointTaken":
                raise TerminalRun("run is terminal")
            last_seq, prev_chain = self._tails[key]
            seq = last_seq + 1
            body = canonical_json({"seq": seq, "run": run_id, "kind": kind, "payload": payload})
            ev = EventRecord(
                seq=seq,
                run_id=run_id,
                at=at,
                node_id=node_id,
                kind=kind,
                payload=payload,
                idempotency_key=idempotency_key,
                chain=chain_hash(prev_chain, body),
            )
            self._append_line(path, to_json_line(ev))
            self._tails[key] = (seq, ev.chain)
            if ev.terminal:
                self._terminal.add(key)
            return ev

    def read(self, ws, run_id, from_seq=1):
        with self._lock:
            path = self._run_path(ws, run_id)
            if not path.exists():
                raise RunUnknown(run_id)
            records = [from_json_line(l) for l in self._read_lines(path)]
            return [e for e in records if e.seq >= from_seq]

    def run_exists(self, ws, run_id):
        return self._run_path(ws, run_id).exists()

    def list_runs(self, ws):
        runs_dir = self._ws_dir(ws) / "runs"
        if not runs_dir.is_dir():
            return []
        return sorted(p.stem for p in runs_dir.glob("*.log"))

    def save_checkpoint(self, ws, run_id, seq, snapshot):
        with self._lock:
            if not self.run_exists(ws, run_id):
                raise RunUnknown(run_id)
            path = self._ws_dir(ws) / "checkpoints" / f"{run_id}.ckpt"
            line = json.dumps({"seq": seq, "snapshot": encode_value(snapshot)}, sort_keys=True)
            self._append_line(path, line)
            return Checkpoint(seq, snapshot)

    def latest_checkpoint(self, ws, run_id):
        path = self._ws_dir(ws) / "checkpoints" / f"{run_id}.ckpt"
        lines = self._read_lines(path)
        if not lines:
            return None
        body = json.loads(lines[-1])
        return Checkpoint(body["seq"], decode_value(body["snapshot"]))

    def put_resource(self, ws, record):
        with self._lock:
            path = self._ws_dir(ws) / "resources.db"
            self._append_line(path, json.dumps(encode_value(record), sort_keys=True))

    def load_resources(self, ws):
        path = self._ws_dir(ws) / "resources.db"
        latest: dict[str, dict] = {}
        order: list[str] = []
        for line in self._read_lines(path):
            record = decode_value(json.loads(line))
            rid = record["id"]
            if rid not in latest:
                order.append(rid)
            latest[rid] = record
        return [latest[r] for r in order]

    def put_automation(self, ws, slug, digest, record):
        with self._lock:
            path = self._ws_dir(ws) / "automations" / f"{slug}-{digest}"
            path.write_text(json.dumps(encode_value(record), sort_keys=True, indent=2), encoding="utf-8")

    def load_automations(self, ws):
        out = []
        auto_dir = self._ws_dir(ws) / "automations"
        if auto_dir.is_dir():
            for p in sorted(auto_dir.iterdir()):
                out.append(decode_value(json.loads(p.read_text(encoding="utf-8"))))
        return out

    def append_metric_sample(self, ws, slug, sample):
        with self._lock:
            path = self._ws_dir(ws) / "metrics" / f"{slug}.log"
            self._append_line(path, json.dumps(encode_value(sample), sort_keys=True))

    def read_metric_samples(self, ws, slug):
        path = self._ws_dir(ws) / "metrics" / f"{slug}.log"
        return [decode_value(json.loads(l)) for l in self._read_lines(path)]


def verify_chain(records: list[EventRecord]) -> bool:
    """Recompute the hash chain; True when every link matches."""
    prev: str | None = None
    for ev in records:
        body = canonical_json({"seq": ev.seq, "run": ev.run_id, "kind": ev.kind, "payload": ev.payload})
        if ev.chain != chain_hash(prev, body):
            return False
        prev = ev.chain
    return True
