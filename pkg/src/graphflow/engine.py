"""Durable small-step runtime: append events, suspend on waits, replay.

One deterministic state machine drives everything. `apply_event` is the only
place run state changes; `next_action` derives the next intent from that
state. Live execution performs intents (invoking adapters, evaluating
conditions) and appends the resulting events; replay and crash-recovery feed
the logged events through the same fold, re-deriving pure computations and
cross-checking them against the log. External outcomes are never recomputed:
they come from BoundaryOutcome / SignalReceived / TimerFired payloads, and
replay never invokes an adapter.
"""

from __future__ import annotations

import copy
import hashlib
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

from graphflow.actions import WorkflowThrow, execute_builtin, is_pure_builtin
from graphflow.events import decode_value, encode_value
from graphflow.evaluator import initial_state
from graphflow.model import Diagram, Node, find_cycle, node_id_key, topological_order
from graphflow.predicates import (
    And,
    Compare,
    EvalError,
    Keyword,
    Predicate,
    ResourceContext,
    VarPath,
    WithTag,
    eval_predicate,
)
from graphflow.store import EventStore


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class EngineError(Exception):
    pass


class UnknownArtifact(EngineError):
    pass


class PreconditionViolation(EngineError):
    def __init__(self, failed: list[str], run_id: str):
        super().__init__(f"requires not satisfied: {', '.join(failed)}")
        self.failed = failed
        self.run_id = run_id


class SignalMismatch(EngineError):
    pass


class StaleSignal(EngineError):
    pass


class RetriesExhausted(EngineError):
    pass


class ReplayDivergence(EngineError):
    pass


class LogCorruption(EngineError):
    pass


class AdapterFailure(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    multiplier: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.base_delay * (self.multiplier ** max(0, attempt - 1))


@dataclass(frozen=True)
class GuardConfig:
    enforce_boundary_contracts: bool = False
    on_violation: str = "error"  # error | pause


class Clock:
    def now(self) -> float:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class WallClock(Clock):
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock(Clock):
    """Explicitly advanced clock: deterministic tests and fast simulation."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self._now += seconds

    def advance(self, seconds: float) -> None:
        self._now += seconds


# ---------------------------------------------------------------------------
# Adapters
# ---------------------------------------------------------------------------


class AdapterRegistry:
    """Boundary adapters by action keyword; counts every invocation."""

    def __init__(self) -> None:
        self._adapters: dict[str, Callable[[str, dict, str], Any]] = {}
        self._default: Callable[[str, dict, str], Any] | None = None
        self.invocations = 0

    def register(self, action: str, fn: Callable[[str, dict, str], Any]) -> None:
        self._adapters[action] = fn

    def register_default(self, fn: Callable[[str, dict, str], Any]) -> None:
        self._default = fn

    def invoke(self, action: str, args: dict, key: str) -> Any:
        self.invocations += 1
        fn = self._adapters.get(action, self._default)
        if fn is None:
            raise AdapterFailure(f"no adapter registered for :{action}")
        return fn(action, args, key)


class SimulatedAdapter:
    """Deterministic boundary simulation.

    `fault_schedule` is consumed one entry per invocation: True means the
    call succeeds, False raises. With `failure_rate` set, a seeded RNG
    decides instead. Results come from `result_fn(action, args, key)`.
    """

    def __init__(
        self,
        fault_schedule: list[bool] | None = None,
        failure_rate: float = 0.0,
        seed: int = 0,
        result_fn: Callable[[str, dict, str], Any] | None = None,
        failure_reason: str = "boundary unavailable",
    ):
        import random

        self.fault_schedule = list(fault_schedule) if fault_schedule else None
        self.failure_rate = failure_rate
        self.rng = random.Random(seed)
        self.result_fn = result_fn or self.default_result
        self.failure_reason = failure_reason
        self.calls = 0

    @staticmethod
    def default_result(action: str, args: dict, key: str) -> Any:
        return {"id": f"{action}-{key[:8]}", "ok": True}

    def __call__(self, action: str, args: dict, key: str) -> Any:
        self.calls += 1
        if self.fault_schedule is not None and self.fault_schedule:
            ok = self.fault_schedule.pop(0)
        elif self.failure_rate > 0:
            ok = self.rng.random() >= self.failure_rate
        else:
            ok = True
        if not ok:
            raise AdapterFailure(self.failure_reason)
        return self.result_fn(action, args, key)


# ---------------------------------------------------------------------------
# Artifact registry
# ---------------------------------------------------------------------------


class ArtifactRegistry:
    """Resolves run targets: admitted automations first, then raw diagrams."""

    def __init__(self, library=None):
        self.library = library
        self._diagrams: dict[str, Diagram] = {}

    def register_diagram(self, diagram: Diagram) -> None:
        self._diagrams[diagram.slug] = diagram

    def resolve(self, ref: str) -> tuple[str, str | None, Diagram]:
        if self.library is not None:
            auto = self.library.get(ref) or self.library.get_by_id(ref)
            if auto is not None:
                return auto.slug, auto.id, auto.diagram
        if ref in self._diagrams:
            return ref, None, self._diagrams[ref]
        raise UnknownArtifact(ref)


class StoreTagContext(ResourceContext):
    """with-tag oracle backed by the live resource store."""

    def __init__(self, resources):
        self.resources = resources

    def has_tag(self, resource: Any, tag: Keyword) -> bool:
        rid = resource.get("id") if isinstance(resource, dict) else resource
        if rid is None or self.resources is None:
            return False
        return self.resources.has_tag(rid, tag.name)


# ---------------------------------------------------------------------------
# Run state
# ---------------------------------------------------------------------------

RUNNING, WAITING, PAUSED, COMPLETED, ERRORED = (
    "running",
    "waiting",
    "paused",
    "completed",
    "errored",
)


@dataclass
class RunState:
    run_id: str
    workspace: str
    slug: str
    artifact_id: str | None
    diagram: Diagram
    status: str = RUNNING
    state: dict = field(default_factory=dict)
    cursor: str | None = None
    prog: dict = field(default_factory=dict)
    order: list[str] | None = None  # acyclic sequential order
    order_pos: int = 0
    frontier: list[str] = field(default_factory=list)  # cyclic mode
    executed: set = field(default_factory=set)
    taken_edges: set = field(default_factory=set)
    attempts: dict = field(default_factory=dict)  # node -> failed attempts
    retry_group: dict = field(default_factory=dict)  # node -> group
    idempotency: dict = field(default_factory=dict)  # key -> logged outcome
    bindings: dict = field(default_factory=dict)
    subject_id: str | None = None
    return_value: Any = None
    error: dict | None = None
    guard: GuardConfig = field(default_factory=GuardConfig)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    applied_seq: int = 0
    trace: list[str] = field(default_factory=list)

    @property
    def acyclic(self) -> bool:
        return self.order is not None

    @property
    def terminal(self) -> bool:
        return self.status in (COMPLETED, ERRORED)

    def listener(self) -> dict | None:
        return self.prog.get("listener")

    def to_snapshot(self) -> dict:
        return {
            "run_id": self.run_id,
            "workspace": self.workspace,
            "slug": self.slug,
            "artifact_id": self.artifact_id,
            "status": self.status,
            "state": encode_value(self.state),
            "cursor": self.cursor,
            "prog": encode_value(self.prog),
            "order": self.order,
            "order_pos": self.order_pos,
            "frontier": list(self.frontier),
            "executed": sorted(self.executed),
            "taken_edges": sorted([list(t) for t in self.taken_edges]),
            "attempts": dict(self.attempts),
            "retry_group": dict(self.retry_group),
            "idempotency": encode_value(self.idempotency),
            "bindings": dict(self.bindings),
            "subject_id": self.subject_id,
            "return_value": encode_value(self.return_value),
            "error": self.error,
            "guard": {"enforce": self.guard.enforce_boundary_contracts, "on_violation": self.guard.on_violation},
            "retry": {"max_attempts": self.retry.max_attempts, "base_delay": self.retry.base_delay, "multiplier": self.retry.multiplier},
            "applied_seq": self.applied_seq,
            "trace": list(self.trace),
        }

    @classmethod
    def from_snapshot(cls, snap: dict, diagram: Diagram) -> "RunState":
        run = cls(
            run_id=snap["run_id"],
            workspace=snap["workspace"],
            slug=snap["slug"],
            artifact_id=snap.get("artifact_id"),
            diagram=diagram,
            status=snap["status"],
            state=decode_value(snap["state"]),
            cursor=snap.get("cursor"),
            prog=decode_value(snap.get("prog") or {}),
            order=snap.get("order"),
            order_pos=snap.get("order_pos", 0),
            frontier=list(snap.get("frontier") or []),
            executed=set(snap.get("executed") or []),
            taken_edges={tuple(t) for t in snap.get("taken_edges") or []},
            attempts=dict(snap.get("attempts") or {}),
            retry_group=dict(snap.get("retry_group") or {}),
            idempotency=decode_value(snap.get("idempotency") or {}),
            bindings=dict(snap.get("bindings") or {}),
            subject_id=snap.get("subject_id"),
            return_value=decode_value(snap.get("return_value")),
            error=snap.get("error"),
            guard=GuardConfig(snap["guard"]["enforce"], snap["guard"]["on_violation"]),
            retry=RetryPolicy(
                snap["retry"]["max_attempts"], snap["retry"]["base_delay"], snap["retry"]["multiplier"]
            ),
            applied_seq=snap.get("applied_seq", 0),
            trace=list(snap.get("trace") or []),
        )
        return run


@dataclass
class ReplayResult:
    run: RunState
    trace: list[str]
    return_value: Any
    status: str
    incomplete: bool = False


@dataclass(frozen=True)
class Intent:
    op: str
    node: str | None = None
    payload: dict = field(default_factory=dict)


def idempotency_key(run_id: str, node_id: str, group: int) -> str:
    digest = hashlib.sha256(f"{run_id}:{node_id}:{group}".encode("utf-8")).hexdigest()
    return digest[:20]


# ---------------------------------------------------------------------------
# Node classification helpers
# ---------------------------------------------------------------------------


def _predicate_has_tag(p) -> bool:
    if isinstance(p, WithTag):
        return True
    if isinstance(p, And):
        return any(_predicate_has_tag(q) for q in p.items)
    return False


def _node_requires(node: Node) -> Predicate | None:
    preds = [p for p in (node.requires, node.action.requires if node.action else None) if p]
    if not preds:
        return None
    return preds[0] if len(preds) == 1 else And(tuple(preds))


def _node_ensures(node: Node) -> Predicate | None:
    preds = [p for p in ((node.action.ensures if node.action else None), node.ensures) if p]
    if not preds:
        return None
    return preds[0] if len(preds) == 1 else And(tuple(preds))


def _is_boundary_exec(d: Diagram, node: Node) -> bool:
    """Does executing this node produce a BoundaryOutcome event?"""
    if node.type in ("wait", "meeting", "decision"):
        return False
    if node.type in ("object", "diagram", "queue"):
        return True
    if node.action is None:
        return not d.is_core(node.id)
    if not is_pure_builtin(node.action.callee):
        return True
    return not d.is_core(node.id)


def _decision_is_external(d: Diagram, node: Node) -> bool:
    cond = node.action.arg("yes") if node.action else None
    return (not d.is_core(node.id)) or (cond is not None and _predicate_has_tag(cond))


def _decision_is_human(node: Node) -> bool:
    return node.action is not None and node.action.callee != "condition"


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class Engine:
    """Executes runs against an event store, one executor per run at a time."""

    def __init__(
        self,
        store: EventStore,
        registry: ArtifactRegistry,
        resources=None,
        adapters: AdapterRegistry | None = None,
        clock: Clock | None = None,
        guard: GuardConfig | None = None,
        retry: RetryPolicy | None = None,
        max_steps: int = 100_000,
    ):
        self.store = store
        self.registry = registry
        self.resources = resources
        self.adapters = adapters or AdapterRegistry()
        self.clock = clock or WallClock()
        self.guard = guard or GuardConfig()
        self.retry = retry or RetryPolicy()
        self.max_steps = max_steps
        self._live: dict[tuple[str, str], RunState] = {}
        self._tag_waiters: dict[tuple[str, str], set[str]] = {}  # (ws, resource) -> run ids
        self._waiting_resource: dict[tuple[str, str], str] = {}  # (ws, run) -> resource
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.tag_context = StoreTagContext(resources)

    def _update_indexes(self, run: RunState) -> None:
        """Keep the live map and tag-waiter index in sync after mutations."""
        key = (run.workspace, run.run_id)
        prev = self._waiting_resource.pop(key, None)
        if prev is not None:
            waiters = self._tag_waiters.get((run.workspace, prev))
            if waiters:
                waiters.discard(run.run_id)
        if run.terminal:
            self._live.pop(key, None)
            return
        self._live[key] = run
        if run.status == WAITING:
            listener = run.listener()
            if listener and listener.get("kind") == "tag" and listener.get("resource"):
                rid = listener["resource"]
                self._tag_waiters.setdefault((run.workspace, rid), set()).add(run.run_id)
                self._waiting_resource[key] = rid

    # -- locking --------------------------------------------------------------

    def _lock(self, ws: str, run_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault((ws, run_id), threading.Lock())

    # -- public API -------------------------------------------------------------

    def start_run(
        self,
        workspace: str,
        ref: str,
        inputs: dict | None = None,
        bindings: dict[str, str] | None = None,
        subject: str | None = None,
        run_id: str | None = None,
    ) -> RunState:
        """Start a run; diagram-level requires gate it before any other event."""
        slug, artifact_id, diagram = self.registry.resolve(ref)
        inputs = inputs or {}
        bindings = bindings or {}
        run_id = run_id or uuid.uuid4().hex[:12]
        if not self.store.has_workspace(workspace):
            self.store.create_workspace(workspace)

        sigma0 = initial_state(diagram, inputs)
        lane_views: dict[str, dict] = {}
        for lane, contact_id in bindings.items():
            view = self._contact_view(workspace, contact_id)
            lane_views[lane] = {"contact": view}
        if lane_views:
            sigma0["swimlanes"] = lane_views
        if subject is not None:
            sigma0["subject"] = {"id": subject}

        failed = []
        for p in diagram.requires:
            try:
                ok = eval_predicate(p, sigma0, self.tag_context)
            except EvalError:
                ok = False
            if not ok:
                failed.append(p.to_gfl())
        if failed:
            self.store.append(
                workspace,
                run_id,
                "RunErrored",
                {"reason": "precondition-violation", "failed": failed, "slug": slug},
                at=self.clock.now(),
            )
            raise PreconditionViolation(failed, run_id)

        cycle = find_cycle(diagram)
        order = None
        if cycle is None:
            topo = topological_order(diagram)
            assert isinstance(topo, list)
            order = topo
        payload = {
            "slug": slug,
            "artifact_id": artifact_id,
            "inputs": inputs,
            "state": sigma0,
            "bindings": bindings,
            "subject": subject,
            "order": order,
            "guard": {
                "enforce": self.guard.enforce_boundary_contracts,
                "on_violation": self.guard.on_violation,
            },
            "retry": {
                "max_attempts": self.retry.max_attempts,
                "base_delay": self.retry.base_delay,
                "multiplier": self.retry.multiplier,
            },
        }
        with self._lock(workspace, run_id):
            ev = self.store.append(
                workspace, run_id, "RunStarted", payload, at=self.clock.now()
            )
            run = self._fresh_run(workspace, run_id, payload)
            run.applied_seq = ev.seq
            self._live[(workspace, run_id)] = run
            self._drive(run)
            self._update_indexes(run)
        return run

    def signal(self, workspace: str, run_id: str, sig: dict, actor: str | None = None) -> RunState:
        """Deliver a tag/human/timer signal to a waiting or paused run."""
        with self._lock(workspace, run_id):
            run = self._get_run(workspace, run_id)
            if run.terminal:
                raise StaleSignal(f"run {run_id} is {run.status}")
            payload = self._match_signal(run, sig, actor)
            ev = self.store.append(
                workspace,
                run_id,
                payload.pop("__kind__"),
                payload,
                node_id=run.cursor,
                at=self.clock.now(),
            )
            self._apply(run, ev.kind, ev.payload, ev.seq)
            self._drive(run)
            self._update_indexes(run)
            return run

    def step(self, run: RunState) -> RunState:
        """One micro-step: perform a single intent (one event)."""
        with self._lock(run.workspace, run.run_id):
            intent = self._next_action(run)
            if intent is not None:
                self._perform(run, intent)
            self._update_indexes(run)
            return run

    def run_until_blocked(self, run: RunState) -> RunState:
        with self._lock(run.workspace, run.run_id):
            self._drive(run)
            self._update_indexes(run)
            return run

    def retry_boundary(self, run: RunState, node_id: str, new_attempt_group: bool = False) -> RunState:
        """Operator-driven retry of a failed boundary invocation."""
        with self._lock(run.workspace, run.run_id):
            if run.terminal:
                raise StaleSignal(f"run {run.run_id} is {run.status}")
            if run.cursor != node_id:
                raise SignalMismatch(f"run is at node {run.cursor}, not {node_id}")
            if new_attempt_group:
                run.retry_group[node_id] = run.retry_group.get(node_id, 0) + 1
                run.attempts[node_id] = 0
            self._drive(run)
            self._update_indexes(run)
            return run

    def load_run(self, workspace: str, run_id: str) -> RunState:
        """Reconstruct run state from checkpoint + log suffix (crash recovery)."""
        with self._lock(workspace, run_id):
            run = self._fold(workspace, run_id, strict=False)
            self._update_indexes(run)
            return run

    def recover_workspace(self, workspace: str) -> list[str]:
        """Reload every non-terminal run after a restart; returns their ids."""
        recovered = []
        for run_id in self.store.list_runs(workspace):
            run = self.load_run(workspace, run_id)
            if not run.terminal:
                recovered.append(run_id)
        return recovered

    def resume(self, workspace: str, run_id: str) -> RunState:
        """Recover from the log and continue live execution."""
        with self._lock(workspace, run_id):
            run = self._fold(workspace, run_id, strict=False)
            if not run.terminal:
                self._drive(run)
            self._update_indexes(run)
            return run

    def replay(self, workspace: str, run_id: str) -> ReplayResult:
        """Re-execute from the log only: no adapters, divergence-checked."""
        run = self._fold(workspace, run_id, strict=True)
        incomplete = False
        if not run.terminal and run.status == RUNNING:
            incomplete = self._next_action(run) is not None
        return ReplayResult(
            run=run,
            trace=list(run.trace),
            return_value=run.return_value,
            status=run.status,
            incomplete=incomplete,
        )

    def checkpoint(self, workspace: str, run_id: str) -> tuple[int, dict]:
        with self._lock(workspace, run_id):
            run = self._get_run(workspace, run_id)
            snapshot = run.to_snapshot()
            ev = self.store.append(
                workspace, run_id, "CheckpointTaken", {"seq": run.applied_seq}, at=self.clock.now()
            )
            run.applied_seq = ev.seq
            snapshot["applied_seq"] = ev.seq
            self.store.save_checkpoint(workspace, run_id, ev.seq, snapshot)
            return ev.seq, snapshot

    def tick(self, workspace: str) -> list[str]:
        """Fire due timers for waiting runs; returns affected run ids."""
        fired = []
        now = self.clock.now()
        for (ws, run_id), run in list(self._live.items()):
            if ws != workspace or run.status != WAITING:
                continue
            listener = run.listener()
            if listener and listener.get("kind") == "timer" and listener.get("fire_at", 0) <= now:
                self.signal(ws, run_id, {"kind": "timer", "listener_id": listener.get("listener_id")})
                fired.append(run_id)
        return fired

    def broadcast_tag_added(self, workspace: str, resource_id: str, tag: str) -> list[str]:
        """Deliver a TagAdded signal to every matching armed listener."""
        delivered = []
        waiters = self._tag_waiters.get((workspace, resource_id), set())
        for run_id in sorted(waiters):
            run = self._live.get((workspace, run_id))
            if run is None or run.status != WAITING:
                continue
            listener = run.listener()
            if (
                listener
                and listener.get("kind") == "tag"
                and listener.get("resource") == resource_id
            ):
                self.signal(workspace, run_id, {"kind": "tag-added", "resource": resource_id, "tag": tag})
                delivered.append(run_id)
        return delivered

    def waiting_tasks(self, workspace: str) -> list[dict]:
        """Pending human-boundary work across live runs (the task inbox).

        Human listeners and guard pauses are directly actionable. Tag waits
        are surfaced with their awaited tags; when the wait feeds a decision
        whose condition tests a tag, that decision is previewed so an
        operator can answer it by tagging the subject.
        """
        out = []
        for (ws, run_id), run in sorted(self._live.items()):
            if ws != workspace or run.status not in (WAITING, PAUSED):
                continue
            listener = run.listener() or {}
            if run.status == PAUSED:
                out.append(
                    {
                        "run_id": run_id,
                        "node_id": run.cursor,
                        "label": run.diagram.node(run.cursor).label if run.cursor else "",
                        "type": "guard-violation",
                        "choices": ["resume", "abort"],
                        "bindings": run.bindings,
                    }
                )
            elif listener.get("kind") == "human":
                node = run.diagram.node(run.cursor)
                out.append(
                    {
                        "run_id": run_id,
                        "node_id": run.cursor,
                        "label": node.label,
                        "type": node.type,
                        "choices": listener.get("choices", []),
                        "bindings": run.bindings,
                    }
                )
            elif listener.get("kind") == "tag":
                node = run.diagram.node(run.cursor)
                task = {
                    "run_id": run_id,
                    "node_id": run.cursor,
                    "label": node.label,
                    "type": node.type,
                    "choices": [],
                    "resource": listener.get("resource"),
                    "await_tags": [f["tag"] for f in listener.get("filters") or [] if f["mode"] == "with"],
                    "bindings": run.bindings,
                }
                preview = self._decision_preview(run)
                if preview is not None:
                    task.update(preview)
                    task["choices"] = ["yes", "no"]
                out.append(task)
        return out

    def _decision_preview(self, run: RunState) -> dict | None:
        """The tag-testing decision right after the current wait, if any."""
        edge = run.diagram.out_edge(run.cursor, "to") if run.cursor else None
        if edge is None:
            return None
        nxt = run.diagram.node(edge.target)
        if nxt.type != "decision" or nxt.action is None:
            return None
        cond = nxt.action.arg("yes")
        if isinstance(cond, WithTag):
            return {
                "decision_node": nxt.id,
                "decision_label": nxt.label,
                "decision_tag": cond.tag.name,
            }
        return None

    # -- internals ---------------------------------------------------------------

    def _contact_view(self, workspace: str, contact_id: str) -> dict:
        view = {"id": contact_id}
        if self.resources is not None:
            res = self.resources.get(contact_id)
            if res is not None:
                view.update(res.fields)
                view["id"] = res.id
                ext = res.ext_data.get("id")
                if ext is not None:
                    view["ext-id"] = ext
        return view

    def _get_run(self, workspace: str, run_id: str) -> RunState:
        run = self._live.get((workspace, run_id))
        if run is None:
            run = self._fold(workspace, run_id, strict=False)
            self._update_indexes(run)
        return run

    def _fresh_run(self, workspace: str, run_id: str, payload: dict) -> RunState:
        slug = payload["slug"]
        _, _, diagram = self.registry.resolve(payload.get("artifact_id") or slug)
        run = RunState(
            run_id=run_id,
            workspace=workspace,
            slug=slug,
            artifact_id=payload.get("artifact_id"),
            diagram=diagram,
            state=decode_value(payload["state"]),
            order=payload.get("order"),
            bindings=payload.get("bindings") or {},
            subject_id=payload.get("subject"),
            guard=GuardConfig(payload["guard"]["enforce"], payload["guard"]["on_violation"]),
            retry=RetryPolicy(
                payload["retry"]["max_attempts"],
                payload["retry"]["base_delay"],
                payload["retry"]["multiplier"],
            ),
        )
        if run.order is None:
            entries = diagram.entry_nodes()
            run.frontier = entries if entries else [diagram.nodes[0].id]
        return run

    # -- fold (replay / recovery) ---------------------------------------------

    def _fold(self, workspace: str, run_id: str, strict: bool) -> RunState:
        events = self.store.read(workspace, run_id)
        if not events:
            raise LogCorruption(f"empty log for run {run_id}")
        start = 0
        run: RunState | None = None
        if not strict:
            cp = self.store.latest_checkpoint(workspace, run_id)
            if cp is not None:
                _, _, diagram = self.registry.resolve(cp.snapshot["slug"])
                run = RunState.from_snapshot(cp.snapshot, diagram)
                start = next(
                    (i for i, e in enumerate(events) if e.seq > cp.snapshot["applied_seq"]),
                    len(events),
                )
        if run is None:
            first = events[0]
            if first.kind == "RunErrored":
                run = RunState(
                    run_id=run_id,
                    workspace=workspace,
                    slug=first.payload.get("slug", ""),
                    artifact_id=None,
                    diagram=None,  # type: ignore[arg-type]
                    status=ERRORED,
                    error=first.payload,
                )
                run.applied_seq = first.seq
                return run
            if first.kind != "RunStarted":
                raise LogCorruption(f"log must start with RunStarted, got {first.kind}")
            run = self._fresh_run(workspace, run_id, first.payload)
            run.applied_seq = first.seq
            start = 1

        for ev in events[start:]:
            if ev.kind == "CheckpointTaken":
                run.applied_seq = ev.seq
                continue
            self._expect_event(run, ev, strict)
            self._apply(run, ev.kind, ev.payload, ev.seq)
        return run

    def _expect_event(self, run: RunState, ev, strict: bool) -> None:
        """Divergence check: the logged event must match the derived intent."""
        if run.status in (WAITING, PAUSED):
            if ev.kind not in ("SignalReceived", "TimerFired"):
                raise ReplayDivergence(
                    f"run waiting at {run.cursor} but log has {ev.kind} (seq {ev.seq})"
                )
            return
        if run.terminal:
            raise ReplayDivergence(f"events after terminal state (seq {ev.seq})")
        intent = self._next_action(run)
        if intent is None:
            raise ReplayDivergence(f"no transition derivable at seq {ev.seq}")
        expected = _INTENT_KIND[intent.op]
        if ev.kind != expected:
            raise ReplayDivergence(
                f"expected {expected} at seq {ev.seq} (node {intent.node}), log has {ev.kind}"
            )
        if intent.node is not None and ev.node_id is not None and ev.node_id != intent.node:
            raise ReplayDivergence(
                f"expected node {intent.node} at seq {ev.seq}, log has {ev.node_id}"
            )
        if strict:
            self._check_deterministic_payload(run, intent, ev)

    def _check_deterministic_payload(self, run: RunState, intent: Intent, ev) -> None:
        if intent.op == "complete":
            expected_writes = encode_value(intent.payload.get("assigns") or {})
            logged = encode_value(ev.payload.get("assigns") or {})
            if expected_writes != logged:
                raise ReplayDivergence(
                    f"recomputed writes {expected_writes} != logged {logged} at node {intent.node}"
                )
        elif intent.op == "decide" and not intent.payload.get("external"):
            if intent.payload.get("branch") != ev.payload.get("branch"):
                raise ReplayDivergence(
                    f"recomputed branch {intent.payload.get('branch')} != logged "
                    f"{ev.payload.get('branch')} at node {intent.node}"
                )

    # -- the state fold ----------------------------------------------------------

    def _apply(self, run: RunState, kind: str, payload: dict, seq: int) -> None:
        run.applied_seq = seq
        p = run.prog
        if kind == "NodeEntered":
            run.cursor = payload["node"]
            run.prog = {}
            run.trace.append(payload["node"])
        elif kind == "GuardChecked":
            p[payload["which"] + "_checked"] = True
            if not payload["ok"]:
                node = run.diagram.node(run.cursor)
                enforce = run.diagram.is_core(node.id) or run.guard.enforce_boundary_contracts
                if enforce:
                    p["violation_due"] = payload["which"]
        elif kind == "GuardViolated":
            which = payload["which"]
            p.pop("violation_due", None)
            p["violated"] = which
            node = run.diagram.node(run.cursor)
            if run.guard.on_violation == "pause" and not run.diagram.is_core(node.id):
                run.status = PAUSED
            else:
                p["error_due"] = {
                    "reason": "guard-violation",
                    "which": which,
                    "node": run.cursor,
                }
        elif kind == "BoundaryOutcome":
            if payload["ok"]:
                p["boundary_ok"] = True
                value = payload.get("value")
                p["outcome"] = value
                key = payload.get("key")
                if key:
                    run.idempotency[key] = value
                node = run.diagram.node(run.cursor)
                if node.type == "decision":
                    p["decision_value"] = value
                elif node.action is not None and node.action.callee == "return":
                    p["returned"] = value
                elif node.action is not None and node.action.assigns is not None:
                    p["pending_writes"] = {
                        ".".join(node.action.assigns.segments): value
                    }
            else:
                nid = run.cursor
                run.attempts[nid] = run.attempts.get(nid, 0) + 1
                p["last_failure"] = payload.get("error", "")
        elif kind == "DecisionEvaluated":
            p["decided"] = payload.get("branch")
        elif kind == "ListenerArmed":
            p["listener"] = payload
            run.status = WAITING
        elif kind in ("SignalReceived", "TimerFired"):
            if kind == "TimerFired" or payload.get("matched"):
                if run.status == PAUSED:
                    choice = payload.get("choice")
                    if choice == "abort":
                        p["error_due"] = {"reason": "operator-abort", "node": run.cursor}
                    p["violated"] = None
                    run.status = RUNNING
                else:
                    p["signal"] = payload
                    run.status = RUNNING
                    if payload.get("choice") is not None:
                        p["decision_value"] = payload.get("choice")
        elif kind == "NodeCompleted":
            nid = payload["node"]
            for path, value in (payload.get("assigns") or {}).items():
                _write_state(run.state, path, value)
            if payload.get("returned") is not None:
                run.state["return"] = payload["returned"]
            run.executed.add(nid)
            for target in payload.get("taken") or []:
                run.taken_edges.add((nid, target))
                if not run.acyclic:
                    run.frontier.append(target)
            run.cursor = None
            run.prog = {}
        elif kind == "RunCompleted":
            run.status = COMPLETED
            run.return_value = payload.get("return")
            run.cursor = None
        elif kind == "RunErrored":
            run.status = ERRORED
            run.error = payload
            run.cursor = None
        elif kind == "RunStarted":
            pass  # handled by _fresh_run
        else:  # pragma: no cover
            raise LogCorruption(f"unknown event kind {kind}")

    # -- intent derivation --------------------------------------------------------

    def _next_action(self, run: RunState) -> Intent | None:
        if run.status != RUNNING:
            return None
        p = run.prog
        if p.get("error_due"):
            return Intent("fail-run", run.cursor, {"error": p["error_due"]})
        if run.cursor is None:
            nid = self._pick_next(run)
            if nid is None:
                return Intent("finish", None, {})
            return Intent("enter", nid, {})
        node = run.diagram.node(run.cursor)
        if p.get("violation_due"):
            return Intent("guard-violated", node.id, {"which": p["violation_due"]})
        req = _node_requires(node)
        if req is not None and not p.get("requires_checked"):
            return Intent("check-requires", node.id, {"predicate": req})

        if node.type == "decision":
            return self._decision_intent(run, node)
        if node.type in ("wait", "meeting"):
            if p.get("signal") is None:
                if p.get("listener") is None:
                    return Intent("arm", node.id, {})
                return None  # listener armed: status is WAITING
        elif _is_boundary_exec(run.diagram, node):
            if not p.get("boundary_ok"):
                attempts = run.attempts.get(node.id, 0)
                if attempts >= run.retry.max_attempts:
                    return Intent(
                        "fail-run",
                        node.id,
                        {
                            "error": {
                                "reason": "boundary-failure",
                                "node": node.id,
                                "attempts": attempts,
                                "detail": p.get("last_failure", ""),
                            }
                        },
                    )
                return Intent("boundary", node.id, {"attempt": attempts + 1})
        else:
            # Pure in-process computation (verified-core path).
            if not p.get("computed"):
                self._compute_pure(run, node)
            if p.get("throw_message") is not None:
                return Intent(
                    "fail-run",
                    node.id,
                    {"error": {"reason": "workflow-throw", "node": node.id, "message": p["throw_message"]}},
                )
            if p.get("action_error") is not None:
                return Intent(
                    "fail-run",
                    node.id,
                    {"error": {"reason": "action-error", "node": node.id, "detail": p["action_error"]}},
                )

        ens = _node_ensures(node)
        if ens is not None and not p.get("ensures_checked"):
            return Intent("check-ensures", node.id, {"predicate": ens})
        return self._complete_intent(run, node)

    def _decision_intent(self, run: RunState, node: Node) -> Intent | None:
        p = run.prog
        if p.get("decided") is not None:
            return self._complete_intent(run, node)
        if _decision_is_human(node):
            if p.get("signal") is None:
                if p.get("listener") is None:
                    return Intent("arm", node.id, {"human": True})
                return None  # listener armed: status is WAITING
            branch = p.get("decision_value")
            return Intent("decide", node.id, {"branch": branch, "external": True})
        external = _decision_is_external(run.diagram, node)
        if external and not p.get("boundary_ok"):
            return Intent("boundary-eval", node.id, {})
        if external:
            value = p.get("decision_value")
            branch = {True: "yes", False: "no"}.get(value, "maybe")
            return Intent("decide", node.id, {"branch": branch, "external": True})
        # Internal: recomputable from state alone.
        cond = node.action.arg("yes") if node.action else None
        try:
            value = eval_predicate(cond, run.state)
            branch = "yes" if value else "no"
        except EvalError:
            branch = "maybe"
        return Intent("decide", node.id, {"branch": branch, "external": False, "result": value if branch != "maybe" else None})

    def _complete_intent(self, run: RunState, node: Node) -> Intent:
        p = run.prog
        taken: list[str] = []
        if node.type == "decision":
            branch = p.get("decided")
            edge = run.diagram.out_edge(node.id, branch) if branch else None
            if branch == "maybe" and edge is None:
                return Intent(
                    "fail-run",
                    node.id,
                    {"error": {"reason": "decision-error", "node": node.id}},
                )
            if edge is not None:
                taken.append(edge.target)
        else:
            taken = [e.target for e in run.diagram.out_edges(node.id) if e.label == "to"]
        payload: dict = {"node": node.id, "taken": taken}
        writes = p.get("pending_writes") or {}
        if writes:
            payload["assigns"] = writes
        if p.get("returned") is not None:
            payload["returned"] = p["returned"]
        return Intent("complete", node.id, payload)

    def _compute_pure(self, run: RunState, node: Node) -> None:
        p = run.prog
        p["computed"] = True
        action = node.action
        if action is None:
            return
        try:
            result = execute_builtin(action, run.state)
        except WorkflowThrow as t:
            p["throw_message"] = t.message
            return
        except EvalError as e:
            p["action_error"] = str(e)
            return
        if action.callee == "return":
            p["returned"] = result
        elif action.assigns is not None:
            p["pending_writes"] = {".".join(action.assigns.segments): result}

    def _pick_next(self, run: RunState) -> str | None:
        if run.acyclic:
            order = run.order or []
            while run.order_pos < len(order):
                nid = order[run.order_pos]
                run.order_pos += 1
                has_in = bool(run.diagram.in_edges(nid))
                runnable = not has_in or any(
                    (e.source, nid) in run.taken_edges for e in run.diagram.in_edges(nid)
                )
                if runnable:
                    return nid
            return None
        if run.frontier:
            return run.frontier.pop(0)
        return None

    # -- perform (live only) -------------------------------------------------------

    def _drive(self, run: RunState) -> None:
        steps = 0
        while True:
            intent = self._next_action(run)
            if intent is None:
                return
            self._perform(run, intent)
            steps += 1
            if steps > self.max_steps:
                raise EngineError(f"run {run.run_id} exceeded {self.max_steps} steps")

    def _append_apply(self, run: RunState, kind: str, payload: dict, node_id=None, key=None) -> None:
        ev = self.store.append(
            run.workspace,
            run.run_id,
            kind,
            payload,
            node_id=node_id,
            idempotency_key=key,
            at=self.clock.now(),
        )
        self._apply(run, ev.kind, ev.payload, ev.seq)

    def _perform(self, run: RunState, intent: Intent) -> None:
        op = intent.op
        node_id = intent.node
        if op == "enter":
            node = run.diagram.node(node_id)
            self._append_apply(run, "NodeEntered", {"node": node_id, "type": node.type, "lane": node.lane}, node_id)
        elif op in ("check-requires", "check-ensures"):
            which = "requires" if op == "check-requires" else "ensures"
            pred = intent.payload["predicate"]
            state_view = copy.deepcopy(run.state)
            for path, value in (run.prog.get("pending_writes") or {}).items():
                _write_state(state_view, path, value)
            if run.prog.get("returned") is not None:
                state_view["return"] = run.prog["returned"]
            try:
                ok = eval_predicate(pred, state_view, self.tag_context)
            except EvalError:
                ok = False
            self._append_apply(
                run,
                "GuardChecked",
                {"which": which, "ok": ok, "predicate": pred.to_gfl()},
                node_id,
            )
        elif op == "guard-violated":
            self._append_apply(
                run, "GuardViolated", {"which": intent.payload["which"], "node": node_id}, node_id
            )
        elif op == "boundary":
            self._perform_boundary(run, node_id, intent.payload["attempt"])
        elif op == "boundary-eval":
            node = run.diagram.node(node_id)
            cond = node.action.arg("yes") if node.action else None
            try:
                value = eval_predicate(cond, run.state, self.tag_context)
            except EvalError:
                value = None
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": True, "value": value, "key": None, "attempt": 1, "source": "condition"},
                node_id,
            )
        elif op == "decide":
            payload = {
                "branch": intent.payload.get("branch"),
                "external": intent.payload.get("external", False),
            }
            if "result" in intent.payload:
                payload["result"] = intent.payload["result"]
            self._append_apply(run, "DecisionEvaluated", payload, node_id)
        elif op == "arm":
            self._perform_arm(run, node_id)
        elif op == "complete":
            self._append_apply(run, "NodeCompleted", dict(intent.payload), node_id)
        elif op == "finish":
            self._append_apply(run, "RunCompleted", {"return": run.state.get("return")})
        elif op == "fail-run":
            self._append_apply(run, "RunErrored", intent.payload["error"], node_id)
        else:  # pragma: no cover
            raise EngineError(f"unknown intent {op}")

    def _perform_boundary(self, run: RunState, node_id: str, attempt: int) -> None:
        node = run.diagram.node(node_id)
        action = node.action
        group = run.retry_group.get(node_id, 0)
        key = idempotency_key(run.run_id, node_id, group)

        if key in run.idempotency:
            # Previously logged success for this key: replay it, never re-invoke.
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": True, "value": run.idempotency[key], "key": key, "attempt": attempt, "deduplicated": True},
                node_id,
                key,
            )
            return

        if attempt > 1:
            self.clock.sleep(run.retry.delay(attempt - 1))

        if node.type in ("diagram", "queue"):
            self._perform_subrun(run, node, key, attempt)
            return

        if action is None:
            # Work performed outside the system (e.g. a report filled in by a
            # person): record the boundary assumption, nothing to invoke.
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": True, "value": None, "key": key, "attempt": attempt, "source": "no-action"},
                node_id,
                key,
            )
            return

        if action is not None and is_pure_builtin(action.callee):
            # Pure computation in a boundary lane still logs a BoundaryOutcome
            # so replay treats every boundary node uniformly.
            try:
                value = execute_builtin(action, run.state)
            except WorkflowThrow as t:
                self._append_apply(
                    run,
                    "RunErrored",
                    {"reason": "workflow-throw", "node": node_id, "message": t.message},
                    node_id,
                )
                return
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": True, "value": value, "key": key, "attempt": attempt, "source": "builtin"},
                node_id,
                key,
            )
            return

        args: dict[str, Any] = {}
        if action is not None:
            for name, term in action.args:
                if isinstance(term, (VarPath,)):
                    from graphflow.predicates import resolve_path, _UNBOUND

                    v = resolve_path(term, run.state)
                    args[name] = None if v is _UNBOUND else v
                elif hasattr(term, "value"):
                    args[name] = term.value
        callee = action.callee if action is not None else f"{node.type}-node"
        try:
            value = self.adapters.invoke(callee, args, key)
        except AdapterFailure as f:
            run.prog["last_failure"] = f.reason
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": False, "error": f.reason, "key": key, "attempt": attempt},
                node_id,
                key,
            )
            return
        if node.type == "object" and self.resources is not None:
            rid = self.resources.persist_object(node, value)
            value = {"resource_id": rid, "value": value}
        self._append_apply(
            run,
            "BoundaryOutcome",
            {"ok": True, "value": value, "key": key, "attempt": attempt},
            node_id,
            key,
        )

    def _perform_subrun(self, run: RunState, node: Node, key: str, attempt: int) -> None:
        """diagram/queue nodes: synchronous child runs, results logged."""
        action = node.action
        child_inputs: dict[str, Any] = {}
        if action is not None:
            from graphflow.predicates import resolve_path, _UNBOUND

            for name, term in action.args:
                if isinstance(term, VarPath):
                    v = resolve_path(term, run.state)
                    child_inputs[name] = None if v is _UNBOUND else v
                elif hasattr(term, "value"):
                    child_inputs[name] = term.value
        try:
            if node.type == "queue":
                over = child_inputs.pop("over", None)
                items = over if isinstance(over, list) else []
                returns = []
                for i, item in enumerate(items):
                    child = self.start_run(
                        run.workspace,
                        node.subdiagram,
                        {**child_inputs, "item": item},
                        run_id=f"{run.run_id}-{node.id}-{i}",
                    )
                    if child.status != COMPLETED:
                        raise AdapterFailure(f"iteration {i} ended {child.status}")
                    returns.append(child.return_value)
                value: Any = returns
            else:
                child = self.start_run(
                    run.workspace,
                    node.subdiagram,
                    child_inputs,
                    run_id=f"{run.run_id}-{node.id}",
                )
                if child.status != COMPLETED:
                    raise AdapterFailure(f"subdiagram ended {child.status}")
                value = child.return_value
        except (PreconditionViolation, UnknownArtifact) as exc:
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": False, "error": str(exc), "key": key, "attempt": attempt},
                node.id,
                key,
            )
            return
        except AdapterFailure as f:
            self._append_apply(
                run,
                "BoundaryOutcome",
                {"ok": False, "error": f.reason, "key": key, "attempt": attempt},
                node.id,
                key,
            )
            return
        self._append_apply(
            run,
            "BoundaryOutcome",
            {"ok": True, "value": value, "key": key, "attempt": attempt, "source": "subrun"},
            node.id,
            key,
        )

    def _perform_arm(self, run: RunState, node_id: str) -> None:
        node = run.diagram.node(node_id)
        listener_id = f"{run.run_id}-{node_id}-{len(run.trace)}"
        payload: dict[str, Any] = {"listener_id": listener_id}
        action = node.action
        callee = action.callee if action else None
        if node.type == "decision" or node.type == "meeting" or callee in (None, "next"):
            if node.type == "decision":
                choices = [e.label for e in run.diagram.out_edges(node_id) if e.label != "to"]
                payload.update({"kind": "human", "choices": choices, "action": callee})
            else:
                payload.update({"kind": "human", "choices": ["proceed"], "action": callee})
        if node.type == "wait" and callee == "await-with-tag":
            resource_term = action.arg("resource")
            rid = None
            if isinstance(resource_term, VarPath):
                from graphflow.predicates import resolve_path, _UNBOUND

                v = resolve_path(resource_term, run.state)
                if isinstance(v, dict):
                    rid = v.get("id")
            filters = [
                {"mode": f.mode, "tag": f.tag.name}
                for f in (action.arg("filters") or ())
            ]
            payload.update({"kind": "tag", "resource": rid, "filters": filters})
        elif node.type == "wait" and callee == "await-timer":
            seconds_term = action.arg("seconds")
            seconds = seconds_term.value if hasattr(seconds_term, "value") else 0
            payload.update({"kind": "timer", "fire_at": self.clock.now() + (seconds or 0)})
        elif node.type == "wait":
            payload.update({"kind": "human", "choices": ["proceed"], "action": callee})
        self._append_apply(run, "ListenerArmed", payload, node_id)

    # -- signal matching -----------------------------------------------------------

    def _match_signal(self, run: RunState, sig: dict, actor: str | None) -> dict:
        kind = sig.get("kind")
        if run.status == PAUSED:
            if kind != "human-decision":
                raise SignalMismatch("paused run accepts only operator decisions")
            choice = sig.get("choice")
            if choice not in ("resume", "abort"):
                raise SignalMismatch(f"paused run cannot take choice {choice!r}")
            return {
                "__kind__": "SignalReceived",
                "matched": True,
                "signal": "operator",
                "choice": choice,
                "actor": actor or "",
            }
        if run.status != WAITING:
            raise SignalMismatch(f"run is {run.status}, no listener armed")
        listener = run.listener() or {}
        if kind == "tag-added":
            if listener.get("kind") != "tag":
                raise SignalMismatch("run is not waiting on tags")
            matched = listener.get("resource") == sig.get("resource")
            if matched:
                matched = self._filters_satisfied(listener, sig)
            return {
                "__kind__": "SignalReceived",
                "matched": bool(matched),
                "signal": "tag-added",
                "resource": sig.get("resource"),
                "tag": sig.get("tag"),
                "actor": actor or "",
            }
        if kind == "human-decision":
            if listener.get("kind") != "human":
                raise SignalMismatch("run is not waiting on a human decision")
            node_id = sig.get("node")
            if node_id is not None and node_id != run.cursor:
                raise SignalMismatch(f"pending node is {run.cursor}, not {node_id}")
            choice = sig.get("choice")
            choices = listener.get("choices") or []
            if choices and choice not in choices:
                raise SignalMismatch(f"choice {choice!r} not in {choices}")
            if not actor:
                raise SignalMismatch("human decisions require an actor")
            return {
                "__kind__": "SignalReceived",
                "matched": True,
                "signal": "human-decision",
                "choice": choice,
                "actor": actor,
            }
        if kind == "timer":
            if listener.get("kind") != "timer":
                raise SignalMismatch("run is not waiting on a timer")
            lid = sig.get("listener_id")
            if lid is not None and lid != listener.get("listener_id"):
                raise SignalMismatch("unknown timer listener")
            return {"__kind__": "TimerFired", "listener_id": listener.get("listener_id")}
        raise SignalMismatch(f"unknown signal kind {kind!r}")

    def _filters_satisfied(self, listener: dict, sig: dict) -> bool:
        rid = listener.get("resource")
        tags: set[str] = set()
        if self.resources is not None:
            res = self.resources.get(rid)
            if res is not None:
                tags = set(res.tags)
        else:
            tags = {sig.get("tag")}
        for f in listener.get("filters") or []:
            if f["mode"] == "with" and f["tag"] not in tags:
                return False
            if f["mode"] == "without" and f["tag"] in tags:
                return False
        return True


_INTENT_KIND = {
    "enter": "NodeEntered",
    "check-requires": "GuardChecked",
    "check-ensures": "GuardChecked",
    "guard-violated": "GuardViolated",
    "boundary": "BoundaryOutcome",
    "boundary-eval": "BoundaryOutcome",
    "decide": "DecisionEvaluated",
    "arm": "ListenerArmed",
    "complete": "NodeCompleted",
    "finish": "RunCompleted",
    "fail-run": "RunErrored",
}


def _write_state(state: dict, dotted: str, value: Any) -> None:
    segs = dotted.split(".")
    cur = state
    for s in segs[:-1]:
        nxt = cur.get(s)
        if not isinstance(nxt, dict):
            nxt = {}
            cur[s] = nxt
        cur = nxt
    cur[segs[-1]] = value
