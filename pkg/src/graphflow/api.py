"""HTTP service for the dashboard: runs, signals, tasks, cohorts, metrics.

All mutations funnel through the engine's per-run serialization and require
an actor identity that is recorded into the signal payloads. Responses are
plain JSON built from the event log and live run state.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from graphflow.engine import (
    PreconditionViolation,
    SignalMismatch,
    StaleSignal,
    UnknownArtifact,
)
from graphflow.events import encode_value
from graphflow.model import to_interchange
from graphflow.store import RunUnknown, WorkspaceUnknown
from graphflow.workspace import UnknownSlug, Workspace


class SignalBody(BaseModel):
    kind: str  # tag-added | human-decision | timer
    actor: str = Field(min_length=1)
    node_id: str | None = None
    choice: str | None = None
    tag: str | None = None
    resource: str | None = None
    listener_id: str | None = None


class StartRunBody(BaseModel):
    inputs: dict[str, Any] = Field(default_factory=dict)
    bindings: dict[str, str] = Field(default_factory=dict)
    subject: str | None = None
    actor: str = Field(min_length=1)


def _run_view(ws: Workspace, run_id: str, full_state: bool = False) -> dict:
    events = ws.store.read(ws.name, run_id)
    run = ws.engine.load_run(ws.name, run_id)
    node = None
    lane = None
    if run.cursor is not None and run.diagram is not None:
        n = run.diagram.node(run.cursor)
        node = {"id": n.id, "label": n.label, "type": n.type}
        lane = n.lane
    state = encode_value(run.state)
    if not full_state and isinstance(state, dict) and "swimlanes" in state:
        # Lane redaction: contact details stay server-side, ids remain.
        state = dict(state)
        state["swimlanes"] = {
            lane_name: {"contact": {"id": (v.get("contact") or {}).get("id")}}
            for lane_name, v in state["swimlanes"].items()
        }
    return {
        "run_id": run_id,
        "workspace": ws.name,
        "slug": run.slug,
        "status": run.status,
        "current_node": node,
        "current_lane": lane,
        "state": state,
        "return": encode_value(run.return_value),
        "error": run.error,
        "trace": run.trace,
        "timeline": [_event_view(e) for e in events],
    }


def _event_view(e) -> dict:
    return {
        "seq": e.seq,
        "at": e.at,
        "kind": e.kind,
        "node_id": e.node_id,
        "payload": encode_value(e.payload),
    }


def create_app(workspaces: dict[str, Workspace]) -> FastAPI:
    """Build the service over already-wired workspaces (keyed by name)."""
    app = FastAPI(title="graphflow", version="0.1.0")

    def ws_or_404(name: str) -> Workspace:
        ws = workspaces.get(name)
        if ws is None:
            raise HTTPException(404, f"unknown workspace {name!r}")
        return ws

    def find_run(run_id: str) -> tuple[Workspace, str]:
        for ws in workspaces.values():
            if ws.store.run_exists(ws.name, run_id):
                return ws, run_id
        raise HTTPException(404, f"unknown run {run_id!r}")

    @app.get("/workspaces")
    def list_workspaces():
        return {"workspaces": sorted(workspaces)}

    @app.get("/workspaces/{name}/runs")
    def list_runs(name: str, status: str | None = None):
        ws = ws_or_404(name)
        out = []
        for run_id in ws.store.list_runs(name):
            run = ws.engine.load_run(name, run_id)
            if status and run.status != status:
                continue
            out.append(
                {
                    "run_id": run_id,
                    "slug": run.slug,
                    "status": run.status,
                    "current_node": run.cursor,
                    "events": run.applied_seq,
                }
            )
        return {"runs": out}

    @app.get("/runs/{run_id}")
    def run_detail(run_id: str, full: bool = False):
        ws, rid = find_run(run_id)
        return _run_view(ws, rid, full_state=full)

    @app.get("/runs/{run_id}/events")
    def run_events(run_id: str, from_seq: int = Query(1, alias="from")):
        ws, rid = find_run(run_id)
        try:
            events = ws.store.read(ws.name, rid, from_seq)
        except RunUnknown:
            raise HTTPException(404, f"unknown run {run_id!r}")
        return {"events": [_event_view(e) for e in events]}

    @app.post("/runs/{run_id}/signal")
    def post_signal(run_id: str, body: SignalBody):
        ws, rid = find_run(run_id)
        sig: dict[str, Any] = {"kind": body.kind}
        if body.kind == "human-decision":
            if body.choice is None:
                raise HTTPException(400, "human-decision needs a choice")
            sig["choice"] = body.choice
            if body.node_id is not None:
                sig["node"] = body.node_id
        elif body.kind == "tag-added":
            if not body.tag or not body.resource:
                raise HTTPException(400, "tag-added needs tag and resource")
            ws.resources.add_tag(body.resource, body.tag)
            # The broadcast resumes matching waiters; when the tag was already
            # present (idempotent no-op) the addressed run still gets the
            # signal directly.
            run = ws.engine.load_run(ws.name, rid)
            if run.status == "waiting":
                sig = {"kind": "tag-added", "resource": body.resource, "tag": body.tag}
                try:
                    ws.engine.signal(ws.name, rid, sig, actor=body.actor)
                except (StaleSignal, SignalMismatch):
                    pass  # resumed concurrently or not a tag listener
            return _run_view(ws, rid)
        elif body.kind == "timer":
            sig["listener_id"] = body.listener_id
        else:
            raise HTTPException(400, f"unknown signal kind {body.kind!r}")
        try:
            ws.engine.signal(ws.name, rid, sig, actor=body.actor)
        except (StaleSignal, SignalMismatch) as exc:
            raise HTTPException(409, str(exc))
        return _run_view(ws, rid)

    @app.get("/workspaces/{name}/diagrams")
    def list_diagrams(name: str):
        ws = ws_or_404(name)
        out = []
        for slug, decl in sorted(ws.diagrams.items()):
            auto = ws.library.get(slug)
            out.append(
                {
                    "slug": slug,
                    "name": decl.name,
                    "nodes": len(decl.nodes),
                    "admitted": auto is not None,
                    "automation_id": auto.id if auto else None,
                }
            )
        return {"diagrams": out}

    @app.get("/workspaces/{name}/diagrams/{slug}")
    def diagram_detail(name: str, slug: str):
        ws = ws_or_404(name)
        try:
            _, _, diagram = ws.registry.resolve(slug)
        except UnknownArtifact:
            raise HTTPException(404, f"unknown diagram {slug!r}")
        return to_interchange(diagram)

    @app.post("/workspaces/{name}/diagrams/{slug}/runs")
    def start_run(name: str, slug: str, body: StartRunBody):
        ws = ws_or_404(name)
        try:
            run = ws.engine.start_run(
                name, slug, inputs=body.inputs, bindings=body.bindings, subject=body.subject
            )
        except UnknownArtifact:
            raise HTTPException(404, f"unknown diagram {slug!r}")
        except PreconditionViolation as exc:
            raise HTTPException(400, f"precondition violation: {', '.join(exc.failed)}")
        return _run_view(ws, run.run_id)

    @app.get("/workspaces/{name}/queries/{slug}/cohort")
    def cohort(name: str, slug: str):
        ws = ws_or_404(name)
        try:
            ids = sorted(ws.cohort(slug))
        except UnknownSlug:
            raise HTTPException(404, f"unknown query {slug!r}")
        out = []
        for rid in ids:
            r = ws.resources.get(rid)
            out.append(
                {
                    "id": rid,
                    "resource_type": r.resource_type,
                    "ext_type": r.ext_type,
                    "tags": sorted(r.tags),
                    "fields": encode_value(r.fields),
                }
            )
        return {"query": slug, "cohort": out}

    @app.get("/workspaces/{name}/metrics/{slug}/samples")
    def metric_samples(name: str, slug: str, window: float | None = None):
        ws = ws_or_404(name)
        if slug not in ws.metrics:
            raise HTTPException(404, f"unknown metric {slug!r}")
        samples = ws.store.read_metric_samples(name, slug)
        if window is not None:
            cutoff = ws.clock.now() - window
            samples = [s for s in samples if s["at"] >= cutoff]
        return {"metric": slug, "samples": samples}

    @app.post("/workspaces/{name}/metrics/{slug}/sample")
    def take_sample(name: str, slug: str):
        ws = ws_or_404(name)
        try:
            sample = ws.sample_metric(slug)
        except UnknownSlug as exc:
            raise HTTPException(404, str(exc))
        return sample.to_record()

    @app.get("/workspaces/{name}/tasks")
    def tasks(name: str, assignee: str | None = None):
        ws = ws_or_404(name)
        items = ws.engine.waiting_tasks(name)
        if assignee:
            items = [
                t for t in items if assignee in (t.get("bindings") or {}).values()
            ]
        return {"tasks": items}

    return app
