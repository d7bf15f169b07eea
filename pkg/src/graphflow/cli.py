"""Command-line surface: parse, verify, admit, run, signal, replay, query,
metric, trigger, simulate, serve.

State lives under a root directory (GRAPHFLOW_ROOT or --root): one
subdirectory per workspace holding run logs, resources, admitted
automations, and the workspace's .gfl sources. Exit status is 0 only on
success; machine mode prints one JSON record per line.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from graphflow.engine import (
    PreconditionViolation,
    ReplayDivergence,
    SignalMismatch,
    SimulatedAdapter,
    StaleSignal,
    UnknownArtifact,
    WallClock,
)
from graphflow.events import encode_value
from graphflow.gfl import ParseError, parse, parse_file, serialize
from graphflow.gfl.ast import DiagramDecl
from graphflow.pilot import ClinicProfile, load_config, simulate, three_clinic_profiles
from graphflow.resources import Resource
from graphflow.store import FileEventStore
from graphflow.verifier import Automation, content_hash, verify_diagram
from graphflow.workspace import UnknownSlug, Workspace

DEFAULT_ROOT = "graphflow-data"


class Ctx:
    def __init__(self, root: str, workspace: str, output: str):
        self.root = root
        self.workspace_name = workspace
        self.output = output
        self._ws: Workspace | None = None

    @property
    def ws(self) -> Workspace:
        if self._ws is None:
            self._ws = open_workspace(self.root, self.workspace_name)
        return self._ws

    def emit(self, record: dict, human: str | None = None) -> None:
        if self.output == "json":
            click.echo(json.dumps(encode_value(record), sort_keys=True))
        else:
            click.echo(human if human is not None else json.dumps(encode_value(record), indent=2))

    def fail(self, message: str, record: dict | None = None) -> "NoReturn":  # type: ignore[name-defined]
        if self.output == "json":
            click.echo(json.dumps({"error": message, **(record or {})}), err=True)
        else:
            click.echo(f"error: {message}", err=True)
        sys.exit(1)


def open_workspace(root: str, name: str) -> Workspace:
    store = FileEventStore(root)
    ws = Workspace(name=name, store=store, clock=WallClock())
    ws.adapters.register_default(SimulatedAdapter())
    gfl_dir = Path(root) / name / "gfl"
    if gfl_dir.is_dir():
        for path in sorted(gfl_dir.glob("*.gfl")):
            ws.load_source(path.read_text(encoding="utf-8"))
    for record in store.load_automations(name):
        try:
            decls = parse(record["source"])
        except ParseError:
            continue
        for decl in decls:
            if isinstance(decl, DiagramDecl) and decl.slug == record["slug"]:
                ws.library.restore(decl, record)
    return ws


@click.group()
@click.option("--root", default=None, help="Store root (default: $GRAPHFLOW_ROOT or ./graphflow-data)")
@click.option("--workspace", "-w", default=None, help="Workspace name (default: $GRAPHFLOW_WORKSPACE or 'default')")
@click.option("--output", "-o", type=click.Choice(["human", "json"]), default="human")
@click.pass_context
def main(ctx, root, workspace, output):
    """Desk-scale workflow platform: compile, verify, execute, observe."""
    root = root or os.environ.get("GRAPHFLOW_ROOT", DEFAULT_ROOT)
    workspace = workspace or os.environ.get("GRAPHFLOW_WORKSPACE", "default")
    ctx.obj = Ctx(root, workspace, output)


@main.command("parse")
@click.argument("file", type=click.Path(exists=True))
@click.pass_obj
def parse_cmd(ctx: Ctx, file):
    """Parse a GFL file and summarize its declarations."""
    try:
        decls = parse_file(file)
    except ParseError as exc:
        ctx.fail(str(exc), {"line": exc.line, "column": exc.column, "context": exc.context})
    for d in decls:
        record = {"kind": d.kind, "slug": d.slug, "name": d.name}
        if d.kind == "diagram":
            record.update(nodes=len(d.nodes), edges=sum(len(n.edges) for n in d.nodes))
        elif d.kind == "query":
            record.update(filters=len(d.filters))
        ctx.emit(record, human=f"{d.kind} {d.slug} ({d.name})" + (
            f": {record['nodes']} nodes, {record['edges']} edges" if d.kind == "diagram" else ""
        ))


@main.command("verify")
@click.argument("file", type=click.Path(exists=True))
@click.option("--diagram", "slug", default=None, help="Verify only this diagram slug")
@click.option("--budget", default=1000, show_default=True)
@click.pass_obj
def verify_cmd(ctx: Ctx, file, slug, budget):
    """Check verified-core admissibility and discharge obligations."""
    try:
        decls = parse_file(file)
    except ParseError as exc:
        ctx.fail(str(exc))
    diagrams = [d for d in decls if isinstance(d, DiagramDecl) and (slug is None or d.slug == slug)]
    if not diagrams:
        ctx.fail(f"no diagram {'named ' + slug if slug else ''} in {file}")
    ok = True
    for decl in diagrams:
        report = verify_diagram(decl, budget=budget)
        ok = ok and report.admitted
        ctx.emit(
            {
                "slug": report.slug,
                "admitted": report.admitted,
                "structural": report.structural_reasons,
                "obligations": [ob.describe() for ob in report.obligations],
            },
            human="\n".join(report.lines()),
        )
    if not ok:
        sys.exit(1)


@main.command("admit")
@click.argument("file", type=click.Path(exists=True))
@click.option("--budget", default=1000, show_default=True)
@click.pass_obj
def admit_cmd(ctx: Ctx, file, budget):
    """Admit a diagram to the workspace automation library."""
    try:
        decls = parse_file(file)
    except ParseError as exc:
        ctx.fail(str(exc))
    ws = ctx.ws
    admitted = []
    for decl in decls:
        if not isinstance(decl, DiagramDecl):
            continue
        result = ws.library.admit(decl, budget=budget)
        if not isinstance(result, Automation):
            ctx.fail(
                f"{decl.slug} rejected",
                {"report": [ob.describe() for ob in result.obligations] + result.structural_reasons},
            )
        ws.store.put_automation(
            ws.name,
            result.slug,
            result.content_hash,
            {
                "slug": result.slug,
                "hash": result.content_hash,
                "id": result.id,
                "source": serialize(decl),
                "requires": [p.to_gfl() for p in result.requires],
                "ensures": [p.to_gfl() for p in result.ensures],
                "obligations": [ob.describe() for ob in result.obligations],
                "admitted_at": result.admitted_at,
            },
        )
        _save_gfl(ctx, file)
        admitted.append(result)
        ctx.emit({"automation": result.id, "slug": result.slug}, human=f"admitted {result.id}")
    if not admitted:
        ctx.fail(f"no diagram declarations in {file}")


def _save_gfl(ctx: Ctx, file) -> None:
    gfl_dir = Path(ctx.root) / ctx.workspace_name / "gfl"
    gfl_dir.mkdir(parents=True, exist_ok=True)
    target = gfl_dir / Path(file).name
    target.write_text(Path(file).read_text(encoding="utf-8"), encoding="utf-8")


@main.command("load")
@click.argument("file", type=click.Path(exists=True))
@click.pass_obj
def load_cmd(ctx: Ctx, file):
    """Register a GFL file's declarations in the workspace (no verification)."""
    try:
        decls = parse_file(file)
    except ParseError as exc:
        ctx.fail(str(exc))
    _save_gfl(ctx, file)
    ctx.emit(
        {"loaded": [f"{d.kind}:{d.slug}" for d in decls]},
        human="loaded " + ", ".join(f"{d.kind} {d.slug}" for d in decls),
    )


@main.command("run")
@click.argument("slug")
@click.option("--input", "inputs", multiple=True, help="k=v (v parsed as JSON when possible)")
@click.option("--bind", "binds", multiple=True, help="lane=contact-id")
@click.option("--subject", default=None)
@click.pass_obj
def run_cmd(ctx: Ctx, slug, inputs, binds, subject):
    """Start a run and stream its events until terminal or waiting."""
    ws = ctx.ws
    input_map = dict(_parse_kv(p) for p in inputs)
    bind_map = {k: str(v) for k, v in (_parse_kv(p) for p in binds)}
    try:
        run = ws.engine.start_run(ws.name, slug, inputs=input_map, bindings=bind_map, subject=subject)
    except UnknownArtifact:
        ctx.fail(f"unknown diagram or automation {slug!r}")
    except PreconditionViolation as exc:
        ctx.fail(f"precondition violation: {', '.join(exc.failed)}", {"run_id": exc.run_id})
    for e in ws.store.read(ws.name, run.run_id):
        ctx.emit(
            {"seq": e.seq, "kind": e.kind, "node": e.node_id, "payload": e.payload},
            human=f"  [{e.seq:>3}] {e.kind:<18} {e.node_id or '':<4} {_short(e.payload)}",
        )
    ctx.emit(
        {"run_id": run.run_id, "status": run.status, "return": run.return_value},
        human=f"run {run.run_id}: {run.status}"
        + (f", return {json.dumps(encode_value(run.return_value))}" if run.return_value else ""),
    )
    if run.status == "errored":
        sys.exit(1)


def _short(payload: dict) -> str:
    text = json.dumps(encode_value(payload), sort_keys=True)
    return text if len(text) <= 100 else text[:97] + "..."


def _parse_kv(pair: str) -> tuple[str, object]:
    if "=" not in pair:
        raise click.BadParameter(f"expected k=v, got {pair!r}")
    k, v = pair.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


@main.command("signal")
@click.argument("run_id")
@click.option("--tag", default=None, help="Add this tag to --resource and deliver the signal")
@click.option("--resource", default=None)
@click.option("--decision", default=None, help="node=choice")
@click.option("--actor", default=None)
@click.pass_obj
def signal_cmd(ctx: Ctx, run_id, tag, resource, decision, actor):
    """Deliver a signal to a waiting run."""
    ws = ctx.ws
    try:
        if decision is not None:
            node, _, choice = decision.partition("=")
            if not choice:
                ctx.fail("--decision expects node=choice")
            run = ws.engine.signal(
                ws.name, run_id, {"kind": "human-decision", "node": node, "choice": choice}, actor=actor
            )
        elif tag is not None:
            run = ws.engine.load_run(ws.name, run_id)
            if resource is None:
                listener = run.listener() or {}
                resource = listener.get("resource")
                if resource is None:
                    ctx.fail("--tag needs --resource (no armed tag listener)")
            ws.resources.add_tag(resource, tag)
            run = ws.engine.load_run(ws.name, run_id)
            if run.status == "waiting":
                # Tag was already present (no broadcast): deliver directly.
                ws.engine.signal(
                    ws.name, run_id, {"kind": "tag-added", "resource": resource, "tag": tag},
                    actor=actor,
                )
        else:
            ctx.fail("nothing to deliver: use --tag or --decision")
    except (StaleSignal, SignalMismatch) as exc:
        ctx.fail(str(exc))
    ctx.emit(
        {"run_id": run_id, "status": run.status, "current_node": run.cursor},
        human=f"run {run_id}: {run.status}" + (f" at node {run.cursor}" if run.cursor else ""),
    )


@main.command("replay")
@click.argument("run_id")
@click.pass_obj
def replay_cmd(ctx: Ctx, run_id):
    """Replay a run from its log; exit 1 on divergence or incomplete log."""
    ws = ctx.ws
    try:
        result = ws.engine.replay(ws.name, run_id)
    except ReplayDivergence as exc:
        ctx.fail(f"replay divergence: {exc}")
    record = {
        "run_id": run_id,
        "status": result.status,
        "return": result.return_value,
        "trace": result.trace,
        "incomplete": result.incomplete,
    }
    ctx.emit(
        record,
        human=f"replay {run_id}: {result.status}, trace {' -> '.join(result.trace)}"
        + (f", return {json.dumps(encode_value(result.return_value))}" if result.return_value else "")
        + (", INCOMPLETE LOG" if result.incomplete else ""),
    )
    if result.incomplete:
        sys.exit(1)


@main.command("query")
@click.argument("slug")
@click.pass_obj
def query_cmd(ctx: Ctx, slug):
    """Evaluate a query to its cohort."""
    try:
        cohort = sorted(ctx.ws.cohort(slug))
    except UnknownSlug:
        ctx.fail(f"unknown query {slug!r}")
    ctx.emit({"query": slug, "cohort": cohort}, human="\n".join(cohort) or "(empty cohort)")


@main.command("metric")
@click.argument("slug")
@click.pass_obj
def metric_cmd(ctx: Ctx, slug):
    """Compute one metric sample now."""
    try:
        sample = ctx.ws.sample_metric(slug)
    except UnknownSlug as exc:
        ctx.fail(f"unknown metric or query: {exc}")
    ctx.emit(
        sample.to_record(),
        human=f"{slug} = {sample.value} (cohort {sample.cohort_size}, skipped {sample.skipped})",
    )


@main.command("trigger")
@click.argument("slug")
@click.option("--fire", is_flag=True, help="Fire now regardless of schedule")
@click.pass_obj
def trigger_cmd(ctx: Ctx, slug, fire):
    """Fire a trigger over its source cohort."""
    if not fire:
        ctx.fail("pass --fire to launch runs")
    try:
        started = ctx.ws.fire_trigger(slug)
    except UnknownSlug:
        ctx.fail(f"unknown trigger {slug!r}")
    ctx.emit({"trigger": slug, "started": started}, human="\n".join(started) or "(no runs started)")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--three-clinic", "use_builtin", is_flag=True, help="Use the built-in three-clinic profiles")
@click.pass_obj
def simulate_cmd(ctx: Ctx, config_path, use_builtin):
    """Run the multi-clinic pilot simulation and print the report."""
    if config_path:
        profiles, options = load_config(config_path)
    elif use_builtin:
        profiles, options = three_clinic_profiles(), {}
    else:
        ctx.fail("pass --config FILE or --three-clinic")
    report = simulate(profiles, **options)
    if ctx.output == "json":
        for record in report.records():
            click.echo(json.dumps(encode_value(record), sort_keys=True))
    else:
        click.echo(report.table())


@main.command("resources")
@click.argument("action", type=click.Choice(["import", "export"]))
@click.option("--file", "path", type=click.Path(), default=None)
@click.pass_obj
def resources_cmd(ctx: Ctx, action, path):
    """Import/export resources as line-delimited JSON records."""
    ws = ctx.ws
    if action == "import":
        if path is None:
            ctx.fail("import needs --file")
        count = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                ws.resources.put(Resource.from_record(json.loads(line)))
                count += 1
        ctx.emit({"imported": count}, human=f"imported {count} resources")
    else:
        out = sys.stdout if path is None else open(path, "w", encoding="utf-8")
        for r in ws.resources.all():
            out.write(json.dumps(encode_value(r.to_record()), sort_keys=True) + "\n")
        if path is not None:
            out.close()
            ctx.emit({"exported": str(path)}, human=f"exported to {path}")


@main.command("tag")
@click.argument("resource_id")
@click.argument("tag")
@click.option("--remove", is_flag=True)
@click.pass_obj
def tag_cmd(ctx: Ctx, resource_id, tag, remove):
    """Add or remove a tag (delivers await-with-tag signals)."""
    ws = ctx.ws
    ws.engine.recover_workspace(ws.name)  # arm listeners of waiting runs
    try:
        changed = (
            ws.resources.remove_tag(resource_id, tag)
            if remove
            else ws.resources.add_tag(resource_id, tag)
        )
    except Exception as exc:
        ctx.fail(str(exc))
    ctx.emit(
        {"resource": resource_id, "tag": tag, "changed": changed},
        human=f"{'removed' if remove else 'added'} :{tag} {'(no-op)' if not changed else ''}",
    )


@main.command("serve")
@click.option("--addr", default="127.0.0.1:8321", show_default=True)
@click.pass_obj
def serve_cmd(ctx: Ctx, addr):
    """Serve the HTTP API (and recover non-terminal runs)."""
    import uvicorn

    from graphflow.api import create_app

    lock_path = Path(ctx.root) / ".lock"
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    if lock_path.exists():
        try:
            pid = int(lock_path.read_text(encoding="utf-8").strip())
            os.kill(pid, 0)  # raises ProcessLookupError when the holder is gone
        except (ValueError, ProcessLookupError):
            lock_path.unlink(missing_ok=True)  # stale lock from a dead server
        else:
            ctx.fail(f"workspace root is locked by pid {pid} ({lock_path})")
    lock_path.write_text(str(os.getpid()), encoding="utf-8")
    try:
        store = FileEventStore(ctx.root)
        names = set(store.list_workspaces()) | {ctx.workspace_name}
        workspaces = {}
        for name in sorted(names):
            ws = open_workspace(ctx.root, name)
            ws.engine.recover_workspace(name)
            workspaces[name] = ws
        host, _, port = addr.partition(":")
        uvicorn.run(create_app(workspaces), host=host, port=int(port or 8321))
    finally:
        lock_path.unlink(missing_ok=True)


if __name__ == "__main__":
    main()
