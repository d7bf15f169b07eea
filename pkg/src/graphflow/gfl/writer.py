"""Canonical GFL serialization: parse(serialize(d)) == d structurally."""

from __future__ import annotations

from graphflow.predicates import Keyword, Literal, Predicate, VarPath, format_value

from .ast import (
    ActionDecl,
    Declaration,
    DiagramDecl,
    FieldFilter,
    Filter,
    MetricDecl,
    NodeDecl,
    QueryDecl,
    TagFilter,
    TriggerDecl,
    slugify,
)


def serialize(decl: Declaration) -> str:
    if isinstance(decl, DiagramDecl):
        return _diagram(decl)
    if isinstance(decl, QueryDecl):
        return _query(decl)
    if isinstance(decl, MetricDecl):
        return _metric(decl)
    if isinstance(decl, TriggerDecl):
        return _trigger(decl)
    raise TypeError(f"not a declaration: {decl!r}")


def serialize_document(decls: list[Declaration]) -> str:
    return "\n".join(serialize(d) for d in decls)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _header(kind: str, decl) -> str:
    parts = [kind]
    role = getattr(decl, "role", None)
    if role:
        parts.append(f"[{role}]")
    if decl.slug != slugify(decl.name):
        parts.append(f":{decl.slug}")
    parts.append(_quote(decl.name))
    return " ".join(parts) + ":"


def _description(out: list[str], text: str | None, indent: str) -> None:
    if text is None:
        return
    if "\n" in text:
        out.append(f"{indent}description: |")
        for line in text.split("\n"):
            out.append(f"{indent}  {line}" if line else "")
    else:
        out.append(f"{indent}description: {_quote(text)}")


def _filters_block(out: list[str], filters: tuple[Filter, ...], indent: str) -> None:
    if not filters:
        return
    out.append(f"{indent}filters:")
    for f in filters:
        if isinstance(f, TagFilter):
            out.append(f"{indent}  - {f.mode}: {f.tag}")
        else:
            assert isinstance(f, FieldFilter)
            out.append(f"{indent}  - field: {f.name}")
            out.append(f"{indent}    operator: :{f.op}")
            out.append(f"{indent}    value: {format_value(f.value)}")


def _interval_block(out: list[str], key: str, interval: str | None, indent: str) -> None:
    if interval is None:
        return
    out.append(f"{indent}{key}:")
    out.append(f"{indent}  interval: :{interval}")


def _query(q: QueryDecl) -> str:
    out = [_header("query", q)]
    _description(out, q.description, "  ")
    out.append(f"  resource-type: {q.resource_type}")
    if q.ext_type is not None:
        out.append(f"  ext-type: {_quote(q.ext_type)}")
    _filters_block(out, q.filters, "  ")
    return "\n".join(out) + "\n"


def _metric(m: MetricDecl) -> str:
    out = [_header("metric", m)]
    _description(out, m.description, "  ")
    out.append(f"  query: :{m.query}")
    out.append(f"  aggregation: :{m.aggregation}")
    if m.field is not None:
        out.append(f"  field: {m.field}")
    _interval_block(out, "schedule", m.schedule, "  ")
    return "\n".join(out) + "\n"


def _trigger(t: TriggerDecl) -> str:
    out = [_header("trigger", t)]
    if t.trigger_type is not None:
        out.append(f"  trigger-type: {t.trigger_type}")
    _description(out, t.description, "  ")
    out.append(f"  active: {'true' if t.active else 'false'}")
    out.append(f"  auto-start: {'true' if t.auto_start else 'false'}")
    _interval_block(out, "schedule", t.schedule, "  ")
    out.append("  source:")
    out.append(f"    query: :{t.source_query}")
    _interval_block(out, "repeat", t.repeat, "  ")
    out.append(f"  calls: :{t.calls}")
    if t.assignments:
        out.append("  assignment:")
        for a in t.assignments:
            key = "contactId" if a.op == "assign-swimlane-contact" else "extId"
            out.append(f"    - (:{a.op} {{")
            out.append(f"      .swimlane: :{a.lane}")
            out.append(f"      .{key}: {a.term.to_gfl()}")
            out.append("    })")
    return "\n".join(out) + "\n"


def _diagram(d: DiagramDecl) -> str:
    out = [_header("diagram", d)]
    _description(out, d.description, "  ")
    if d.lanes:
        out.append("  swimlanes:")
        for lane in d.lanes:
            if lane.attrs:
                out.append(f"    - {_quote(lane.name)}:")
                for k, v in lane.attrs:
                    out.append(f"      {k}: {format_value(v)}")
            else:
                out.append(f"    - {_quote(lane.name)}")
    for key, pairs in (("inputs", d.inputs), ("outputs", d.outputs)):
        if pairs:
            out.append(f"  {key}: {{")
            for name, ktype in pairs:
                out.append(f"    .{name}: {ktype}")
            out.append("  }")
    for key, preds in (("requires", d.requires), ("ensures", d.ensures), ("properties", d.properties)):
        if preds:
            out.append(f"  {key}:")
            for p in preds:
                out.append(f"    - {p.to_gfl()}")
    if d.variables:
        out.append("  variables:")
        for path, value in d.variables:
            out.append(f"    {path.to_gfl()}: {format_value(value)}")
    if d.nodes:
        out.append("  model:")
        for n in d.nodes:
            _node(out, n)
    return "\n".join(out) + "\n"


def _node(out: list[str], n: NodeDecl) -> None:
    header = f"    {n.id}. [{n.type}] {_quote(n.label)} @{n.lane}"
    for e in n.edges:
        header += f" --> {e.target}" if e.label == "to" else f" :{e.label}--> {e.target}"
    out.append(header + ":")
    ind = "      "
    _description(out, n.description, ind)
    if n.ext_type is not None:
        out.append(f"{ind}ext-type: {_quote(n.ext_type)}")
    if n.assigned:
        out.append(f"{ind}assigned: [{', '.join(':' + a for a in n.assigned)}]")
    if n.requires is not None:
        out.append(f"{ind}requires: {n.requires.to_gfl()}")
    if n.action is not None:
        _action(out, n.action, ind)
    if n.ensures is not None:
        out.append(f"{ind}ensures: {n.ensures.to_gfl()}")
    if n.properties:
        out.append(f"{ind}properties:")
        for p in n.properties:
            out.append(f"{ind}  - {p.to_gfl()}")
    if n.layout is not None:
        out.append(f"{ind}layout: [{_num(n.layout[0])}, {_num(n.layout[1])}]")
    if n.weight is not None:
        out.append(f"{ind}weight: [{_num(n.weight[0])}, {_num(n.weight[1])}]")


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else str(x)


def _action(out: list[str], a: ActionDecl, ind: str) -> None:
    out.append(f"{ind}action:")
    inner = ind + "  "
    if not a.args and not a.pos:
        out.append(f"{inner}calls: :{a.callee}")
    else:
        head = f"{inner}calls: (:{a.callee}"
        for t in a.pos:
            head += f" {t.to_gfl()}"
        if a.args:
            out.append(head + " {")
            for k, v in a.args:
                _arg(out, k, v, inner + "  ")
            out.append(f"{inner}}})")
        else:
            out.append(head + ")")
    if a.assigns is not None:
        out.append(f"{inner}assigns: {a.assigns.to_gfl()}")
    if a.requires is not None:
        out.append(f"{inner}requires: {a.requires.to_gfl()}")
    if a.ensures is not None:
        out.append(f"{inner}ensures: {a.ensures.to_gfl()}")


def _arg(out: list[str], key: str, value, ind: str) -> None:
    if isinstance(value, tuple):  # filter list
        out.append(f"{ind}.{key}:")
        for f in value:
            assert isinstance(f, TagFilter)
            out.append(f"{ind}  - {f.mode}: {f.tag}")
        return
    if isinstance(value, (VarPath, Literal)):
        out.append(f"{ind}.{key}: {value.to_gfl()}")
        return
    out.append(f"{ind}.{key}: {value.to_gfl()}")  # predicates
