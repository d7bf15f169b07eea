"""Declaration ASTs produced by the GFL parser.

Everything is a frozen dataclass built from tuples so that declarations
compare structurally: parse(serialize(d)) == d is the round-trip contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from graphflow.predicates import Keyword, Predicate, PropertyClaim, Term, Value, VarPath


def slugify(name: str) -> str:
    """Keyword identifier derived from a display name: "COO Review" -> coo-review."""
    out: list[str] = []
    for ch in name.lower():
        if ch.isalnum():
            out.append(ch)
        elif out and out[-1] != "-":
            out.append("-")
    return "".join(out).rstrip("-")


@dataclass(frozen=True)
class LaneDecl:
    name: str
    attrs: tuple[tuple[str, Value], ...] = ()

    @property
    def slug(self) -> str:
        return slugify(self.name)


@dataclass(frozen=True)
class EdgeRef:
    label: str  # to | yes | no | maybe
    target: str


@dataclass(frozen=True)
class TagFilter:
    mode: str  # with | without
    tag: Keyword


@dataclass(frozen=True)
class FieldFilter:
    name: Keyword
    op: str
    value: Value


Filter = Union[TagFilter, FieldFilter]

# Values an action argument can take: a plain term, an inline predicate
# (decision conditions), or a filter list (listener subscriptions).
ArgValue = Union[Term, Predicate, tuple[Filter, ...]]


@dataclass(frozen=True)
class ActionDecl:
    callee: str
    args: tuple[tuple[str, ArgValue], ...] = ()
    pos: tuple[Term, ...] = ()
    assigns: VarPath | None = None
    requires: Predicate | None = None
    ensures: Predicate | None = None

    def arg(self, name: str) -> ArgValue | None:
        for k, v in self.args:
            if k == name:
                return v
        return None


@dataclass(frozen=True)
class NodeDecl:
    id: str
    type: str
    label: str
    lane: str
    edges: tuple[EdgeRef, ...] = ()
    description: str | None = None
    ext_type: str | None = None
    assigned: tuple[str, ...] = ()
    requires: Predicate | None = None
    action: ActionDecl | None = None
    ensures: Predicate | None = None
    properties: tuple[PropertyClaim, ...] = ()
    layout: tuple[float, float] | None = None
    weight: tuple[float, float] | None = None


@dataclass(frozen=True)
class DiagramDecl:
    name: str
    slug: str
    role: str | None = None
    description: str | None = None
    lanes: tuple[LaneDecl, ...] = ()
    inputs: tuple[tuple[str, Keyword], ...] = ()
    outputs: tuple[tuple[str, Keyword], ...] = ()
    requires: tuple[Predicate, ...] = ()
    ensures: tuple[Predicate, ...] = ()
    properties: tuple[PropertyClaim, ...] = ()
    variables: tuple[tuple[VarPath, Value], ...] = ()
    nodes: tuple[NodeDecl, ...] = ()

    kind = "diagram"

    def node(self, node_id: str) -> NodeDecl | None:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None


@dataclass(frozen=True)
class QueryDecl:
    name: str
    slug: str
    description: str | None = None
    resource_type: Keyword = Keyword("resource")
    ext_type: str | None = None
    filters: tuple[Filter, ...] = ()

    kind = "query"


@dataclass(frozen=True)
class MetricDecl:
    name: str
    slug: str
    description: str | None = None
    query: str = ""
    aggregation: str = "count"
    field: Keyword | None = None
    schedule: str | None = None

    kind = "metric"


@dataclass(frozen=True)
class SwimlaneAssignment:
    op: str  # assign-swimlane-contact | assign-swimlane-contact-by-ext-id
    lane: str
    term: Term


@dataclass(frozen=True)
class TriggerDecl:
    name: str
    slug: str
    description: str | None = None
    trigger_type: Keyword | None = None
    active: bool = True
    auto_start: bool = False
    schedule: str | None = None
    source_query: str = ""
    repeat: str | None = None
    calls: str = ""
    assignments: tuple[SwimlaneAssignment, ...] = ()

    kind = "trigger"


Declaration = Union[DiagramDecl, QueryDecl, MetricDecl, TriggerDecl]


@dataclass(frozen=True)
class SourceDocument:
    text: str
    origin: str = "<memory>"
