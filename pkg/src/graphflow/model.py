"""Diagram objects: a directed labeled graph plus lane/type/action metadata.

Built from parsed diagram declarations; immutable after build and shared
freely. Provides the structural analyses admission depends on: topological
ordering with deterministic tie-breaking, cycle witnesses, and fork
detection.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Iterable

from graphflow.gfl.ast import ActionDecl, DiagramDecl, NodeDecl
from graphflow.predicates import Predicate, PropertyClaim, Value, VarPath

# Lanes considered verifier-eligible unless the declaration or caller says
# otherwise. Lane attribute `core: true` marks additional core lanes.
DEFAULT_CORE_LANES = frozenset({"system", "runtime"})


@dataclass(frozen=True)
class Edge:
    source: str
    label: str  # to | yes | no | maybe
    target: str


@dataclass(frozen=True)
class StructureError:
    kind: str  # dangling-target | unknown-lane | duplicate-node | missing-branch | duplicate-edge
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


class BuildError(Exception):
    def __init__(self, errors: list[StructureError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


@dataclass(frozen=True)
class Node:
    id: str
    type: str
    label: str
    lane: str
    assigned_lanes: tuple[str, ...] = ()
    action: ActionDecl | None = None
    requires: Predicate | None = None
    ensures: Predicate | None = None
    properties: tuple[PropertyClaim, ...] = ()
    subdiagram: str | None = None
    ext_type: str | None = None
    description: str | None = None
    layout: tuple[float, float] | None = None
    weight: tuple[float, float] | None = None


@dataclass(frozen=True)
class Diagram:
    slug: str
    name: str
    role: str | None
    nodes: tuple[Node, ...]  # document order
    edges: tuple[Edge, ...]
    lanes: tuple[str, ...]  # lane slugs, declared order
    lane_names: tuple[str, ...]  # display names, same order
    core_lanes: frozenset[str]
    inputs: tuple[tuple[str, str], ...]  # name -> type keyword name
    outputs: tuple[tuple[str, str], ...]
    requires: tuple[Predicate, ...]
    ensures: tuple[Predicate, ...]
    properties: tuple[PropertyClaim, ...]
    variables: tuple[tuple[VarPath, Value], ...]
    description: str | None = None
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def node(self, node_id: str) -> Node:
        return self._index[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    def out_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.source == node_id]

    def in_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.target == node_id]

    def out_edge(self, node_id: str, label: str) -> Edge | None:
        for e in self.edges:
            if e.source == node_id and e.label == label:
                return e
        return None

    def entry_nodes(self) -> list[str]:
        targets = {e.target for e in self.edges}
        entries = [n.id for n in self.nodes if n.id not in targets]
        return sorted(entries, key=node_id_key)

    def is_core(self, node_id: str) -> bool:
        return self.node(node_id).lane in self.core_lanes


_ID_RE = re.compile(r"^(\d+)(.*)$")


def node_id_key(node_id: str) -> tuple:
    """Order node ids by (numeric prefix, alpha suffix): 1 < 2 < 5a < 5b < 10."""
    m = _ID_RE.match(node_id)
    if m:
        return (0, int(m.group(1)), m.group(2))
    return (1, 0, node_id)


def build_diagram(
    decl: DiagramDecl,
    core_lanes: Iterable[str] | None = None,
) -> Diagram:
    """Construct the diagram object, validating structural invariants.

    Raises BuildError carrying every StructureError found.
    """
    errors: list[StructureError] = []

    lane_slugs: list[str] = []
    lane_names: list[str] = []
    declared_core: set[str] = set()
    for lane in decl.lanes:
        lane_slugs.append(lane.slug)
        lane_names.append(lane.name)
        if dict(lane.attrs).get("core") is True:
            declared_core.add(lane.slug)

    if core_lanes is not None:
        cores = frozenset(core_lanes)
    else:
        cores = frozenset(declared_core | (DEFAULT_CORE_LANES & set(lane_slugs)))

    seen: dict[str, NodeDecl] = {}
    for nd in decl.nodes:
        if nd.id in seen:
            errors.append(StructureError("duplicate-node", nd.id, f"duplicate node id {nd.id!r}"))
        seen[nd.id] = nd

    nodes: list[Node] = []
    edges: list[Edge] = []
    edge_keys: set[tuple[str, str]] = set()
    for nd in decl.nodes:
        if lane_slugs and nd.lane not in lane_slugs:
            errors.append(
                StructureError("unknown-lane", nd.id, f"node {nd.id} references unknown lane @{nd.lane}")
            )
        for extra in nd.assigned:
            if lane_slugs and extra not in lane_slugs:
                errors.append(
                    StructureError("unknown-lane", nd.id, f"node {nd.id} assigns unknown lane :{extra}")
                )
        control = 0
        for e in nd.edges:
            if e.target not in seen:
                errors.append(
                    StructureError("dangling-target", e.target, f"edge {nd.id} -{e.label}-> {e.target} has no target node")
                )
            key = (nd.id, e.label)
            if key in edge_keys and e.label != "to":
                # Control labels must be unambiguous; parallel `to` edges are
                # representable (fork detection and admission reject them).
                errors.append(
                    StructureError("duplicate-edge", nd.id, f"node {nd.id} has two {e.label!r} edges")
                )
            edge_keys.add(key)
            edges.append(Edge(nd.id, e.label, e.target))
            if e.label in ("yes", "no", "maybe"):
                control += 1
        if nd.type == "decision" and control == 0:
            errors.append(
                StructureError("missing-branch", nd.id, f"decision node {nd.id} has no control edge")
            )
        subdiagram = nd.action.callee if (nd.type in ("diagram", "queue") and nd.action) else None
        nodes.append(
            Node(
                id=nd.id,
                type=nd.type,
                label=nd.label,
                lane=nd.lane,
                assigned_lanes=nd.assigned,
                action=nd.action,
                requires=nd.requires,
                ensures=nd.ensures,
                properties=nd.properties,
                subdiagram=subdiagram,
                ext_type=nd.ext_type,
                description=nd.description,
                layout=nd.layout,
                weight=nd.weight,
            )
        )

    if errors:
        raise BuildError(errors)

    diagram = Diagram(
        slug=decl.slug,
        name=decl.name,
        role=decl.role,
        nodes=tuple(nodes),
        edges=tuple(edges),
        lanes=tuple(lane_slugs),
        lane_names=tuple(lane_names),
        core_lanes=cores,
        inputs=tuple((k, v.name) for k, v in decl.inputs),
        outputs=tuple((k, v.name) for k, v in decl.outputs),
        requires=decl.requires,
        ensures=decl.ensures,
        properties=decl.properties,
        variables=decl.variables,
        description=decl.description,
    )
    for n in nodes:
        diagram._index[n.id] = n
    return diagram


@dataclass(frozen=True)
class CycleWitness:
    edges: tuple[Edge, ...]

    def __str__(self) -> str:
        return " ".join(f"{e.source} -{e.label}-> {e.target}" for e in self.edges)


def topological_order(d: Diagram) -> list[str] | CycleWitness:
    """Kahn's algorithm with node-id tie-breaking; a cycle is a value.

    In the acyclic case every edge goes forward and entry nodes surface in
    ascending id order.
    """
    cycle = find_cycle(d)
    if cycle is not None:
        return cycle
    indegree = {n.id: 0 for n in d.nodes}
    for e in d.edges:
        indegree[e.target] += 1
    heap = [(node_id_key(nid), nid) for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        _, nid = heapq.heappop(heap)
        order.append(nid)
        for e in d.out_edges(nid):
            indegree[e.target] -= 1
            if indegree[e.target] == 0:
                heapq.heappush(heap, (node_id_key(e.target), e.target))
    return order


_EDGE_LABEL_ORDER = {"to": 0, "yes": 1, "no": 2, "maybe": 3}


def find_cycle(d: Diagram) -> CycleWitness | None:
    """DFS cycle detection; the witness starts at the closing back-edge."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n.id: WHITE for n in d.nodes}
    path: list[Edge] = []

    def ordered_out(nid: str) -> list[Edge]:
        return sorted(d.out_edges(nid), key=lambda e: _EDGE_LABEL_ORDER[e.label])

    def visit(nid: str) -> CycleWitness | None:
        color[nid] = GRAY
        for e in ordered_out(nid):
            if color[e.target] == GRAY:
                start = next(i for i, pe in enumerate(path) if pe.source == e.target)
                return CycleWitness((e, *path[start:]))
            if color[e.target] == WHITE:
                path.append(e)
                found = visit(e.target)
                if found is not None:
                    return found
                path.pop()
        color[nid] = BLACK
        return None

    for n in d.nodes:
        if color[n.id] == WHITE:
            found = visit(n.id)
            if found is not None:
                return found
    return None


@dataclass(frozen=True)
class Fork:
    node: str
    targets: tuple[str, ...]


def detect_forks(d: Diagram) -> list[Fork]:
    """A fork is >1 outgoing `to` edges; control branches and joins are not."""
    forks: list[Fork] = []
    for n in d.nodes:
        targets = tuple(e.target for e in d.out_edges(n.id) if e.label == "to")
        if len(targets) > 1:
            forks.append(Fork(n.id, targets))
    return forks


def to_interchange(d: Diagram) -> dict:
    """Graph-interchange form: node list + edge triples, for the dashboard."""
    order = topological_order(d)
    return {
        "slug": d.slug,
        "name": d.name,
        "lanes": [{"slug": s, "name": n} for s, n in zip(d.lanes, d.lane_names)],
        "core_lanes": sorted(d.core_lanes),
        "nodes": [
            {
                "id": n.id,
                "type": n.type,
                "label": n.label,
                "lane": n.lane,
                "action": n.action.callee if n.action else None,
            }
            for n in d.nodes
        ],
        "edges": [[e.source, e.label, e.target] for e in d.edges],
        "order": order if isinstance(order, list) else None,
        "acyclic": isinstance(order, list),
    }
