"""Verified-core admission: structural checks, proof obligations, discharge.

Obligation antecedents accumulate along the graph: a node's context is the
diagram precondition, variable initializations, and the effects plus declared
postconditions of every ancestor, with facts about reassigned paths killed
and decision branch conditions added per side. Logical obligations go to the
implication checker; property claims are discharged empirically by running
the compile-time evaluator over sampled inputs. Unknown blocks admission.
"""

from __future__ import annotations

import hashlib
import random
import threading
import time
import zlib
from dataclasses import dataclass

from graphflow.actions import assigned_path, derived_facts, is_pure_builtin
from graphflow.evaluator import ContractViolation, Outcome, eval_diagram
from graphflow.gfl.ast import DiagramDecl
from graphflow.gfl.writer import serialize
from graphflow.model import Diagram, build_diagram, detect_forks, find_cycle
from graphflow.predicates import (
    And,
    Compare,
    Contradiction,
    Literal,
    Predicate,
    PropertyClaim,
    Proven,
    Refuted,
    Unknown,
    VarPath,
    abstract,
    complement,
    eval_predicate,
    EvalError,
    implies,
)

DEFAULT_BUDGET = 1000
SAMPLE_RANGE = 1_000_000
BOUNDARY_VALUES = (None, 0, 1, -1)


@dataclass
class Obligation:
    id: str
    kind: str  # edge-composition | diagram-precondition-entry | node-action-contract
    #          | diagram-postcondition-exit | property-empirical
    source: str
    antecedent: tuple[Predicate, ...] = ()
    consequent: Predicate | None = None
    claim: PropertyClaim | None = None
    status: str = "pending"
    witness: dict | None = None
    samples: int = 0
    detail: str = ""

    @property
    def discharged(self) -> bool:
        return self.status in ("proven", "empirically-passed")

    def describe(self) -> str:
        parts = [self.id, self.kind, self.status]
        if self.witness is not None:
            parts.append(f"witness={self.witness}")
        if self.detail:
            parts.append(self.detail)
        return " | ".join(parts)


@dataclass
class AdmissionReport:
    slug: str
    structural_reasons: list[str]
    obligations: list[Obligation]
    admitted: bool

    def lines(self) -> list[str]:
        out = [f"diagram {self.slug}: {'admitted' if self.admitted else 'rejected'}"]
        for r in self.structural_reasons:
            out.append(f"  structural | {r}")
        for ob in self.obligations:
            out.append("  " + ob.describe())
        return out


@dataclass
class Automation:
    id: str
    slug: str
    content_hash: str
    diagram: Diagram
    decl: DiagramDecl
    requires: tuple[Predicate, ...]
    ensures: tuple[Predicate, ...]
    obligations: list[Obligation]
    admitted_at: float
    report: AdmissionReport


class AdmissionRejected(Exception):
    def __init__(self, report: AdmissionReport):
        super().__init__("\n".join(report.lines()))
        self.report = report


class BindingError(Exception):
    pass


# ---------------------------------------------------------------------------
# Structural admissibility
# ---------------------------------------------------------------------------


def check_admissibility(d: Diagram) -> list[str]:
    """Reasons the diagram is outside the verified core; empty means ok."""
    reasons: list[str] = []
    cycle = find_cycle(d)
    if cycle is not None:
        reasons.append(f"cycle: {cycle}")
    for fork in detect_forks(d):
        reasons.append(f"fork at node {fork.node}: to-edges {', '.join(fork.targets)}")
    bad_lanes = sorted({d.node(n.id).lane for n in d.nodes if not d.is_core(n.id)})
    if bad_lanes:
        reasons.append(
            "lane coverage: nodes outside core lanes (" + ", ".join("@" + l for l in bad_lanes) + ")"
        )
    for n in d.nodes:
        if n.type in ("wait", "meeting"):
            reasons.append(f"effect boundary: node {n.id} is a {n.type} node")
        if n.action is not None and not is_pure_builtin(n.action.callee):
            reasons.append(f"effectful action :{n.action.callee} at node {n.id}")
    return reasons


# ---------------------------------------------------------------------------
# Obligation generation
# ---------------------------------------------------------------------------


def _mentions(p: Predicate, prefix: VarPath) -> bool:
    k = prefix.segments

    def term_hits(t) -> bool:
        return isinstance(t, VarPath) and t.segments[: len(k)] == k

    if isinstance(p, Compare):
        return term_hits(p.lhs) or term_hits(p.rhs)
    if isinstance(p, And):
        return any(_mentions(q, prefix) for q in p.items)
    from graphflow.predicates import WithTag

    if isinstance(p, WithTag):
        return term_hits(p.resource)
    return False


def _kill(facts: list[Predicate], path: VarPath | None) -> list[Predicate]:
    if path is None:
        return facts
    return [f for f in facts if not _mentions(f, path)]


def _dedup(facts: list[Predicate]) -> list[Predicate]:
    seen = []
    for f in facts:
        if f not in seen:
            seen.append(f)
    return seen


def _ancestors(d: Diagram, nid: str) -> set[str]:
    back: dict[str, set[str]] = {n.id: set() for n in d.nodes}
    for e in d.edges:
        back[e.target].add(e.source)
    out: set[str] = set()
    stack = [nid]
    while stack:
        cur = stack.pop()
        for p in back[cur]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def _reachable(d: Diagram, start: str, goal: str) -> bool:
    if start == goal:
        return True
    seen = set()
    stack = [start]
    while stack:
        cur = stack.pop()
        for e in d.out_edges(cur):
            if e.target == goal:
                return True
            if e.target not in seen:
                seen.add(e.target)
                stack.append(e.target)
    return False


def _base_facts(d: Diagram) -> list[Predicate]:
    facts: list[Predicate] = list(d.requires)
    for path, value in d.variables:
        facts.append(Compare("eq", path, Literal(value)))
    return facts


def _branch_atom(d: Diagram, decision_id: str, toward: str) -> tuple[Predicate | None, bool]:
    """Condition contributed by a decision ancestor; (atom, opaque?)."""
    node = d.node(decision_id)
    yes_pred = node.action.arg("yes") if node.action else None
    if not isinstance(yes_pred, (Compare, And)):
        # with-tag or missing: opaque either way
        taken_label = _label_toward(d, decision_id, toward)
        return None, taken_label is not None
    taken_label = _label_toward(d, decision_id, toward)
    if taken_label == "yes":
        return yes_pred, False
    if taken_label == "no":
        comp = complement(yes_pred)
        return comp, comp is None
    return None, taken_label is not None  # maybe: no usable fact


def _label_toward(d: Diagram, decision_id: str, goal: str) -> str | None:
    """Which control label leads (exclusively) from the decision toward goal."""
    leading = [
        e.label
        for e in d.out_edges(decision_id)
        if _reachable(d, e.target, goal)
    ]
    if len(leading) == 1:
        return leading[0]
    return None  # both branches reconverge (or none): no usable condition


def _node_effects(d: Diagram, nid: str, context: list[Predicate]) -> list[Predicate]:
    """Facts holding after a node executes, given its entry context."""
    node = d.node(nid)
    facts = list(context)
    if node.action is not None:
        target = assigned_path(node.action)
        facts = _kill(facts, target)
        try:
            st = abstract([f for f in facts if not isinstance(f, PropertyClaim)])
        except Contradiction:
            st = abstract([])
        facts.extend(derived_facts(node.action, st))
        if node.action.ensures is not None:
            facts.append(node.action.ensures)
    if node.ensures is not None:
        facts.append(node.ensures)
    return _dedup(facts)


def _context_for(d: Diagram, nid: str, order: list[str]) -> tuple[list[Predicate], bool]:
    """Antecedent facts at a node's entry; (facts, involves_opaque_branch).

    Ancestors are threaded in sequential order. When a decision's branches
    reconverge before `nid` (a diamond), the nodes on those exclusive
    branches are excluded from effect threading — only one side actually
    ran, so assuming both would be unsound.
    """
    facts = _base_facts(d)
    opaque = False
    ancestor_set = _ancestors(d, nid)
    excluded: set[str] = set()
    for anc in ancestor_set:
        if d.node(anc).type != "decision":
            continue
        if _label_toward(d, anc, nid) is None:
            for e in d.out_edges(anc):
                stack = [e.target]
                while stack:
                    cur = stack.pop()
                    if cur == nid or cur in excluded:
                        continue
                    excluded.add(cur)
                    stack.extend(x.target for x in d.out_edges(cur))
            opaque = True
    for anc in (a for a in order if a in ancestor_set):
        if anc in excluded:
            continue
        anc_node = d.node(anc)
        if anc_node.type == "decision":
            atom, is_opaque = _branch_atom(d, anc, nid)
            opaque = opaque or is_opaque
            if atom is not None:
                facts.append(atom)
            continue
        facts = _node_effects(d, anc, facts)
    return _dedup(facts), opaque


def generate_obligations(d: Diagram) -> list[Obligation]:
    """Contract and composition obligations for an admissible diagram."""
    from graphflow.model import topological_order

    order = topological_order(d)
    assert isinstance(order, list), "generate_obligations needs an acyclic diagram"

    obs: list[Obligation] = []
    counter = 0

    def next_id(kind: str) -> str:
        nonlocal counter
        counter += 1
        return f"{d.slug}/{kind}/{counter}"

    entries = set(d.entry_nodes())
    for nid in order:
        node = d.node(nid)
        ctx, opaque = _context_for(d, nid, order)
        detail = "contextual obligation" + ("; opaque branch in context" if opaque else "")
        if node.requires is not None:
            in_edges = d.in_edges(nid)
            if nid in entries or not in_edges:
                obs.append(
                    Obligation(
                        id=next_id("entry"),
                        kind="diagram-precondition-entry",
                        source=f"entry node {nid}",
                        antecedent=tuple(ctx),
                        consequent=node.requires,
                        detail=detail,
                    )
                )
            for e in in_edges:
                obs.append(
                    Obligation(
                        id=next_id("edge"),
                        kind="edge-composition",
                        source=f"edge {e.source} -{e.label}-> {e.target}",
                        antecedent=tuple(ctx),
                        consequent=node.requires,
                        detail=detail,
                    )
                )
        declared = []
        if node.action is not None and node.action.ensures is not None:
            declared.append(("action", node.action.ensures))
        if node.ensures is not None:
            declared.append(("node", node.ensures))
        if declared:
            post = _node_effects_without_declared(d, nid, ctx)
            for which, ens in declared:
                obs.append(
                    Obligation(
                        id=next_id("contract"),
                        kind="node-action-contract",
                        source=f"{which} ensures at node {nid}",
                        antecedent=tuple(post),
                        consequent=ens,
                        detail=detail,
                    )
                )
        if (
            node.type == "milestone"
            and not d.out_edges(nid)
            and node.action is not None
            and node.action.callee == "return"
            and d.ensures
        ):
            post = _node_effects(d, nid, ctx)
            obs.append(
                Obligation(
                    id=next_id("exit"),
                    kind="diagram-postcondition-exit",
                    source=f"terminal milestone {nid}",
                    antecedent=tuple(post),
                    consequent=And(d.ensures) if len(d.ensures) > 1 else d.ensures[0],
                    detail=detail,
                )
            )

    for claim in d.properties:
        obs.append(
            Obligation(
                id=next_id("property"),
                kind="property-empirical",
                source="diagram properties",
                claim=claim,
                detail="checked empirically, never proven",
            )
        )
    return obs


def _node_effects_without_declared(d: Diagram, nid: str, context: list[Predicate]) -> list[Predicate]:
    """Post-state facts from the registered contract only (no declared ensures)."""
    node = d.node(nid)
    facts = list(context)
    if node.action is not None:
        target = assigned_path(node.action)
        facts = _kill(facts, target)
        try:
            st = abstract([f for f in facts if not isinstance(f, PropertyClaim)])
        except Contradiction:
            st = abstract([])
        facts.extend(derived_facts(node.action, st))
    return _dedup(facts)


# ---------------------------------------------------------------------------
# Discharge
# ---------------------------------------------------------------------------


def sample_inputs(d: Diagram, rng: random.Random) -> dict:
    inputs: dict = {}
    for name, _type in d.inputs:
        roll = rng.random()
        if roll < 0.2:
            inputs[name] = rng.choice(BOUNDARY_VALUES)
        elif roll < 0.6:
            inputs[name] = rng.randint(-SAMPLE_RANGE, SAMPLE_RANGE)
        else:
            inputs[name] = rng.uniform(-SAMPLE_RANGE, SAMPLE_RANGE)
    return inputs


def _valid_samples(d: Diagram, rng: random.Random, budget: int):
    produced = 0
    attempts = 0
    while produced < budget and attempts < budget * 20:
        attempts += 1
        inputs = sample_inputs(d, rng)
        from graphflow.evaluator import check_requires, initial_state

        if check_requires(d, initial_state(d, inputs)):
            continue
        produced += 1
        yield inputs


def _outcome_value(outcome: Outcome, term: VarPath | None):
    if term is None:
        return outcome.returned
    from graphflow.predicates import resolve_path, _UNBOUND

    v = resolve_path(VarPath(term.segments), outcome.state)
    return None if v is _UNBOUND else v


def discharge(
    obligations: list[Obligation],
    diagram: Diagram,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> list[Obligation]:
    """Dispatch logical obligations to the implication checker and property
    claims to the sampling evaluator; mutates statuses in place."""
    for ob in obligations:
        if ob.kind != "property-empirical":
            assert ob.consequent is not None
            res = implies(list(ob.antecedent), ob.consequent)
            if isinstance(res, Proven):
                ob.status = "proven"
            elif isinstance(res, Refuted):
                ob.status = "refuted"
                ob.witness = res.witness
            else:
                ob.status = "unknown"
                ob.detail = (ob.detail + "; " + res.reason).strip("; ")
        else:
            _discharge_property(ob, diagram, budget, seed)
    return obligations


def _discharge_property(ob: Obligation, d: Diagram, budget: int, seed: int) -> None:
    claim = ob.claim
    assert claim is not None
    rng = random.Random(seed ^ zlib.crc32(claim.kind.encode("utf-8")))
    count = 0
    try:
        if claim.kind == "is-deterministic":
            term = claim.args[0] if claim.args else None
            path = term if isinstance(term, VarPath) else None
            for inputs in _valid_samples(d, rng, budget):
                first = eval_diagram(d, inputs)
                second = eval_diagram(d, inputs)
                if _outcome_value(first, path) != _outcome_value(second, path) or (
                    first.trace != second.trace
                ):
                    ob.status = "empirically-failed"
                    ob.witness = {"inputs": inputs}
                    return
                count += 1
        elif claim.kind == "is-total":
            for inputs in _valid_samples(d, rng, budget):
                outcome = eval_diagram(d, inputs)
                if outcome.threw is not None and not outcome.guarded_throw:
                    ob.status = "empirically-failed"
                    ob.witness = {"inputs": inputs, "threw": outcome.threw}
                    return
                count += 1
        elif claim.kind == "is-commutative":
            if len(claim.args) != 2 or not all(isinstance(t, VarPath) for t in claim.args):
                ob.status = "unknown"
                ob.detail = "is-commutative needs two input paths"
                return
            a = claim.args[0].segments[0]
            b = claim.args[1].segments[0]
            for inputs in _valid_samples(d, rng, budget):
                swapped = dict(inputs)
                swapped[a], swapped[b] = inputs.get(b), inputs.get(a)
                first = eval_diagram(d, inputs)
                second = eval_diagram(d, swapped)
                if (first.returned, first.threw) != (second.returned, second.threw):
                    ob.status = "empirically-failed"
                    ob.witness = {"inputs": inputs}
                    return
                count += 1
        elif claim.kind == "assumed-boundary":
            # A declared assumption, not a checkable claim: trivially passes.
            count = budget
        else:  # pragma: no cover
            ob.status = "unknown"
            return
    except (ContractViolation, EvalError) as exc:
        ob.status = "empirically-failed"
        ob.witness = {"error": str(exc)}
        return
    ob.status = "empirically-passed"
    ob.samples = count


# ---------------------------------------------------------------------------
# Admission and the automation library
# ---------------------------------------------------------------------------


def content_hash(decl: DiagramDecl) -> str:
    return hashlib.sha256(serialize(decl).encode("utf-8")).hexdigest()[:16]


def verify_diagram(
    decl: DiagramDecl,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    core_lanes=None,
) -> AdmissionReport:
    """Full admission pipeline without storing anything."""
    diagram = build_diagram(decl, core_lanes=core_lanes)
    reasons = check_admissibility(diagram)
    if reasons:
        return AdmissionReport(diagram.slug, reasons, [], admitted=False)
    obligations = generate_obligations(diagram)
    discharge(obligations, diagram, budget=budget, seed=seed)
    admitted = all(ob.discharged for ob in obligations)
    return AdmissionReport(diagram.slug, [], obligations, admitted=admitted)


class AutomationLibrary:
    """Admitted automations, keyed by slug and content hash; single-writer."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_key: dict[tuple[str, str], Automation] = {}
        self._latest: dict[str, Automation] = {}

    def admit(
        self,
        decl: DiagramDecl,
        budget: int = DEFAULT_BUDGET,
        seed: int = 0,
        core_lanes=None,
    ) -> Automation | AdmissionReport:
        """Admit a diagram; idempotent for identical content."""
        digest = content_hash(decl)
        with self._lock:
            existing = self._by_key.get((decl.slug, digest))
            if existing is not None:
                return existing
        report = verify_diagram(decl, budget=budget, seed=seed, core_lanes=core_lanes)
        if not report.admitted:
            return report
        diagram = build_diagram(decl, core_lanes=core_lanes)
        automation = Automation(
            id=f"{decl.slug}-{digest}",
            slug=decl.slug,
            content_hash=digest,
            diagram=diagram,
            decl=decl,
            requires=diagram.requires,
            ensures=diagram.ensures,
            obligations=report.obligations,
            admitted_at=time.time(),
            report=report,
        )
        with self._lock:
            self._by_key[(decl.slug, digest)] = automation
            self._latest[decl.slug] = automation
        return automation

    def restore(self, decl: DiagramDecl, record: dict) -> Automation | None:
        """Re-register a previously admitted automation from its stored record.

        The content hash must match the stored one; drifted sources need a
        fresh admission.
        """
        digest = content_hash(decl)
        if digest != record.get("hash"):
            return None
        with self._lock:
            existing = self._by_key.get((decl.slug, digest))
            if existing is not None:
                return existing
        diagram = build_diagram(decl)
        automation = Automation(
            id=record.get("id", f"{decl.slug}-{digest}"),
            slug=decl.slug,
            content_hash=digest,
            diagram=diagram,
            decl=decl,
            requires=diagram.requires,
            ensures=diagram.ensures,
            obligations=[],
            admitted_at=record.get("admitted_at", 0.0),
            report=AdmissionReport(decl.slug, [], [], admitted=True),
        )
        with self._lock:
            self._by_key[(decl.slug, digest)] = automation
            self._latest[decl.slug] = automation
        return automation

    def get(self, slug: str) -> Automation | None:
        with self._lock:
            return self._latest.get(slug)

    def get_by_id(self, automation_id: str) -> Automation | None:
        with self._lock:
            for a in self._by_key.values():
                if a.id == automation_id:
                    return a
        return None

    def list(self) -> list[Automation]:
        with self._lock:
            return list(self._latest.values())


def check_composition(
    upstream: Automation,
    downstream: Automation,
    binding: dict[str, str],
) -> Proven | Refuted | Unknown:
    """Do the upstream postconditions imply the downstream preconditions?

    `binding` maps each downstream input name to an upstream state path
    (e.g. {"a": "return.sum"}). Raises BindingError when a downstream input
    is left unbound.
    """
    declared_inputs = [name for name, _ in downstream.diagram.inputs]
    missing = [name for name in declared_inputs if name not in binding]
    if missing:
        raise BindingError(f"downstream inputs left unbound: {', '.join(missing)}")

    rename: dict[tuple[str, ...], tuple[str, ...]] = {}
    for input_name, source in binding.items():
        rename[tuple(source.split("."))] = (input_name,)

    ante = [_rename_pred(p, rename) for p in upstream.ensures]
    if not downstream.requires:
        return Proven()
    for req in downstream.requires:
        res = implies(ante, req)
        if not isinstance(res, Proven):
            return res
    return Proven()


def _rename_term(t, rename):
    if isinstance(t, VarPath) and t.segments in rename:
        return VarPath(rename[t.segments])
    return t


def _rename_pred(p: Predicate, rename) -> Predicate:
    if isinstance(p, Compare):
        return Compare(p.op, _rename_term(p.lhs, rename), _rename_term(p.rhs, rename))
    if isinstance(p, And):
        return And(tuple(_rename_pred(q, rename) for q in p.items))
    from graphflow.predicates import WithTag

    if isinstance(p, WithTag):
        return WithTag(_rename_term(p.resource, rename), p.tag)
    return p
