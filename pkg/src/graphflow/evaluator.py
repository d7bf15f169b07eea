"""Big-step evaluation of verified-core diagrams.

Walks the deterministic sequential order (topological, id-tiebroken),
executing pure builtins in process. Used by the verifier's empirical
discharge, by differential tests against the durable runtime, and by the
contract property suites. No events, no effects, no adapters.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from graphflow.actions import WorkflowThrow, execute_builtin, is_pure_builtin
from graphflow.model import CycleWitness, Diagram, topological_order
from graphflow.predicates import (
    And,
    Compare,
    EvalError,
    Predicate,
    Value,
    VarPath,
    WithTag,
    eval_predicate,
)

_PREDICATE_TYPES = (And, Compare, WithTag)


class ContractViolation(Exception):
    """A requires/ensures predicate evaluated false during evaluation."""

    def __init__(self, kind: str, where: str, predicate: Predicate, state: dict):
        super().__init__(f"{kind} violated at {where}: {predicate.to_gfl()}")
        self.kind = kind
        self.where = where
        self.predicate = predicate
        self.state = state


class NotEvaluable(Exception):
    """Diagram is outside the pure evaluator's domain (cycles, effects)."""


@dataclass
class Outcome:
    state: dict
    returned: dict | None
    threw: str | None
    threw_node: str | None
    guarded_throw: bool
    trace: list[str] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.threw is None


def _write_path(state: dict, path: VarPath, value: Value) -> None:
    cur = state
    for seg in path.segments[:-1]:
        nxt = cur.get(seg)
        if not isinstance(nxt, dict):
            nxt = {}
            cur[seg] = nxt
        cur = nxt
    cur[path.segments[-1]] = value


def initial_state(d: Diagram, inputs: dict[str, Value]) -> dict:
    state: dict = {}
    for path, value in d.variables:
        _write_path(state, path, copy.deepcopy(value))
    for name, value in inputs.items():
        state[name] = copy.deepcopy(value)
    return state


def check_requires(d: Diagram, state: dict) -> list[Predicate]:
    """Diagram-level requires that do not hold for this state."""
    failed = []
    for p in d.requires:
        try:
            ok = eval_predicate(p, state)
        except EvalError:
            ok = False
        if not ok:
            failed.append(p)
    return failed


def eval_diagram(
    d: Diagram,
    inputs: dict[str, Value],
    check_contracts: bool = True,
) -> Outcome:
    """Evaluate an acyclic, fork-free, pure diagram to its final state.

    Raises ContractViolation when a declared contract fails mid-run (a bug
    surface the property suites assert never fires for admitted diagrams),
    EvalError on stuck predicates, NotEvaluable outside the pure fragment.
    """
    order = topological_order(d)
    if isinstance(order, CycleWitness):
        raise NotEvaluable(f"diagram has a cycle: {order}")

    state = initial_state(d, inputs)
    if check_contracts:
        failed = check_requires(d, state)
        if failed:
            raise ContractViolation("requires", "diagram", failed[0], state)

    executed: set[str] = set()
    taken: set[tuple[str, str]] = set()
    entries = set(d.entry_nodes())
    trace: list[str] = []
    label_into: dict[str, str] = {}

    for nid in order:
        runnable = nid in entries or any(
            (e.source, e.target) in taken for e in d.in_edges(nid)
        )
        if not runnable:
            continue
        node = d.node(nid)
        trace.append(nid)
        executed.add(nid)

        if node.requires is not None and check_contracts:
            if not _holds(node.requires, state):
                raise ContractViolation("requires", f"node {nid}", node.requires, state)

        action = node.action
        if action is not None and not is_pure_builtin(action.callee):
            raise NotEvaluable(f"node {nid} calls effectful action :{action.callee}")

        if node.type == "decision":
            yes_pred = action.arg("yes") if action else None
            if not isinstance(yes_pred, _PREDICATE_TYPES):
                raise NotEvaluable(f"decision {nid} has no evaluable condition")
            try:
                branch = "yes" if eval_predicate(yes_pred, state) else "no"
            except EvalError:
                if d.out_edge(nid, "maybe") is None:
                    raise
                branch = "maybe"
            edge = d.out_edge(nid, branch)
            if edge is None:
                continue  # missing branch for the taken outcome: run ends here
            taken.add((edge.source, edge.target))
            label_into[edge.target] = edge.label
            continue

        if action is not None:
            try:
                result = execute_builtin(action, state)
            except WorkflowThrow as t:
                guarded = label_into.get(nid, "to") in ("yes", "no", "maybe")
                return Outcome(state, state.get("return"), t.message, nid, guarded, trace)
            if action.callee == "return":
                state["return"] = result
            elif action.assigns is not None:
                _write_path(state, action.assigns, result)

            if check_contracts and action.ensures is not None:
                if not _holds(action.ensures, state):
                    raise ContractViolation("ensures", f"node {nid} action", action.ensures, state)

        if check_contracts and node.ensures is not None:
            if not _holds(node.ensures, state):
                raise ContractViolation("ensures", f"node {nid}", node.ensures, state)

        for e in d.out_edges(nid):
            if e.label == "to":
                taken.add((e.source, e.target))
                label_into[e.target] = "to"

    returned = state.get("return")
    if check_contracts:
        for p in d.ensures:
            if not _holds(p, state):
                raise ContractViolation("ensures", "diagram", p, state)
    return Outcome(state, returned, None, None, False, trace)


def _holds(p: Predicate, state: dict) -> bool:
    try:
        return eval_predicate(p, state)
    except EvalError:
        return False
