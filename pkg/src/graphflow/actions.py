"""Registered pure builtins for the verified core.

Each builtin carries execution semantics (used by the compile-time evaluator
and the runtime) and a contract specialization: given the call site and the
current abstract state, it emits predicate atoms describing the assigned
value. Everything else is an effectful action dispatched to boundary
adapters at runtime and rejected by the verifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from graphflow.gfl.ast import ActionDecl
from graphflow.predicates import (
    AbstractState,
    Compare,
    EvalError,
    INF,
    Literal,
    PathFact,
    Predicate,
    Term,
    Value,
    VarPath,
    _UNBOUND,
    resolve_path,
)

PURE_BUILTINS = frozenset({"add", "multiply", "return", "throw", "condition"})


class WorkflowThrow(Exception):
    """Raised by the :throw builtin; an explicit, contract-visible exit."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def is_pure_builtin(callee: str) -> bool:
    return callee in PURE_BUILTINS


def _eval_term(term: Term, state: Mapping[str, Value]) -> Value:
    if isinstance(term, Literal):
        return term.value
    v = resolve_path(term, state)
    if v is _UNBOUND:
        raise EvalError.undefined_var(term)
    return v


def _numeric_arg(action: ActionDecl, name: str, state: Mapping[str, Value]) -> float:
    term = action.arg(name)
    if not isinstance(term, (VarPath, Literal)):
        raise EvalError.type_mismatch(f":{action.callee} needs .{name}")
    v = _eval_term(term, state)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise EvalError.type_mismatch(f".{name} must be a number, got {type(v).__name__}")
    return v


def execute_builtin(action: ActionDecl, state: Mapping[str, Value]) -> Value:
    """Run a pure builtin against state, returning the produced value.

    :return yields the dict written to the return slot; :condition yields
    None (branching is the caller's job); :throw raises WorkflowThrow.
    """
    callee = action.callee
    if callee == "multiply":
        return _coerce_int(_numeric_arg(action, "a", state) * _numeric_arg(action, "b", state))
    if callee == "add":
        return _coerce_int(_numeric_arg(action, "a", state) + _numeric_arg(action, "b", state))
    if callee == "return":
        out: dict[str, Value] = {}
        for key, term in action.args:
            if not isinstance(term, (VarPath, Literal)):
                raise EvalError.type_mismatch(f":return argument .{key} must be a term")
            out[key] = _eval_term(term, state)
        return out
    if callee == "throw":
        message = "workflow threw"
        if action.pos and isinstance(action.pos[0], Literal) and isinstance(action.pos[0].value, str):
            message = action.pos[0].value
        raise WorkflowThrow(message)
    if callee == "condition":
        return None
    raise ValueError(f"not a pure builtin: :{callee}")


def _coerce_int(x: float) -> Value:
    if isinstance(x, float) and x.is_integer() and abs(x) < 2**53:
        return int(x)
    return x


# ---------------------------------------------------------------------------
# Contract specialization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False


def _term_interval(term, st: AbstractState) -> Interval | None:
    """Numeric range of a term under the abstract state; None when unknown."""
    if isinstance(term, Literal):
        v = term.value
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return Interval(float(v), float(v))
        return None
    if isinstance(term, VarPath):
        f = st.lookup(term)
        if f is None or f.nullability != "nonnull" or f.exact is not _UNBOUND:
            return None
        return Interval(f.lo, f.hi, f.lo_open, f.hi_open)
    return None


def _bound_atoms(path: VarPath, iv: Interval) -> list[Predicate]:
    atoms: list[Predicate] = [Compare("ne", path, Literal(None))]
    if iv.lo != -INF:
        atoms.append(Compare("gt" if iv.lo_open else "gte", path, Literal(_num(iv.lo))))
    if iv.hi != INF:
        atoms.append(Compare("lt" if iv.hi_open else "lte", path, Literal(_num(iv.hi))))
    return atoms


def _num(x: float) -> Value:
    return int(x) if float(x).is_integer() and abs(x) < 1e15 else x


def fact_atoms(path: VarPath, f: PathFact) -> list[Predicate]:
    """Re-express a path fact as predicate atoms anchored at `path`."""
    atoms: list[Predicate] = []
    if f.nullability == "null":
        return [Compare("eq", path, Literal(None))]
    if f.exact is not _UNBOUND:
        return [Compare("ne", path, Literal(None)), Compare("eq", path, Literal(f.exact))]
    if f.nullability == "nonnull":
        atoms.extend(_bound_atoms(path, Interval(f.lo, f.hi, f.lo_open, f.hi_open)))
    return atoms


def derived_facts(action: ActionDecl, st: AbstractState) -> list[Predicate]:
    """Atoms the builtin's registered contract guarantees at this call site."""
    callee = action.callee
    if callee == "multiply":
        if action.assigns is None:
            return []
        target = action.assigns
        a, b = action.arg("a"), action.arg("b")
        if a is not None and a == b:
            # Squaring: result is nonnegative regardless of the operand.
            atoms: list[Predicate] = [
                Compare("ne", target, Literal(None)),
                Compare("gte", target, Literal(0)),
            ]
            iv = _term_interval(a, st)
            if iv is not None and iv.lo != -INF and iv.hi != INF:
                atoms.append(Compare("lte", target, Literal(_num(max(iv.lo**2, iv.hi**2)))))
            return atoms
        iva, ivb = _term_interval(a, st), _term_interval(b, st)
        if iva and ivb and all(abs(x) != INF for x in (iva.lo, iva.hi, ivb.lo, ivb.hi)):
            corners = [iva.lo * ivb.lo, iva.lo * ivb.hi, iva.hi * ivb.lo, iva.hi * ivb.hi]
            return _bound_atoms(target, Interval(min(corners), max(corners)))
        return [Compare("ne", target, Literal(None))]
    if callee == "add":
        if action.assigns is None:
            return []
        target = action.assigns
        iva = _term_interval(action.arg("a"), st)
        ivb = _term_interval(action.arg("b"), st)
        if iva and ivb:
            lo = -INF if -INF in (iva.lo, ivb.lo) else iva.lo + ivb.lo
            hi = INF if INF in (iva.hi, ivb.hi) else iva.hi + ivb.hi
            return _bound_atoms(
                target,
                Interval(lo, hi, iva.lo_open or ivb.lo_open, iva.hi_open or ivb.hi_open),
            )
        return [Compare("ne", target, Literal(None))]
    if callee == "return":
        atoms: list[Predicate] = []
        for key, term in action.args:
            rpath = VarPath(("return",) + tuple(key.split(".")))
            if isinstance(term, Literal):
                if term.value is None:
                    atoms.append(Compare("eq", rpath, Literal(None)))
                else:
                    atoms.append(Compare("ne", rpath, Literal(None)))
                    atoms.append(Compare("eq", rpath, term))
            elif isinstance(term, VarPath):
                f = st.lookup(term)
                if f is not None:
                    atoms.extend(fact_atoms(rpath, f))
        return atoms
    return []  # condition, throw: no state facts


def assigned_path(action: ActionDecl | None) -> VarPath | None:
    """The state path an action writes, if any (:return owns the return tree)."""
    if action is None:
        return None
    if action.callee == "return":
        return VarPath(("return",))
    return action.assigns
