"""Contract predicates over workflow state.

Predicates are the s-expression contract language used by requires/ensures
clauses and decision conditions: comparisons, conjunction, tag membership,
and property claims. This module evaluates them against concrete state and
reasons about them in an abstract domain (nullability + numeric intervals)
so that composition obligations can be discharged without a proof assistant.
The implication check is sound but deliberately incomplete: `Unknown` is a
first-class outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union


@dataclass(frozen=True)
class Keyword:
    """A GFL keyword literal such as `:report` or `:daily`."""

    name: str

    def __str__(self) -> str:
        return f":{self.name}"

    def __repr__(self) -> str:
        return f"Keyword({self.name!r})"


# Values that can live in workflow state or resource fields.
Value = Union[None, bool, int, float, str, Keyword, dict, list]


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarPath:
    """A state path like `$.return.sum`; at least one segment."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("VarPath needs at least one segment")

    def to_gfl(self) -> str:
        return "$." + ".".join(self.segments)

    def __str__(self) -> str:
        return self.to_gfl()


@dataclass(frozen=True)
class Literal:
    value: Value

    def to_gfl(self) -> str:
        return format_value(self.value)


Term = Union[VarPath, Literal]

NULL = Literal(None)


def format_value(v: Value) -> str:
    """Render a literal value in GFL surface syntax."""
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Keyword):
        return str(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return str(v)


def term_to_gfl(t: Term) -> str:
    return t.to_gfl()


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

COMPARE_OPS = ("eq", "ne", "lt", "lte", "gt", "gte")

# Complement of each op, used when walking the `no` branch of a decision.
COMPLEMENT = {"eq": "ne", "ne": "eq", "lt": "gte", "lte": "gt", "gt": "lte", "gte": "lt"}

PROPERTY_KINDS = ("is-deterministic", "is-total", "is-commutative", "assumed-boundary")


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: Term
    rhs: Term

    def __post_init__(self) -> None:
        if self.op not in COMPARE_OPS:
            raise ValueError(f"unknown comparison op {self.op!r}")

    def to_gfl(self) -> str:
        return f"(:{self.op} {term_to_gfl(self.lhs)} {term_to_gfl(self.rhs)})"


@dataclass(frozen=True)
class And:
    items: tuple["Predicate", ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("And needs at least one conjunct")

    def to_gfl(self) -> str:
        return "(:and " + " ".join(p.to_gfl() for p in self.items) + ")"


@dataclass(frozen=True)
class WithTag:
    resource: Term
    tag: Keyword

    def to_gfl(self) -> str:
        return f"(:with-tag {term_to_gfl(self.resource)} {self.tag})"


@dataclass(frozen=True)
class PropertyClaim:
    """A claim like (:is-total) checked empirically, never against state."""

    kind: str
    args: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PROPERTY_KINDS:
            raise ValueError(f"unknown property claim {self.kind!r}")

    def to_gfl(self) -> str:
        if not self.args:
            return f"(:{self.kind})"
        return f"(:{self.kind} " + " ".join(term_to_gfl(t) for t in self.args) + ")"


Predicate = Union[Compare, And, WithTag, PropertyClaim]


def flatten(preds: Iterable[Predicate]) -> list[Predicate]:
    """Flatten nested And conjunctions into a list of atoms."""
    out: list[Predicate] = []
    for p in preds:
        if isinstance(p, And):
            out.extend(flatten(p.items))
        else:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class EvalError(Exception):
    """Raised when a predicate cannot be evaluated against a state."""

    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail

    @classmethod
    def undefined_var(cls, path: VarPath) -> "EvalError":
        return cls("undefined-var", path.to_gfl())

    @classmethod
    def type_mismatch(cls, detail: str) -> "EvalError":
        return cls("type-mismatch", detail)


class ResourceContext:
    """Tag membership oracle consulted by with-tag predicates."""

    def has_tag(self, resource: Value, tag: Keyword) -> bool:
        return False


EMPTY_CONTEXT = ResourceContext()

_UNBOUND = object()


def resolve_path(path: VarPath, state: Mapping[str, Value]) -> Any:
    """Walk path segments through nested maps; `_UNBOUND` when missing."""
    cur: Any = state
    for seg in path.segments:
        if isinstance(cur, Mapping) and seg in cur:
            cur = cur[seg]
        else:
            return _UNBOUND
    return cur


def is_bound(path: VarPath, state: Mapping[str, Value]) -> bool:
    return resolve_path(path, state) is not _UNBOUND


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _values_equal(a: Value, b: Value) -> bool:
    if _is_number(a) and _is_number(b):
        return float(a) == float(b)
    if type(a) is not type(b):
        return False
    return a == b


def eval_predicate(
    p: Predicate,
    state: Mapping[str, Value],
    ctx: ResourceContext = EMPTY_CONTEXT,
) -> bool:
    """Evaluate a predicate against concrete workflow state.

    Null semantics: an unbound path acts as null in eq/ne-null tests but any
    other use of an unbound path raises EvalError(undefined-var). Ordering
    comparisons are numeric-only. And is commutative: a False conjunct wins
    over an error in a sibling.
    """
    if isinstance(p, PropertyClaim):
        raise TypeError("property claims are empirical, not evaluable against state")
    if isinstance(p, And):
        error: EvalError | None = None
        result = True
        for item in p.items:
            try:
                if not eval_predicate(item, state, ctx):
                    result = False
            except EvalError as e:
                if error is None:
                    error = e
        if not result:
            return False
        if error is not None:
            raise error
        return True
    if isinstance(p, WithTag):
        res = _eval_term(p.resource, state)
        if res is _UNBOUND:
            raise EvalError.undefined_var(p.resource)  # type: ignore[arg-type]
        return ctx.has_tag(res, p.tag)
    return _eval_compare(p, state)


def _eval_term(t: Term, state: Mapping[str, Value]) -> Any:
    if isinstance(t, Literal):
        return t.value
    return resolve_path(t, state)


def _eval_compare(p: Compare, state: Mapping[str, Value]) -> bool:
    lhs = _eval_term(p.lhs, state)
    rhs = _eval_term(p.rhs, state)

    if p.op in ("eq", "ne"):
        # Null-literal tests treat unbound as null; anything else demands a binding.
        null_test = (isinstance(p.lhs, Literal) and p.lhs.value is None) or (
            isinstance(p.rhs, Literal) and p.rhs.value is None
        )
        if lhs is _UNBOUND:
            if null_test:
                lhs = None
            else:
                raise EvalError.undefined_var(p.lhs)  # type: ignore[arg-type]
        if rhs is _UNBOUND:
            if null_test:
                rhs = None
            else:
                raise EvalError.undefined_var(p.rhs)  # type: ignore[arg-type]
        eq = _values_equal(lhs, rhs)
        return eq if p.op == "eq" else not eq

    # Ordering comparisons: both sides must be bound numbers.
    if lhs is _UNBOUND:
        raise EvalError.undefined_var(p.lhs)  # type: ignore[arg-type]
    if rhs is _UNBOUND:
        raise EvalError.undefined_var(p.rhs)  # type: ignore[arg-type]
    if not _is_number(lhs) or not _is_number(rhs):
        raise EvalError.type_mismatch(
            f"{p.op} needs numbers, got {type(lhs).__name__} and {type(rhs).__name__}"
        )
    if p.op == "lt":
        return lhs < rhs
    if p.op == "lte":
        return lhs <= rhs
    if p.op == "gt":
        return lhs > rhs
    return lhs >= rhs


def complement(p: Predicate) -> Predicate | None:
    """Negation of a single comparison atom; None when not representable."""
    if isinstance(p, Compare):
        return Compare(COMPLEMENT[p.op], p.lhs, p.rhs)
    return None


# ---------------------------------------------------------------------------
# Abstract domain
# ---------------------------------------------------------------------------

INF = math.inf


class Contradiction(Exception):
    """The conjunction of constraints is unsatisfiable at `path`."""

    def __init__(self, path: str):
        super().__init__(f"contradiction at {path}")
        self.path = path


@dataclass
class PathFact:
    """What is known about one state path.

    nullability is one of "nonnull", "null", "unknown". The numeric interval
    carries open/closed endpoint flags; a "null" path holds no interval.
    `exact` pins a non-numeric value (string/keyword/bool).
    """

    nullability: str = "unknown"
    lo: float = -INF
    hi: float = INF
    lo_open: bool = False
    hi_open: bool = False
    exact: Any = _UNBOUND

    def numeric_constrained(self) -> bool:
        return self.lo != -INF or self.hi != INF or self.lo_open or self.hi_open

    def check_consistent(self, path: str) -> None:
        if self.lo > self.hi:
            raise Contradiction(path)
        if self.lo == self.hi and (self.lo_open or self.hi_open):
            raise Contradiction(path)
        if self.nullability == "null" and (self.numeric_constrained() or self.exact is not _UNBOUND):
            raise Contradiction(path)
        if self.exact is not _UNBOUND and self.numeric_constrained():
            raise Contradiction(path)


@dataclass
class AbstractState:
    """Per-path facts plus atoms the domain keeps verbatim (opaque)."""

    facts: dict[str, PathFact] = field(default_factory=dict)
    opaque: list[Predicate] = field(default_factory=list)

    def fact(self, path: VarPath) -> PathFact:
        return self.facts.setdefault(path.to_gfl(), PathFact())

    def lookup(self, path: VarPath) -> PathFact | None:
        return self.facts.get(path.to_gfl())


def _require_nonnull(f: PathFact, key: str) -> None:
    if f.nullability == "null":
        raise Contradiction(key)
    f.nullability = "nonnull"


def _tighten_lo(f: PathFact, bound: float, open_: bool) -> None:
    if bound > f.lo or (bound == f.lo and open_ and not f.lo_open):
        f.lo = bound
        f.lo_open = open_


def _tighten_hi(f: PathFact, bound: float, open_: bool) -> None:
    if bound < f.hi or (bound == f.hi and open_ and not f.hi_open):
        f.hi = bound
        f.hi_open = open_


def _absorb_compare(st: AbstractState, p: Compare) -> None:
    lhs, rhs, op = p.lhs, p.rhs, p.op
    # Normalize literal-vs-path to path-vs-literal by flipping the operator.
    if isinstance(lhs, Literal) and isinstance(rhs, VarPath):
        flip = {"lt": "gt", "lte": "gte", "gt": "lt", "gte": "lte", "eq": "eq", "ne": "ne"}
        lhs, rhs, op = rhs, lhs, flip[op]

    if isinstance(lhs, Literal) and isinstance(rhs, Literal):
        if not eval_predicate(Compare(op, lhs, rhs), {}):
            raise Contradiction(f"{lhs.to_gfl()} {op} {rhs.to_gfl()}")
        return

    if not (isinstance(lhs, VarPath) and isinstance(rhs, Literal)):
        st.opaque.append(p)  # path-vs-path: beyond the domain
        return

    key = lhs.to_gfl()
    f = st.fact(lhs)
    v = rhs.value

    if v is None:
        if op == "eq":
            if f.nullability == "nonnull" or f.numeric_constrained() or f.exact is not _UNBOUND:
                raise Contradiction(key)
            f.nullability = "null"
        elif op == "ne":
            _require_nonnull(f, key)
        else:
            raise Contradiction(key)  # ordering against null never evaluates true
        f.check_consistent(key)
        return

    if _is_number(v) and not isinstance(v, bool):
        n = float(v)
        if op in ("lt", "lte", "gt", "gte"):
            _require_nonnull(f, key)
            if f.exact is not _UNBOUND:
                raise Contradiction(key)  # non-numeric exact value cannot order
            if op == "lt":
                _tighten_hi(f, n, True)
            elif op == "lte":
                _tighten_hi(f, n, False)
            elif op == "gt":
                _tighten_lo(f, n, True)
            else:
                _tighten_lo(f, n, False)
        elif op == "eq":
            _require_nonnull(f, key)
            _tighten_lo(f, n, False)
            _tighten_hi(f, n, False)
        else:  # ne against a number: representable only as an opaque fact
            st.opaque.append(p)
        f.check_consistent(key)
        return

    # Non-numeric literal (string / keyword / bool).
    if op == "eq":
        _require_nonnull(f, key)
        if f.exact is not _UNBOUND and not _values_equal(f.exact, v):
            raise Contradiction(key)
        f.exact = v
        f.check_consistent(key)
    elif op == "ne":
        st.opaque.append(p)
    else:
        raise Contradiction(key)  # ordering on non-numeric never evaluates true


def abstract(preds: Iterable[Predicate]) -> AbstractState:
    """Fold a conjunction of predicates into the tightest representable state.

    Raises Contradiction when the conjunction is unsatisfiable.
    """
    st = AbstractState()
    for atom in flatten(list(preds)):
        if isinstance(atom, PropertyClaim):
            raise TypeError("property claims do not belong in abstract state")
        if isinstance(atom, WithTag):
            st.opaque.append(atom)
        elif isinstance(atom, Compare):
            _absorb_compare(st, atom)
        else:  # pragma: no cover - flatten() removed And
            raise TypeError(f"unexpected predicate {atom!r}")
    return st


# ---------------------------------------------------------------------------
# Implication
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Proven:
    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Refuted:
    witness: dict

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Unknown:
    reason: str = ""

    def __bool__(self) -> bool:
        return False


ImplicationResult = Union[Proven, Refuted, Unknown]


def _entails_atom(st: AbstractState, atom: Compare) -> bool:
    """True when every state satisfying `st` is guaranteed to satisfy `atom`.

    A consequent that would raise EvalError on some satisfying state is not
    entailed; refutation is handled separately via concrete witnesses.
    """
    lhs, rhs, op = atom.lhs, atom.rhs, atom.op
    if isinstance(lhs, Literal) and isinstance(rhs, VarPath):
        flip = {"lt": "gt", "lte": "gte", "gt": "lt", "gte": "lte", "eq": "eq", "ne": "ne"}
        lhs, rhs, op = rhs, lhs, flip[op]
    if isinstance(lhs, Literal) and isinstance(rhs, Literal):
        try:
            return eval_predicate(Compare(op, lhs, rhs), {})
        except EvalError:
            return False
    if not (isinstance(lhs, VarPath) and isinstance(rhs, Literal)):
        return False

    f = st.lookup(lhs) or PathFact()
    v = rhs.value

    if v is None:
        if op == "ne":
            return f.nullability == "nonnull"
        if op == "eq":
            return f.nullability == "null"
        return False  # ordering against null literal is never true

    if f.nullability != "nonnull":
        return False  # a possibly-unbound path fails any non-null-literal test

    if _is_number(v):
        if f.exact is not _UNBOUND:
            # Bound to a non-numeric value: only ne holds.
            return op == "ne"
        n = float(v)
        lo, hi, lo_open, hi_open = f.lo, f.hi, f.lo_open, f.hi_open
        if op == "gte":
            return lo >= n
        if op == "gt":
            return lo > n or (lo == n and lo_open)
        if op == "lte":
            return hi <= n
        if op == "lt":
            return hi < n or (hi == n and hi_open)
        if op == "eq":
            return lo == hi == n and not lo_open and not hi_open
        # ne: interval excludes n entirely
        return hi < n or lo > n or (hi == n and hi_open) or (lo == n and lo_open)

    # Non-numeric literal against a nonnull path.
    if f.exact is not _UNBOUND:
        eq = _values_equal(f.exact, v)
        if op == "eq":
            return eq
        if op == "ne":
            return not eq
        return False
    if f.numeric_constrained():
        return op == "ne"  # a numeric value never equals a string/keyword/bool
    return False


def _pick_point(f: PathFact) -> float:
    """A concrete number inside the fact's interval, preferring integers."""
    lo, hi = f.lo, f.hi
    if lo == -INF and hi == INF:
        return 0.0
    if lo == -INF:
        c = math.floor(hi)
        if c == hi and f.hi_open:
            c -= 1
        return float(c)
    if hi == INF:
        c = math.ceil(lo)
        if c == lo and f.lo_open:
            c += 1
        return float(c)
    c = math.ceil(lo)
    if c == lo and f.lo_open:
        c += 1
    if c < hi or (c == hi and not f.hi_open):
        return float(c)
    return (lo + hi) / 2.0


def _interval_point(f: PathFact, narrow: str | None = None, n: float = 0.0) -> Any:
    """A number satisfying f's interval, optionally narrowed to one side of n.

    Returns _UNBOUND when the narrowed interval is empty.
    """
    g = PathFact("nonnull", f.lo, f.hi, f.lo_open, f.hi_open)
    try:
        if narrow == "below":
            _tighten_hi(g, n, True)
        elif narrow == "above":
            _tighten_lo(g, n, True)
        elif narrow == "at-most":
            _tighten_hi(g, n, False)
        elif narrow == "at-least":
            _tighten_lo(g, n, False)
        g.check_consistent("witness")
    except Contradiction:
        return _UNBOUND
    return _normalize_num(_pick_point(g))


def _violating_value(f: PathFact, atom: Compare) -> Any:
    """A value for the atom's path that satisfies `f` but falsifies `atom`.

    _UNBOUND doubles as "leave the path unbound": every candidate is verified
    against the full antecedent afterwards, so an unusable choice only costs
    completeness, never soundness.
    """
    rhs = atom.rhs
    assert isinstance(rhs, Literal)
    v = rhs.value
    if f.exact is not _UNBOUND and v is not None:
        # Path is pinned to a non-numeric value; it violates eq-to-other and
        # matches ne-to-same, nothing else to choose.
        if atom.op == "eq" and not _values_equal(f.exact, v):
            return f.exact
        if atom.op == "ne" and _values_equal(f.exact, v):
            return f.exact
        return _UNBOUND
    if v is None:
        if atom.op == "ne":
            return None if f.nullability != "nonnull" else _UNBOUND
        if atom.op == "eq":
            if f.nullability == "null":
                return _UNBOUND
            return f.exact if f.exact is not _UNBOUND else _interval_point(f)
        return _UNBOUND
    if _is_number(v):
        n = float(v)
        if atom.op == "gte":
            return _interval_point(f, "below", n)
        if atom.op == "gt":
            return _interval_point(f, "at-most", n)
        if atom.op == "lte":
            return _interval_point(f, "above", n)
        if atom.op == "lt":
            return _interval_point(f, "at-least", n)
        if atom.op == "eq":
            below = _interval_point(f, "below", n)
            return below if below is not _UNBOUND else _interval_point(f, "above", n)
        # ne: need exactly n inside the interval
        inside = (
            f.lo <= n <= f.hi
            and not (f.lo == n and f.lo_open)
            and not (f.hi == n and f.hi_open)
        )
        return _normalize_num(n) if inside else _UNBOUND
    # Non-numeric literal.
    if atom.op == "eq":
        return _interval_point(f) if f.numeric_constrained() else 0
    if atom.op == "ne":
        return _UNBOUND if f.numeric_constrained() else v
    return _UNBOUND


def _normalize_num(x: float) -> Value:
    if x == int(x) and abs(x) < 1e15:
        return int(x)
    return x


def _assemble_witness(st: AbstractState, extra: dict[str, Any]) -> dict:
    """Build a nested state dict from per-path values."""
    values: dict[str, Any] = {}
    for key, f in st.facts.items():
        if key in extra:
            continue
        if f.nullability == "null":
            values[key] = None
        elif f.exact is not _UNBOUND:
            values[key] = f.exact
        elif f.nullability == "nonnull" or f.numeric_constrained():
            values[key] = _normalize_num(_pick_point(f))
        # unknown + unconstrained: leave unbound
    values.update({k: v for k, v in extra.items() if v is not _UNBOUND})
    state: dict = {}
    for key, v in values.items():
        segs = key[2:].split(".")
        cur = state
        for s in segs[:-1]:
            cur = cur.setdefault(s, {})
        cur[segs[-1]] = v
    return state


def implies(antecedent: Iterable[Predicate], consequent: Predicate) -> ImplicationResult:
    """Does every state satisfying all antecedents satisfy the consequent?

    Sound: Proven is returned only when the abstract domain guarantees the
    consequent; Refuted always carries a concrete, eval-verified witness.
    Anything the domain cannot decide is Unknown.
    """
    ante_atoms = flatten(list(antecedent))
    try:
        st = abstract(ante_atoms)
    except Contradiction:
        return Proven()  # unsatisfiable antecedent

    has_inexpressible = any(not isinstance(a, Compare) or _two_path(a) for a in st.opaque)

    unknown_reason = ""
    for atom in flatten([consequent]):
        if isinstance(atom, PropertyClaim):
            return Unknown("property claims are checked empirically")
        # Syntactic entailment: the atom appears verbatim among antecedents.
        if any(atom == a for a in ante_atoms):
            continue
        if isinstance(atom, WithTag):
            return Unknown(f"tag fact not derivable: {atom.to_gfl()}")
        assert isinstance(atom, Compare)
        if _entails_atom(st, atom):
            continue
        # Attempt refutation with a concrete witness.
        if has_inexpressible:
            unknown_reason = unknown_reason or f"undecided: {atom.to_gfl()}"
            continue
        witness = _build_witness(st, ante_atoms, atom)
        if witness is not None:
            return Refuted(witness)
        unknown_reason = unknown_reason or f"undecided: {atom.to_gfl()}"
    if unknown_reason:
        return Unknown(unknown_reason)
    return Proven()


def _two_path(a: Compare) -> bool:
    return isinstance(a.lhs, VarPath) and isinstance(a.rhs, VarPath)


def _build_witness(
    st: AbstractState, ante_atoms: list[Predicate], atom: Compare
) -> dict | None:
    lhs, rhs, op = atom.lhs, atom.rhs, atom.op
    if isinstance(lhs, Literal) and isinstance(rhs, VarPath):
        flip = {"lt": "gt", "lte": "gte", "gt": "lt", "gte": "lte", "eq": "eq", "ne": "ne"}
        lhs, rhs, op = rhs, lhs, flip[op]
    if not (isinstance(lhs, VarPath) and isinstance(rhs, Literal)):
        return None
    key = lhs.to_gfl()
    f = st.facts.get(key, PathFact())
    val = _violating_value(f, Compare(op, lhs, rhs))
    witness = _assemble_witness(st, {key: val})
    # Verify: all antecedents true, consequent atom false.
    try:
        for a in ante_atoms:
            if not eval_predicate(a, witness):
                return None
    except EvalError:
        return None
    try:
        if eval_predicate(Compare(op, lhs, rhs), witness):
            return None
    except EvalError:
        pass  # an erroring consequent is a failing consequent: keep witness
    return witness
