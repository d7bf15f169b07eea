"""Tagged resources, cohort queries, scheduled metrics, and triggers.

The resource store is the shared universe queries select from. Tag
mutations are journaled and fan out as signals to waiting runs. Triggers
bind query cohorts to diagram launches with per-resource repeat windows;
metrics aggregate cohorts over time. All scheduling is tick-driven from
the runtime clock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

from graphflow.gfl.ast import FieldFilter, MetricDecl, QueryDecl, TagFilter, TriggerDecl
from graphflow.model import Node
from graphflow.predicates import Keyword, Literal, Value, VarPath, resolve_path, _UNBOUND


class UnknownResource(Exception):
    pass


class AssignmentUnresolved(Exception):
    def __init__(self, resource_id: str, lane: str, detail: str):
        super().__init__(f"cannot bind lane {lane!r} for {resource_id}: {detail}")
        self.resource_id = resource_id
        self.lane = lane


class DomainError(Exception):
    pass


@dataclass
class Resource:
    id: str
    resource_type: str
    ext_type: str | None = None
    tags: set[str] = field(default_factory=set)
    fields: dict[str, Value] = field(default_factory=dict)
    ext_data: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "resource_type": self.resource_type,
            "ext_type": self.ext_type,
            "tags": sorted(self.tags),
            "fields": self.fields,
            "ext_data": self.ext_data,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Resource":
        return cls(
            id=record["id"],
            resource_type=record["resource_type"],
            ext_type=record.get("ext_type"),
            tags=set(record.get("tags") or []),
            fields=record.get("fields") or {},
            ext_data=record.get("ext_data") or {},
        )


class ResourceStore:
    """Per-workspace resource universe; mutations serialized, reads shared."""

    def __init__(self, workspace: str = "default", backing=None, clock=None):
        self.workspace = workspace
        self.backing = backing  # EventStore providing put_resource/load_resources
        self.clock = clock
        self._lock = threading.RLock()
        self._resources: dict[str, Resource] = {}
        self._order: list[str] = []
        self._by_type: dict[str, list[str]] = {}
        self._by_ext_id: dict[str, list[str]] = {}
        self.tag_journal: list[dict] = []
        self.signal_sinks: list = []  # callables (resource_id, tag, added: bool)
        self._object_seq = 0
        if backing is not None and backing.has_workspace(workspace):
            for record in backing.load_resources(workspace):
                r = Resource.from_record(record)
                self._resources[r.id] = r
                self._order.append(r.id)
                self._index(r)

    # -- basic access -----------------------------------------------------------

    def put(self, resource: Resource) -> Resource:
        with self._lock:
            old = self._resources.get(resource.id)
            if old is None:
                self._order.append(resource.id)
            else:
                self._unindex(old)
            self._resources[resource.id] = resource
            self._index(resource)
            self._persist(resource)
            return resource

    def _index(self, r: Resource) -> None:
        self._by_type.setdefault(r.resource_type, []).append(r.id)
        ext = r.ext_data.get("id")
        if ext is not None:
            self._by_ext_id.setdefault(str(ext), []).append(r.id)

    def _unindex(self, r: Resource) -> None:
        ids = self._by_type.get(r.resource_type, [])
        if r.id in ids:
            ids.remove(r.id)
        ext = r.ext_data.get("id")
        if ext is not None:
            ids = self._by_ext_id.get(str(ext), [])
            if r.id in ids:
                ids.remove(r.id)

    def contacts_by_ext_id(self, ext_id) -> list[Resource]:
        with self._lock:
            return [
                self._resources[i]
                for i in self._by_ext_id.get(str(ext_id), [])
                if self._resources[i].resource_type == "contact"
            ]

    def get(self, resource_id: str) -> Resource | None:
        with self._lock:
            return self._resources.get(resource_id)

    def require(self, resource_id: str) -> Resource:
        r = self.get(resource_id)
        if r is None:
            raise UnknownResource(resource_id)
        return r

    def all(self) -> list[Resource]:
        with self._lock:
            return [self._resources[i] for i in self._order]

    def by_type(self, resource_type: str) -> list[Resource]:
        with self._lock:
            return [self._resources[i] for i in self._by_type.get(resource_type, [])]

    def has_tag(self, resource_id: str, tag: str) -> bool:
        r = self.get(resource_id)
        return r is not None and tag in r.tags

    def _persist(self, resource: Resource) -> None:
        if self.backing is not None:
            self.backing.put_resource(self.workspace, resource.to_record())

    # -- tags ----------------------------------------------------------------------

    def add_tag(self, resource_id: str, tag: str) -> bool:
        """Idempotent insert; returns True when the tag was new."""
        with self._lock:
            r = self.require(resource_id)
            if tag in r.tags:
                return False
            r.tags.add(tag)
            self.tag_journal.append({"op": "add", "resource": resource_id, "tag": tag})
            self._persist(r)
        for sink in self.signal_sinks:
            sink(resource_id, tag, True)
        return True

    def remove_tag(self, resource_id: str, tag: str) -> bool:
        with self._lock:
            r = self.require(resource_id)
            if tag not in r.tags:
                return False
            r.tags.discard(tag)
            self.tag_journal.append({"op": "remove", "resource": resource_id, "tag": tag})
            self._persist(r)
        for sink in self.signal_sinks:
            sink(resource_id, tag, False)
        return True

    # -- object-node persistence -----------------------------------------------------

    def persist_object(self, node: Node, value) -> str:
        with self._lock:
            self._object_seq += 1
            rid = f"obj-{node.id}-{self._object_seq}"
            rtype = (node.ext_type or "object").lower()
            self.put(
                Resource(
                    id=rid,
                    resource_type="object",
                    ext_type=node.ext_type,
                    fields={"value": value, "node": node.id, "type": rtype},
                )
            )
            return rid


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


@dataclass
class QueryStats:
    scanned: int = 0
    unknown_field_misses: int = 0


def _field_matches(resource: Resource, flt: FieldFilter, stats: QueryStats) -> bool:
    name = flt.name.name
    if name not in resource.fields:
        stats.unknown_field_misses += 1
        return False
    value = resource.fields[name]
    target = flt.value
    op = flt.op
    if isinstance(value, (int, float)) and isinstance(target, (int, float)) and not isinstance(value, bool):
        a, b = float(value), float(target)
    elif isinstance(value, str) and isinstance(target, str):
        a, b = value, target  # ISO-8601 dates compare correctly as strings
    else:
        if op == "eq":
            return value == target
        if op == "ne":
            return value != target
        stats.unknown_field_misses += 1
        return False
    return {
        "eq": a == b,
        "ne": a != b,
        "lt": a < b,
        "lte": a <= b,
        "gt": a > b,
        "gte": a >= b,
    }[op]


def eval_query(q: QueryDecl, store: ResourceStore, stats: QueryStats | None = None) -> set[str]:
    """Cohort: ids of resources matching type, ext-type, and every filter."""
    stats = stats if stats is not None else QueryStats()
    cohort: set[str] = set()
    for r in store.by_type(q.resource_type.name):
        stats.scanned += 1
        if q.ext_type is not None and r.ext_type != q.ext_type:
            continue
        ok = True
        for flt in q.filters:
            if isinstance(flt, TagFilter):
                present = flt.tag.name in r.tags
                if flt.mode == "with" and not present:
                    ok = False
                    break
                if flt.mode == "without" and present:
                    ok = False
                    break
            else:
                if not _field_matches(r, flt, stats):
                    ok = False
                    break
        if ok:
            cohort.add(r.id)
    return cohort


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricSample:
    at: float
    value: float | None
    cohort_size: int
    skipped: int = 0

    def to_record(self) -> dict:
        return {"at": self.at, "value": self.value, "cohort_size": self.cohort_size, "skipped": self.skipped}


@dataclass
class MetricState:
    decl: MetricDecl
    samples: list[MetricSample] = field(default_factory=list)
    last_fired: float | None = None


def compute_metric(
    m: MetricDecl,
    query: QueryDecl,
    store: ResourceStore,
    now: float,
) -> MetricSample:
    cohort = eval_query(query, store)
    if m.aggregation == "count":
        return MetricSample(now, float(len(cohort)), len(cohort))
    field_name = m.field.name if m.field else None
    values = []
    skipped = 0
    for rid in cohort:
        r = store.get(rid)
        v = r.fields.get(field_name) if r else None
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            values.append(float(v))
        else:
            skipped += 1
    if m.aggregation == "sum":
        return MetricSample(now, sum(values), len(cohort), skipped)
    if not values:
        return MetricSample(now, None, len(cohort), skipped)  # avg of empty: null
    return MetricSample(now, sum(values) / len(values), len(cohort), skipped)


# ---------------------------------------------------------------------------
# Triggers
# ---------------------------------------------------------------------------


@dataclass
class TriggerState:
    decl: TriggerDecl
    fired_ledger: dict[str, float] = field(default_factory=dict)
    last_scheduled: float | None = None
    skips: list[dict] = field(default_factory=list)


def _utc(ts: float) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def add_interval(ts: float, interval: str) -> float:
    """Calendar arithmetic in UTC; the repeat-window boundary."""
    dt = _utc(ts)
    if interval == "hourly":
        return ts + 3600
    if interval == "daily":
        return ts + 86400
    if interval == "weekly":
        return ts + 7 * 86400
    if interval == "monthly":
        month = dt.month % 12 + 1
        year = dt.year + (1 if dt.month == 12 else 0)
        day = min(dt.day, _days_in_month(year, month))
        return dt.replace(year=year, month=month, day=day).timestamp()
    if interval == "yearly":
        year = dt.year + 1
        day = min(dt.day, _days_in_month(year, dt.month))
        return dt.replace(year=year, day=day).timestamp()
    raise DomainError(f"unknown interval :{interval}")


def _days_in_month(year: int, month: int) -> int:
    import calendar

    return calendar.monthrange(year, month)[1]


def schedule_due(interval: str | None, last: float | None, now: float) -> bool:
    """Tick rule: first tick on/after each UTC boundary of the interval."""
    if interval is None:
        return False
    if last is None:
        return True
    a, b = _utc(last), _utc(now)
    if interval == "hourly":
        return (b.year, b.month, b.day, b.hour) > (a.year, a.month, a.day, a.hour)
    if interval == "daily":
        return b.date() > a.date()
    if interval == "weekly":
        return b.isocalendar()[:2] > a.isocalendar()[:2]
    if interval == "monthly":
        return (b.year, b.month) > (a.year, a.month)
    if interval == "yearly":
        return b.year > a.year
    raise DomainError(f"unknown interval :{interval}")


def resource_view(r: Resource) -> dict:
    """The state a trigger's assignment terms are evaluated against."""
    view: dict = {"id": r.id, "extData": dict(r.ext_data), "tags": sorted(r.tags)}
    view.update(r.fields)
    return view


def _eval_term(term, view: dict):
    if isinstance(term, Literal):
        return term.value
    if isinstance(term, VarPath):
        v = resolve_path(term, view)
        return None if v is _UNBOUND else v
    return None


def resolve_bindings(
    trigger: TriggerDecl, resource: Resource, store: ResourceStore
) -> dict[str, str]:
    """Lane -> contact id, per the trigger's assignment ops.

    Raises AssignmentUnresolved on missing values or ambiguous ext-id matches.
    """
    view = resource_view(resource)
    bindings: dict[str, str] = {}
    for op in trigger.assignments:
        value = _eval_term(op.term, view)
        if value is None:
            raise AssignmentUnresolved(resource.id, op.lane, f"no value for {op.term.to_gfl()}")
        if op.op == "assign-swimlane-contact":
            contact = store.get(str(value))
            if contact is None:
                raise AssignmentUnresolved(resource.id, op.lane, f"no contact {value!r}")
            bindings[op.lane] = contact.id
        else:  # by-ext-id: match against contacts' external id
            matches = store.contacts_by_ext_id(value)
            if len(matches) != 1:
                raise AssignmentUnresolved(
                    resource.id, op.lane, f"ext-id {value!r} matched {len(matches)} contacts"
                )
            bindings[op.lane] = matches[0].id
    return bindings


def fire_trigger(
    state: TriggerState,
    query: QueryDecl,
    store: ResourceStore,
    engine,
    workspace: str,
    now: float,
) -> list[str]:
    """Start one run per unblocked cohort member; ledger updates on success."""
    decl = state.decl
    if not decl.active:
        return []
    started: list[str] = []
    for rid in sorted(eval_query(query, store)):
        last = state.fired_ledger.get(rid)
        if last is not None and decl.repeat is not None and now < add_interval(last, decl.repeat):
            continue
        resource = store.require(rid)
        try:
            bindings = resolve_bindings(decl, resource, store)
        except AssignmentUnresolved as exc:
            state.skips.append({"resource": rid, "reason": str(exc), "at": now})
            continue
        if not decl.auto_start:
            state.fired_ledger[rid] = now
            continue
        run = engine.start_run(
            workspace,
            decl.calls,
            inputs={},
            bindings=bindings,
            subject=rid,
        )
        state.fired_ledger[rid] = now
        started.append(run.run_id)
    return started


# ---------------------------------------------------------------------------
# Reliability model
# ---------------------------------------------------------------------------


def compound_reliability(p: float, k: int) -> float:
    """End-to-end success of k independent steps at per-step reliability p."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"probability out of range: {p}")
    if k < 0 or int(k) != k:
        raise DomainError(f"step count must be a nonnegative integer: {k}")
    return p ** int(k)
