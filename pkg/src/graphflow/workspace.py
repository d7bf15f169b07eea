"""Workspace wiring: one place that composes store, resources, registry,
library, engine, triggers, and metrics for a named namespace."""

from __future__ import annotations

from dataclasses import dataclass, field

from graphflow.engine import (
    AdapterRegistry,
    ArtifactRegistry,
    Clock,
    Engine,
    GuardConfig,
    RetryPolicy,
    VirtualClock,
    WallClock,
)
from graphflow.gfl import parse
from graphflow.gfl.ast import Declaration, DiagramDecl, MetricDecl, QueryDecl, TriggerDecl
from graphflow.model import build_diagram
from graphflow.resources import (
    MetricSample,
    MetricState,
    ResourceStore,
    TriggerState,
    compute_metric,
    eval_query,
    fire_trigger,
    schedule_due,
)
from graphflow.store import EventStore, MemoryEventStore
from graphflow.verifier import AutomationLibrary


class UnknownSlug(KeyError):
    pass


@dataclass
class Workspace:
    """A named, isolated namespace with its own engine and declarations."""

    name: str = "default"
    store: EventStore = field(default_factory=MemoryEventStore)
    clock: Clock = field(default_factory=WallClock)
    adapters: AdapterRegistry = field(default_factory=AdapterRegistry)
    guard: GuardConfig = field(default_factory=GuardConfig)
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        self.store.create_workspace(self.name)
        self.library = AutomationLibrary()
        self.registry = ArtifactRegistry(self.library)
        self.resources = ResourceStore(self.name, backing=self.store, clock=self.clock)
        self.engine = Engine(
            self.store,
            self.registry,
            resources=self.resources,
            adapters=self.adapters,
            clock=self.clock,
            guard=self.guard,
            retry=self.retry,
        )
        self.queries: dict[str, QueryDecl] = {}
        self.metrics: dict[str, MetricState] = {}
        self.triggers: dict[str, TriggerState] = {}
        self.diagrams: dict[str, DiagramDecl] = {}
        # Tag mutations fan out to waiting runs.
        self.resources.signal_sinks.append(self._on_tag_change)

    # -- declarations --------------------------------------------------------

    def load_declarations(self, decls: list[Declaration]) -> None:
        for decl in decls:
            if isinstance(decl, DiagramDecl):
                self.diagrams[decl.slug] = decl
                self.registry.register_diagram(build_diagram(decl))
            elif isinstance(decl, QueryDecl):
                self.queries[decl.slug] = decl
            elif isinstance(decl, MetricDecl):
                self.metrics[decl.slug] = MetricState(decl)
            elif isinstance(decl, TriggerDecl):
                self.triggers[decl.slug] = TriggerState(decl)

    def load_source(self, text: str) -> None:
        self.load_declarations(parse(text))

    # -- cohorts, metrics, triggers -------------------------------------------

    def cohort(self, query_slug: str) -> set[str]:
        if query_slug not in self.queries:
            raise UnknownSlug(query_slug)
        return eval_query(self.queries[query_slug], self.resources)

    def sample_metric(self, metric_slug: str) -> MetricSample:
        if metric_slug not in self.metrics:
            raise UnknownSlug(metric_slug)
        state = self.metrics[metric_slug]
        query = self.queries.get(state.decl.query)
        if query is None:
            raise UnknownSlug(state.decl.query)
        sample = compute_metric(state.decl, query, self.resources, self.clock.now())
        state.samples.append(sample)
        state.last_fired = sample.at
        self.store.append_metric_sample(self.name, metric_slug, sample.to_record())
        return sample

    def fire_trigger(self, trigger_slug: str) -> list[str]:
        if trigger_slug not in self.triggers:
            raise UnknownSlug(trigger_slug)
        state = self.triggers[trigger_slug]
        query = self.queries.get(state.decl.source_query)
        if query is None:
            raise UnknownSlug(state.decl.source_query)
        return fire_trigger(
            state, query, self.resources, self.engine, self.name, self.clock.now()
        )

    def tick(self) -> dict:
        """One scheduler tick: due triggers fire, due metrics sample, timers."""
        now = self.clock.now()
        fired: dict = {"triggers": {}, "metrics": [], "timers": []}
        for slug, state in self.triggers.items():
            if schedule_due(state.decl.schedule, state.last_scheduled, now):
                fired["triggers"][slug] = self.fire_trigger(slug)
                state.last_scheduled = now
        for slug, mstate in self.metrics.items():
            if schedule_due(mstate.decl.schedule, mstate.last_fired, now):
                self.sample_metric(slug)
                fired["metrics"].append(slug)
        fired["timers"] = self.engine.tick(self.name)
        return fired

    # -- signals from tag mutations ---------------------------------------------

    def _on_tag_change(self, resource_id: str, tag: str, added: bool) -> None:
        if added:
            self.engine.broadcast_tag_added(self.name, resource_id, tag)
