"""Deterministic replay: logs are the only source replay consults."""

from __future__ import annotations

import random

import pytest

from graphflow.engine import (
    GuardConfig,
    RetryPolicy,
    SimulatedAdapter,
    VirtualClock,
)
from graphflow.events import encode_value
from graphflow.resources import Resource
from graphflow.store import MemoryEventStore
from graphflow.workspace import Workspace


def fresh_ws(source, name="t", adapter=None, retry=None):
    ws = Workspace(
        name=name,
        store=MemoryEventStore(),
        clock=VirtualClock(0.0),
        retry=retry or RetryPolicy(max_attempts=3, base_delay=0.01),
    )
    ws.adapters.register_default(adapter or SimulatedAdapter())
    ws.load_source(source)
    return ws


def seed_patient(ws, pid="p1"):
    ws.resources.put(
        Resource(
            id="prov-1",
            resource_type="contact",
            ext_type="Provider",
            ext_data={"id": "ext-prov-1"},
        )
    )
    ws.resources.put(
        Resource(
            id=pid,
            resource_type="contact",
            ext_type="Patient",
            tags={"upcoming-appointment", "over-60"},
            ext_data={"id": f"ext-{pid}", "usualProviderId": "ext-prov-1"},
        )
    )


class TestBasicReplay:
    def test_pure_run_replays_identically(self, sum_of_squares_source):
        ws = fresh_ws(sum_of_squares_source)
        run = ws.engine.start_run("t", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4})
        result = ws.engine.replay("t", run.run_id)
        assert result.return_value == {"sum": 25}
        assert result.trace == run.trace
        assert result.status == "completed"
        assert not result.incomplete
        assert ws.adapters.invocations == 0

    def test_pathway_replay_no_adapter_calls(self, care_pathway_source):
        ws = fresh_ws(care_pathway_source)
        seed_patient(ws)
        run = ws.engine.start_run(
            "t", "cognitive-testing-care-pathway",
            bindings={"patient": "p1", "provider": "prov-1"}, subject="p1",
        )
        ws.resources.add_tag("p1", "cognitive-screening-positive")
        ws.resources.add_tag("p1", "cognitive-screening-completed")
        ws.engine.signal("t", run.run_id, {"kind": "human-decision", "choice": "proceed"}, actor="op")
        ws.resources.add_tag("p1", "cognitive-assessment-positive")
        ws.resources.add_tag("p1", "cognitive-assessment-completed")
        assert run.status == "completed"
        calls_before = ws.adapters.invocations
        assert calls_before >= 4  # create-lab-order x3, send-text
        result = ws.engine.replay("t", run.run_id)
        assert ws.adapters.invocations == calls_before  # zero during replay
        assert result.status == "completed"
        assert result.trace == run.trace
        assert encode_value(result.run.state) == encode_value(run.state)

    def test_truncated_log_flagged_incomplete(self, sum_of_squares_source):
        ws = fresh_ws(sum_of_squares_source)
        run = ws.engine.start_run("t", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4})
        events = ws.store.read("t", run.run_id)
        truncated = MemoryEventStore()
        truncated.create_workspace("t")
        for e in events[:-1]:
            truncated.append("t", run.run_id, e.kind, e.payload, e.node_id, e.idempotency_key, e.at)
        ws2 = fresh_ws(sum_of_squares_source)
        ws2.engine.store = truncated
        result = ws2.engine.replay("t", run.run_id)
        assert result.incomplete
        assert ws2.adapters.invocations == 0


def drive_pathway_randomly(ws, run, rng) -> None:
    """Scripted signaler with randomized outcomes and orderings."""
    positive_screen = rng.random() < 0.6
    positive_assess = rng.random() < 0.5
    if run.status != "waiting":
        return
    if positive_screen and rng.random() < 0.5:
        ws.resources.add_tag("p1", "cognitive-screening-positive")
    if rng.random() < 0.3:
        ws.engine.signal(
            "t", run.run_id, {"kind": "tag-added", "resource": "p1", "tag": "noise"},
        )
    if positive_screen and not ws.resources.has_tag("p1", "cognitive-screening-positive"):
        ws.resources.add_tag("p1", "cognitive-screening-positive")
    ws.resources.add_tag("p1", "cognitive-screening-completed")
    if run.status == "waiting" and run.cursor == "6":
        ws.engine.signal("t", run.run_id, {"kind": "human-decision", "choice": "proceed"}, actor="op")
    if run.status == "waiting" and run.cursor == "7":
        if positive_assess:
            ws.resources.add_tag("p1", "cognitive-assessment-positive")
        ws.resources.add_tag("p1", "cognitive-assessment-completed")


class TestRandomizedReplay:
    @pytest.mark.parametrize("seed", range(5))
    def test_pathway_random_outcomes(self, care_pathway_source, seed):
        rng = random.Random(seed)
        adapter = SimulatedAdapter(failure_rate=0.15, seed=seed)
        ws = fresh_ws(care_pathway_source, adapter=adapter)
        seed_patient(ws)
        try:
            run = ws.engine.start_run(
                "t", "cognitive-testing-care-pathway",
                bindings={"patient": "p1", "provider": "prov-1"}, subject="p1",
            )
        except Exception:
            return  # boundary exhaustion before RunStarted cannot happen; defensive
        drive_pathway_randomly(ws, run, rng)
        assert run.terminal or run.status == "waiting"
        calls = ws.adapters.invocations
        result = ws.engine.replay("t", run.run_id)
        assert ws.adapters.invocations == calls
        assert result.status == run.status
        assert result.trace == run.trace
        assert encode_value(result.run.state) == encode_value(run.state)

    def test_squares_random_inputs(self, sum_of_squares_source):
        rng = random.Random(99)
        ws = fresh_ws(sum_of_squares_source)
        for _ in range(25):
            a, b = rng.randint(-40, 40), rng.randint(-40, 40)
            run = ws.engine.start_run("t", "calculate-sum-of-squares-bounded", {"a": a, "b": b})
            result = ws.engine.replay("t", run.run_id)
            assert result.status == run.status
            assert result.return_value == run.return_value
            assert result.trace == run.trace


class TestCrashRecovery:
    def _clone_prefix(self, events, k):
        store = MemoryEventStore()
        store.create_workspace("t")
        for e in events[:k]:
            store.append("t", e.run_id, e.kind, e.payload, e.node_id, e.idempotency_key, e.at)
        return store

    def _strip_at(self, events):
        return [
            (e.seq, e.kind, e.node_id, encode_value(e.payload), e.idempotency_key)
            for e in events
        ]

    @pytest.mark.parametrize("scenario", ["squares", "pathway"])
    def test_every_prefix_resumes_to_same_terminal(
        self, scenario, sum_of_squares_source, care_pathway_source
    ):
        if scenario == "squares":
            source = sum_of_squares_source
            baseline_ws = fresh_ws(source)
            run = baseline_ws.engine.start_run(
                "t", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4}
            )
            signals = []
        else:
            source = care_pathway_source
            baseline_ws = fresh_ws(source)
            seed_patient(baseline_ws)
            run = baseline_ws.engine.start_run(
                "t", "cognitive-testing-care-pathway",
                bindings={"patient": "p1", "provider": "prov-1"}, subject="p1",
            )
            baseline_ws.resources.add_tag("p1", "cognitive-screening-completed")
            signals = ["screening-completed"]
        assert run.terminal
        full_events = baseline_ws.store.read("t", run.run_id)
        assert len(full_events) <= 40

        for k in range(1, len(full_events)):
            store = self._clone_prefix(full_events, k)
            ws = fresh_ws(source)
            if scenario == "pathway":
                seed_patient(ws)
                ws.resources.add_tag("p1", "cognitive-screening-completed")
            ws.engine.store = store
            resumed = ws.engine.resume("t", run.run_id)
            if resumed.status == "waiting":
                # Crashed before the signal landed: deliver it again.
                ws.engine.signal(
                    "t", run.run_id,
                    {"kind": "tag-added", "resource": "p1", "tag": "cognitive-screening-completed"},
                )
            assert resumed.terminal, f"prefix {k} did not reach terminal"
            assert resumed.status == run.status, f"prefix {k}"
            assert encode_value(resumed.state) == encode_value(run.state), f"prefix {k}"
            assert resumed.trace == run.trace, f"prefix {k}"
            resumed_events = store.read("t", run.run_id)
            assert self._strip_at(resumed_events) == self._strip_at(full_events), f"prefix {k}"


class TestCheckpoints:
    def test_checkpoint_resume_equals_full_replay(self, care_pathway_source):
        ws = fresh_ws(care_pathway_source)
        seed_patient(ws)
        run = ws.engine.start_run(
            "t", "cognitive-testing-care-pathway",
            bindings={"patient": "p1", "provider": "prov-1"}, subject="p1",
        )
        assert run.status == "waiting"
        ws.engine.checkpoint("t", run.run_id)
        ws.resources.add_tag("p1", "cognitive-screening-completed")
        assert run.status == "completed"

        # Fold via checkpoint + suffix (load_run) vs full strict replay.
        loaded = ws.engine.load_run("t", run.run_id)
        replayed = ws.engine.replay("t", run.run_id)
        assert loaded.status == replayed.status == "completed"
        assert encode_value(loaded.state) == encode_value(replayed.run.state)
        assert loaded.trace == replayed.trace
