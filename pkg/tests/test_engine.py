"""Durable runtime: execution, signals, retries, guards, and recovery."""

from __future__ import annotations

import pytest

from graphflow.engine import (
    AdapterFailure,
    GuardConfig,
    PreconditionViolation,
    RetryPolicy,
    SignalMismatch,
    SimulatedAdapter,
    StaleSignal,
    VirtualClock,
)
from graphflow.resources import Resource
from graphflow.store import MemoryEventStore
from graphflow.workspace import Workspace


def make_workspace(name="test", guard=None, retry=None, adapters_cfg=None) -> Workspace:
    ws = Workspace(
        name=name,
        store=MemoryEventStore(),
        clock=VirtualClock(1_700_000_000.0),
        guard=guard or GuardConfig(),
        retry=retry or RetryPolicy(max_attempts=3, base_delay=0.1),
    )
    default = SimulatedAdapter(**(adapters_cfg or {}))
    ws.adapters.register_default(default)
    ws.default_adapter = default  # type: ignore[attr-defined]
    return ws


def seed_patients(ws: Workspace, n=1, provider="prov-1"):
    ws.resources.put(
        Resource(
            id=provider,
            resource_type="contact",
            ext_type="Provider",
            fields={"name": "Dr. Example"},
            ext_data={"id": f"ext-{provider}"},
        )
    )
    for i in range(1, n + 1):
        ws.resources.put(
            Resource(
                id=f"p{i}",
                resource_type="contact",
                ext_type="Patient",
                tags={"upcoming-appointment", "over-60"},
                fields={"name": f"Patient {i}"},
                ext_data={"id": f"ext-p{i}", "usualProviderId": f"ext-{provider}"},
            )
        )


@pytest.fixture()
def squares_ws(sum_of_squares_source):
    ws = make_workspace()
    ws.load_source(sum_of_squares_source)
    return ws


@pytest.fixture()
def pathway_ws(care_pathway_source):
    ws = make_workspace()
    ws.load_source(care_pathway_source)
    seed_patients(ws)
    return ws


@pytest.fixture()
def sales_ws(sales_process_source):
    ws = make_workspace()
    ws.load_source(sales_process_source)
    return ws


class TestPureRun:
    def test_sum_of_squares_completes(self, squares_ws):
        run = squares_ws.engine.start_run("test", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4})
        assert run.status == "completed"
        assert run.return_value == {"sum": 25}
        assert run.trace == ["1", "2", "3", "4", "5a"]

    def test_throw_branch(self, squares_ws):
        run = squares_ws.engine.start_run("test", "calculate-sum-of-squares-bounded", {"a": 30, "b": 20})
        assert run.status == "errored"
        assert run.error["reason"] == "workflow-throw"
        assert run.error["message"] == "Sum exceeds allowed bound"

    def test_precondition_violation(self, squares_ws):
        with pytest.raises(PreconditionViolation) as exc:
            squares_ws.engine.start_run("test", "calculate-sum-of-squares-bounded", {"a": None, "b": 4})
        assert exc.value.failed == ["(:ne $.a null)"]
        # The rejection itself is audited as the run's only event.
        events = squares_ws.store.read("test", exc.value.run_id)
        assert [e.kind for e in events] == ["RunErrored"]

    def test_no_boundary_events_for_core_nodes(self, squares_ws):
        run = squares_ws.engine.start_run("test", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4})
        events = squares_ws.store.read("test", run.run_id)
        assert all(e.kind != "BoundaryOutcome" for e in events)
        assert squares_ws.default_adapter.calls == 0

    def test_seq_dense_and_single_terminal(self, squares_ws):
        run = squares_ws.engine.start_run("test", "calculate-sum-of-squares-bounded", {"a": 3, "b": 4})
        events = squares_ws.store.read("test", run.run_id)
        assert [e.seq for e in events] == list(range(1, len(events) + 1))
        terminals = [e for e in events if e.kind in ("RunCompleted", "RunErrored")]
        assert len(terminals) == 1 and events[-1] is terminals[0]


class TestCarePathway:
    def start(self, ws):
        return ws.engine.start_run(
            "test",
            "cognitive-testing-care-pathway",
            inputs={},
            bindings={"patient": "p1", "provider": "prov-1"},
            subject="p1",
        )

    def test_waits_for_screening_result(self, pathway_ws):
        run = self.start(pathway_ws)
        assert run.status == "waiting"
        assert run.cursor == "3"
        listener = run.listener()
        assert listener["kind"] == "tag"
        assert listener["resource"] == "p1"
        assert listener["filters"] == [{"mode": "with", "tag": "cognitive-screening-completed"}]

    def test_tag_resumes_run(self, pathway_ws):
        run = self.start(pathway_ws)
        pathway_ws.resources.add_tag("p1", "cognitive-screening-completed")
        assert run.status in ("completed", "waiting")
        # No positive tag: decision 4 takes the absent `no` branch and the
        # run completes right there.
        assert run.status == "completed"
        assert "4" in run.trace and "5" not in run.trace

    def test_positive_path_reaches_assessment(self, pathway_ws):
        run = self.start(pathway_ws)
        pathway_ws.resources.add_tag("p1", "cognitive-screening-positive")
        pathway_ws.resources.add_tag("p1", "cognitive-screening-completed")
        # Now waiting at node 6 (meeting: proctor assessment).
        assert run.status == "waiting"
        assert run.cursor == "6"
        pathway_ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "node": "6", "choice": "proceed"}, actor="alice"
        )
        assert run.cursor == "7"
        pathway_ws.resources.add_tag("p1", "cognitive-assessment-positive")
        pathway_ws.resources.add_tag("p1", "cognitive-assessment-completed")
        assert run.status == "completed"
        assert run.trace == ["1", "2", "3", "4", "5", "6", "7", "8", "9"]

    def test_unrelated_tag_logged_but_no_state_change(self, pathway_ws):
        run = self.start(pathway_ws)
        before = len(pathway_ws.store.read("test", run.run_id))
        pathway_ws.engine.signal(
            "test", run.run_id, {"kind": "tag-added", "resource": "p1", "tag": "unrelated"}
        )
        events = pathway_ws.store.read("test", run.run_id)
        assert len(events) == before + 1
        assert events[-1].kind == "SignalReceived"
        assert events[-1].payload["matched"] is False
        assert run.status == "waiting"

    def test_boundary_confinement(self, pathway_ws):
        run = self.start(pathway_ws)
        pathway_ws.resources.add_tag("p1", "cognitive-screening-completed")
        events = pathway_ws.store.read("test", run.run_id)
        by_node: dict[str, list] = {}
        for e in events:
            if e.node_id:
                by_node.setdefault(e.node_id, []).append(e.kind)
        d = run.diagram
        for nid in run.executed:
            kinds = by_node.get(nid, [])
            assert not d.is_core(nid)
            assert "BoundaryOutcome" in kinds or "SignalReceived" in kinds, (nid, kinds)

    def test_stale_signal(self, pathway_ws):
        run = self.start(pathway_ws)
        pathway_ws.resources.add_tag("p1", "cognitive-screening-completed")
        assert run.status == "completed"
        with pytest.raises(StaleSignal):
            pathway_ws.engine.signal(
                "test", run.run_id, {"kind": "tag-added", "resource": "p1", "tag": "x"}
            )

    def test_signal_mismatch(self, pathway_ws):
        run = self.start(pathway_ws)
        with pytest.raises(SignalMismatch):
            pathway_ws.engine.signal(
                "test", run.run_id, {"kind": "human-decision", "node": "3", "choice": "yes"}, actor="a"
            )


class TestSalesProcess:
    def test_approval_loop(self, sales_ws):
        run = sales_ws.engine.start_run("test", "sales-report-submission-process", {})
        # Meeting at node 3 (review), then decision at node 4.
        assert run.status == "waiting" and run.cursor == "3"
        sales_ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "choice": "proceed"}, actor="coo"
        )
        assert run.status == "waiting" and run.cursor == "4"
        sales_ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "node": "4", "choice": "no"}, actor="coo"
        )
        # Rejected: routed back to node 1 and forward to the review again.
        assert run.status == "waiting" and run.cursor == "3"
        assert run.trace[:6] == ["1", "2", "3", "4", "1", "2"]
        sales_ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "choice": "proceed"}, actor="coo"
        )
        sales_ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "node": "4", "choice": "yes"}, actor="coo"
        )
        assert run.status == "completed"
        assert run.trace[-1] == "5"

    def test_actor_required(self, sales_ws):
        run = sales_ws.engine.start_run("test", "sales-report-submission-process", {})
        with pytest.raises(SignalMismatch):
            sales_ws.engine.signal(
                "test", run.run_id, {"kind": "human-decision", "choice": "proceed"}, actor=""
            )


class TestRetries:
    def test_fail_then_succeed(self, care_pathway_source):
        ws = make_workspace(adapters_cfg={"fault_schedule": [False, True]})
        ws.load_source(care_pathway_source)
        seed_patients(ws)
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "waiting"  # got past node 1 after one retry
        events = ws.store.read("test", run.run_id)
        outcomes = [e for e in events if e.kind == "BoundaryOutcome" and e.node_id == "1"]
        assert len(outcomes) == 2
        assert outcomes[0].payload["ok"] is False
        assert outcomes[1].payload["ok"] is True
        # Same idempotency key across automatic retries.
        assert outcomes[0].payload["key"] == outcomes[1].payload["key"]

    def test_retries_exhausted(self, care_pathway_source):
        ws = make_workspace(adapters_cfg={"fault_schedule": [False, False, False]})
        ws.load_source(care_pathway_source)
        seed_patients(ws)
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "errored"
        assert run.error["reason"] == "boundary-failure"
        assert run.error["node"] == "1"
        assert run.error["attempts"] == 3

    def test_duplicate_key_short_circuits(self, care_pathway_source):
        ws = make_workspace()
        ws.load_source(care_pathway_source)
        seed_patients(ws)
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        calls_before = ws.default_adapter.calls
        # Crash right after node 1 completed: drop live state, resume.
        del ws.engine._live[("test", run.run_id)]
        resumed = ws.engine.resume("test", run.run_id)
        assert resumed.status == "waiting"
        assert ws.default_adapter.calls == calls_before  # outcomes replayed, not re-invoked


class TestGuards:
    def _null_order_ws(self, care_pathway_source, guard):
        ws = make_workspace(
            guard=guard,
            adapters_cfg={"result_fn": lambda action, args, key: None},
        )
        ws.load_source(care_pathway_source)
        seed_patients(ws)
        return ws

    def test_violation_errors_when_enforced(self, care_pathway_source):
        ws = self._null_order_ws(
            care_pathway_source, GuardConfig(enforce_boundary_contracts=True, on_violation="error")
        )
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "errored"
        assert run.error["reason"] == "guard-violation"
        events = ws.store.read("test", run.run_id)
        kinds = [e.kind for e in events]
        assert "GuardViolated" in kinds
        assert "NodeCompleted" not in kinds[kinds.index("GuardViolated") :]

    def test_violation_pauses_when_configured(self, care_pathway_source):
        ws = self._null_order_ws(
            care_pathway_source, GuardConfig(enforce_boundary_contracts=True, on_violation="pause")
        )
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "paused"
        ws.engine.signal(
            "test", run.run_id, {"kind": "human-decision", "choice": "resume"}, actor="op"
        )
        assert run.status in ("waiting", "running", "completed")

    def test_audit_only_when_not_enforced(self, care_pathway_source):
        ws = self._null_order_ws(care_pathway_source, GuardConfig(enforce_boundary_contracts=False))
        run = ws.engine.start_run(
            "test", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "waiting"  # continued despite the bad outcome
        events = ws.store.read("test", run.run_id)
        checked = [e for e in events if e.kind == "GuardChecked" and not e.payload["ok"]]
        assert checked  # violation still recorded for audit


class TestWorkspaceRecovery:
    def test_recover_waiting_run(self, care_pathway_source):
        store = MemoryEventStore()
        ws = Workspace(name="t", store=store, clock=VirtualClock(0))
        ws.adapters.register_default(SimulatedAdapter())
        ws.load_source(care_pathway_source)
        seed_patients(ws)
        run = ws.engine.start_run(
            "t", "cognitive-testing-care-pathway", bindings={"patient": "p1", "provider": "prov-1"}, subject="p1"
        )
        assert run.status == "waiting"
        # Restart: new workspace over the same store.
        ws2 = Workspace(name="t", store=store, clock=VirtualClock(0))
        ws2.adapters.register_default(SimulatedAdapter())
        ws2.load_source(care_pathway_source)
        recovered = ws2.engine.recover_workspace("t")
        assert run.run_id in recovered
        ws2.resources.add_tag("p1", "cognitive-screening-completed")
        reloaded = ws2.engine.load_run("t", run.run_id)
        assert reloaded.status == "completed"
