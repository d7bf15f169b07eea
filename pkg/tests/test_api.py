"""HTTP API surface via the in-process test client."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from graphflow.api import create_app
from graphflow.engine import SimulatedAdapter, VirtualClock
from graphflow.resources import Resource
from graphflow.store import MemoryEventStore
from graphflow.workspace import Workspace


@pytest.fixture()
def ws(care_pathway_source, sum_of_squares_source):
    ws = Workspace(name="main", store=MemoryEventStore(), clock=VirtualClock(1_700_000_000.0))
    ws.adapters.register_default(SimulatedAdapter())
    ws.load_source(care_pathway_source)
    ws.load_source(sum_of_squares_source)
    ws.resources.put(Resource("prov-1", "contact", "Provider", ext_data={"id": "ext-prov"}))
    ws.resources.put(
        Resource(
            "p1", "contact", "Patient",
            tags={"upcoming-appointment", "over-60"},
            fields={"name": "Pat"},
            ext_data={"id": "ext-p1", "usualProviderId": "ext-prov"},
        )
    )
    return ws


@pytest.fixture()
def client(ws):
    return TestClient(create_app({"main": ws}))


def start_pathway(client):
    res = client.post(
        "/workspaces/main/diagrams/cognitive-testing-care-pathway/runs",
        json={"bindings": {"patient": "p1", "provider": "prov-1"}, "subject": "p1", "actor": "op"},
    )
    assert res.status_code == 200
    return res.json()


class TestRuns:
    def test_start_and_detail(self, client):
        view = start_pathway(client)
        assert view["status"] == "waiting"
        assert view["current_node"]["id"] == "3"
        assert view["current_lane"] == "medflow"
        # Redaction: contact ids only unless ?full=1.
        assert view["state"]["swimlanes"]["patient"]["contact"] == {"id": "p1"}

        full = client.get(f"/runs/{view['run_id']}", params={"full": "true"}).json()
        assert full["state"]["swimlanes"]["patient"]["contact"]["name"] == "Pat"

    def test_list_runs_filter(self, client):
        view = start_pathway(client)
        runs = client.get("/workspaces/main/runs", params={"status": "waiting"}).json()["runs"]
        assert [r["run_id"] for r in runs] == [view["run_id"]]
        assert client.get("/workspaces/main/runs", params={"status": "completed"}).json()["runs"] == []

    def test_events_from_seq(self, client):
        view = start_pathway(client)
        events = client.get(f"/runs/{view['run_id']}/events", params={"from": 3}).json()["events"]
        assert events[0]["seq"] == 3

    def test_unknown_run_404(self, client):
        assert client.get("/runs/ghost").status_code == 404

    def test_precondition_400(self, client):
        res = client.post(
            "/workspaces/main/diagrams/calculate-sum-of-squares-bounded/runs",
            json={"inputs": {"a": None, "b": 4}, "actor": "op"},
        )
        assert res.status_code == 400
        assert "(:ne $.a null)" in res.json()["detail"]


class TestSignals:
    def test_tag_signal_resumes(self, client, ws):
        view = start_pathway(client)
        res = client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "tag-added", "tag": "cognitive-screening-completed", "resource": "p1", "actor": "op"},
        )
        assert res.status_code == 200
        assert res.json()["status"] == "completed"

    def test_human_decision_records_actor(self, client, ws):
        view = start_pathway(client)
        ws.resources.add_tag("p1", "cognitive-screening-positive")
        client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "tag-added", "tag": "cognitive-screening-completed", "resource": "p1", "actor": "op"},
        )
        # Now waiting at the proctoring meeting (node 6).
        tasks = client.get("/workspaces/main/tasks").json()["tasks"]
        assert len(tasks) == 1
        assert tasks[0]["label"] == "Proctor Cognitive Assessment"
        res = client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "human-decision", "node_id": "6", "choice": "proceed", "actor": "alice"},
        )
        assert res.status_code == 200
        events = client.get(f"/runs/{view['run_id']}/events").json()["events"]
        received = [e for e in events if e["kind"] == "SignalReceived" and e["payload"].get("matched")]
        assert received[-1]["payload"]["actor"] == "alice"

    def test_tag_wait_surfaces_decision_preview(self, client):
        view = start_pathway(client)
        tasks = client.get("/workspaces/main/tasks").json()["tasks"]
        assert len(tasks) == 1
        task = tasks[0]
        assert task["node_id"] == "3"
        assert task["await_tags"] == ["cognitive-screening-completed"]
        assert task["decision_node"] == "4"
        assert task["decision_label"] == "Further testing recommended?"
        assert task["decision_tag"] == "cognitive-screening-positive"
        assert task["choices"] == ["yes", "no"]
        # Answering yes = tag the positive finding, then complete the wait.
        for tag in (task["decision_tag"], *task["await_tags"]):
            res = client.post(
                f"/runs/{view['run_id']}/signal",
                json={"kind": "tag-added", "tag": tag, "resource": task["resource"], "actor": "dr-b"},
            )
            assert res.status_code == 200
        detail = client.get(f"/runs/{view['run_id']}").json()
        assert "5" in detail["trace"]  # resumed past the decision to node 5

    def test_tag_signal_resumes_even_when_tag_preexists(self, client, ws):
        # The subject already carries the tag: add_tag is a no-op broadcast,
        # but the signal addressed to this run must still be delivered.
        ws.resources.add_tag("p1", "cognitive-screening-completed")
        view = start_pathway(client)
        assert view["status"] == "waiting"
        res = client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "tag-added", "tag": "cognitive-screening-completed", "resource": "p1", "actor": "op"},
        )
        assert res.status_code == 200
        assert res.json()["status"] == "completed"

    def test_signal_on_completed_run_409(self, client):
        view = start_pathway(client)
        client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "tag-added", "tag": "cognitive-screening-completed", "resource": "p1", "actor": "op"},
        )
        res = client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "human-decision", "choice": "proceed", "actor": "op"},
        )
        assert res.status_code == 409

    def test_actor_required(self, client):
        view = start_pathway(client)
        res = client.post(
            f"/runs/{view['run_id']}/signal",
            json={"kind": "human-decision", "choice": "proceed", "actor": ""},
        )
        assert res.status_code == 422  # validation: empty actor rejected


class TestDiagramsAndCohorts:
    def test_diagram_interchange(self, client):
        res = client.get("/workspaces/main/diagrams/cognitive-testing-care-pathway").json()
        assert res["acyclic"] is True
        assert len(res["nodes"]) == 9
        assert ["4", "yes", "5"] in res["edges"]
        assert {l["slug"] for l in res["lanes"]} == {"patient", "staff", "provider", "medflow", "ehr"}

    def test_diagram_list(self, client):
        diagrams = client.get("/workspaces/main/diagrams").json()["diagrams"]
        assert {d["slug"] for d in diagrams} == {
            "cognitive-testing-care-pathway",
            "calculate-sum-of-squares-bounded",
        }

    def test_cohort(self, client):
        res = client.get("/workspaces/main/queries/cognitive-screening-eligible/cohort").json()
        assert [r["id"] for r in res["cohort"]] == ["p1"]

    def test_metric_sampling(self, client, ws):
        client.post("/workspaces/main/metrics/cognitive-screening-completed/sample")
        ws.resources.add_tag("p1", "cognitive-screening-completed")
        client.post("/workspaces/main/metrics/cognitive-screening-completed/sample")
        samples = client.get(
            "/workspaces/main/metrics/cognitive-screening-completed/samples"
        ).json()["samples"]
        assert [s["value"] for s in samples] == [0, 1]

    def test_unknown_404s(self, client):
        assert client.get("/workspaces/nope/runs").status_code == 404
        assert client.get("/workspaces/main/diagrams/ghost").status_code == 404
        assert client.get("/workspaces/main/queries/ghost/cohort").status_code == 404
