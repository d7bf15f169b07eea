"""CLI verbs end to end over a temporary file-backed root."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from graphflow.cli import main
from graphflow.corpus import corpus_path


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, root, *args, **kw):
    return runner.invoke(main, ["--root", str(root), *args], catch_exceptions=False, **kw)


class TestParseVerb:
    def test_parse_summary(self, runner, tmp_path):
        res = invoke(runner, tmp_path, "parse", corpus_path("sum_of_squares.gfl"))
        assert res.exit_code == 0
        assert "diagram calculate-sum-of-squares-bounded" in res.output
        assert "6 nodes" in res.output

    def test_parse_error_exit_1(self, runner, tmp_path):
        bad = tmp_path / "bad.gfl"
        bad.write_text('gadget "X":\n  a: 1\n')
        res = invoke(runner, tmp_path, "parse", str(bad))
        assert res.exit_code == 1
        assert "unknown construct" in res.output


class TestVerifyVerb:
    def test_verify_admitted(self, runner, tmp_path):
        res = invoke(runner, tmp_path, "verify", corpus_path("sum_of_squares.gfl"), "--budget", "100")
        assert res.exit_code == 0
        assert "admitted" in res.output

    def test_verify_rejected(self, runner, tmp_path):
        res = invoke(runner, tmp_path, "verify", corpus_path("sales_report_process.gfl"))
        assert res.exit_code == 1
        assert "rejected" in res.output
        assert "cycle" in res.output
        assert ":send-email" in res.output


class TestRunVerbs:
    def test_admit_run_replay_loop(self, runner, tmp_path):
        res = invoke(runner, tmp_path, "admit", corpus_path("sum_of_squares.gfl"), "--budget", "100")
        assert res.exit_code == 0
        assert "admitted calculate-sum-of-squares-bounded-" in res.output

        res = invoke(
            runner, tmp_path, "run", "calculate-sum-of-squares-bounded",
            "--input", "a=3", "--input", "b=4",
        )
        assert res.exit_code == 0
        assert "completed" in res.output
        assert '"sum": 25' in res.output

        run_id = [l for l in res.output.splitlines() if l.startswith("run ")][0].split()[1].rstrip(":")
        res = invoke(runner, tmp_path, "replay", run_id)
        assert res.exit_code == 0
        assert "completed" in res.output

    def test_run_precondition_exit_1(self, runner, tmp_path):
        invoke(runner, tmp_path, "admit", corpus_path("sum_of_squares.gfl"), "--budget", "100")
        res = invoke(
            runner, tmp_path, "run", "calculate-sum-of-squares-bounded",
            "--input", "a=null", "--input", "b=4",
        )
        assert res.exit_code == 1
        assert "(:ne $.a null)" in res.output

    def test_signal_decision(self, runner, tmp_path):
        invoke(runner, tmp_path, "load", corpus_path("sales_report_process.gfl"))
        res = invoke(runner, tmp_path, "run", "sales-report-submission-process")
        assert res.exit_code == 0
        run_id = [l for l in res.output.splitlines() if l.startswith("run ")][0].split()[1].rstrip(":")
        res = invoke(
            runner, tmp_path, "signal", run_id, "--decision", "3=proceed", "--actor", "coo"
        )
        assert res.exit_code == 0
        res = invoke(
            runner, tmp_path, "signal", run_id, "--decision", "4=yes", "--actor", "coo"
        )
        assert res.exit_code == 0
        assert "completed" in res.output


class TestCohortVerbs:
    def seed(self, runner, tmp_path):
        invoke(runner, tmp_path, "load", corpus_path("care_pathway.gfl"))
        records = tmp_path / "resources.jsonl"
        rows = [
            {"id": "prov-1", "resource_type": "contact", "ext_type": "Provider",
             "tags": [], "fields": {}, "ext_data": {"id": "ext-prov"}},
            {"id": "p1", "resource_type": "contact", "ext_type": "Patient",
             "tags": ["upcoming-appointment", "over-60"], "fields": {},
             "ext_data": {"id": "ext-p1", "usualProviderId": "ext-prov"}},
        ]
        records.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        res = invoke(runner, tmp_path, "resources", "import", "--file", str(records))
        assert res.exit_code == 0

    def test_query_metric_trigger(self, runner, tmp_path):
        self.seed(runner, tmp_path)
        res = invoke(runner, tmp_path, "query", "cognitive-screening-eligible")
        assert res.exit_code == 0 and "p1" in res.output

        res = invoke(runner, tmp_path, "metric", "cognitive-screening-completed")
        assert res.exit_code == 0 and "= 0" in res.output

        res = invoke(runner, tmp_path, "trigger", "cognitive-testing-for-eligible-patients", "--fire")
        assert res.exit_code == 0
        run_id = res.output.strip().splitlines()[-1]

        res = invoke(runner, tmp_path, "tag", "p1", "cognitive-screening-completed")
        assert res.exit_code == 0
        res = invoke(runner, tmp_path, "replay", run_id)
        assert res.exit_code == 0 and "completed" in res.output

        res = invoke(runner, tmp_path, "metric", "cognitive-screening-completed")
        assert "= 1" in res.output


class TestSimulateVerb:
    def test_simulate_config(self, runner, tmp_path):
        cfg = tmp_path / "pilot.json"
        cfg.write_text(
            json.dumps(
                {
                    "profiles": [
                        {"name": "Tiny", "enrolled": 20, "failures": 2, "period": "Jan"},
                    ],
                    "executors": 2,
                }
            )
        )
        res = invoke(runner, tmp_path, "-o", "json", "simulate", "--config", str(cfg))
        assert res.exit_code == 0
        records = [json.loads(l) for l in res.output.strip().splitlines()]
        total = [r for r in records if r["clinic"] == "total"][0]
        assert total["completed"] == 18 and total["errored"] == 2
        assert total["success_rate"] == 90.0


class TestMachineOutput:
    def test_json_records(self, runner, tmp_path):
        res = invoke(runner, tmp_path, "-o", "json", "parse", corpus_path("care_pathway.gfl"))
        assert res.exit_code == 0
        records = [json.loads(l) for l in res.output.strip().splitlines()]
        assert len(records) == 7
        assert {r["kind"] for r in records} == {"trigger", "query", "diagram", "metric"}
