"""Multi-clinic pilot simulation over the care-pathway corpus.

Seeds synthetic patient cohorts per clinic profile, enrolls each patient in
exactly one run via the pathway trigger, injects gate failures at the first
lab-order boundary (exact quota or seeded probability), drives the surviving
runs to completion with a scripted signaler, and assembles the report purely
from the event logs.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP

from graphflow.corpus import corpus_text
from graphflow.engine import AdapterFailure, RetryPolicy, SimulatedAdapter, VirtualClock
from graphflow.resources import Resource
from graphflow.store import EventStore, MemoryEventStore
from graphflow.workspace import Workspace

GATE_ORDER = "Cognitive Screening"
PATHWAY_TRIGGER = "cognitive-testing-for-eligible-patients"
DEFAULT_REASON_MIX = {"authorization-failure": 1.0}


class ConfigError(Exception):
    pass


@dataclass
class ClinicProfile:
    name: str
    enrolled: int
    failures: int | None = None  # quota mode: exactly this many gate failures
    failure_rate: float | None = None  # probability mode
    seed: int = 0
    period: str = ""
    reason_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_REASON_MIX))

    def __post_init__(self) -> None:
        if self.failures is not None and self.failures > self.enrolled:
            raise ConfigError(
                f"clinic {self.name}: failure quota {self.failures} exceeds enrollment {self.enrolled}"
            )
        if self.failures is None and self.failure_rate is None:
            self.failures = 0


@dataclass
class ClinicResult:
    name: str
    period: str
    completed: int
    errored: int

    @property
    def success_rate(self) -> float:
        return rate_pct(self.completed, self.completed + self.errored)


@dataclass
class PilotReport:
    clinics: list[ClinicResult]
    reasons: dict[str, int]

    @property
    def total_completed(self) -> int:
        return sum(c.completed for c in self.clinics)

    @property
    def total_errored(self) -> int:
        return sum(c.errored for c in self.clinics)

    @property
    def total_rate(self) -> float:
        return rate_pct(self.total_completed, self.total_completed + self.total_errored)

    def table(self) -> str:
        rows = [("Clinic", "Period", "Completed", "Errored", "Success")]
        for c in self.clinics:
            rows.append(
                (c.name, c.period, f"{c.completed:,}", f"{c.errored:,}", f"{c.success_rate:.2f}%")
            )
        rows.append(
            ("Total", "-", f"{self.total_completed:,}", f"{self.total_errored:,}", f"{self.total_rate:.2f}%")
        )
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        if self.reasons:
            lines.append("")
            lines.append("failure reasons: " + ", ".join(f"{k}={v}" for k, v in sorted(self.reasons.items())))
        return "\n".join(lines)

    def records(self) -> list[dict]:
        out = [
            {
                "clinic": c.name,
                "period": c.period,
                "completed": c.completed,
                "errored": c.errored,
                "success_rate": c.success_rate,
            }
            for c in self.clinics
        ]
        out.append(
            {
                "clinic": "total",
                "period": "-",
                "completed": self.total_completed,
                "errored": self.total_errored,
                "success_rate": self.total_rate,
                "reasons": self.reasons,
            }
        )
        return out


def rate_pct(completed: int, total: int) -> float:
    """completed/total as a percent, rounded half-up to 2 decimals."""
    if total == 0:
        return 100.0
    pct = Decimal(completed) / Decimal(total) * 100
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def three_clinic_profiles() -> list[ClinicProfile]:
    """The three-site deployment: enrollment derived as completed + errored."""
    return [
        ClinicProfile("Clinic α", 6987, failures=73, period="Jan-Dec"),
        ClinicProfile("Clinic β", 102, failures=0, period="Oct-Dec"),
        ClinicProfile(
            "Clinic γ", 1639, failures=182, period="Oct-Dec",
            reason_mix={"authorization-failure": 0.7, "data-integrity": 0.3},
        ),
    ]


class GateFaultAdapter:
    """Boundary adapter failing the gating lab order for selected patients."""

    def __init__(self, failing: dict[str, str]):
        self.failing = failing  # patient ext-id -> failure reason
        self.calls = 0

    def __call__(self, action: str, args: dict, key: str):
        self.calls += 1
        if action == "create-lab-order" and args.get("labOrder") == GATE_ORDER:
            reason = self.failing.get(args.get("patientId"))
            if reason is not None:
                raise AdapterFailure(reason)
        return SimulatedAdapter.default_result(action, args, key)


def _choose_failing(profile: ClinicProfile) -> dict[str, str]:
    """Exact-quota mode: which patients fail, spread by seeded shuffle."""
    rng = random.Random(profile.seed ^ 0x5EED)
    ids = [f"{profile.name}-p{i}" for i in range(1, profile.enrolled + 1)]
    rng.shuffle(ids)
    reasons = _reason_schedule(profile, profile.failures or 0, rng)
    return {f"ext-{pid}": reasons[i] for i, pid in enumerate(ids[: profile.failures or 0])}


def _choose_failing_probabilistic(profile: ClinicProfile) -> dict[str, str]:
    rng = random.Random(profile.seed ^ 0xD1CE)
    failing: dict[str, str] = {}
    candidates = []
    for i in range(1, profile.enrolled + 1):
        if rng.random() < (profile.failure_rate or 0.0):
            candidates.append(f"ext-{profile.name}-p{i}")
    reasons = _reason_schedule(profile, len(candidates), rng)
    for i, ext in enumerate(candidates):
        failing[ext] = reasons[i]
    return failing


def _reason_schedule(profile: ClinicProfile, n: int, rng: random.Random) -> list[str]:
    reasons = sorted(profile.reason_mix.items())
    out = []
    for _ in range(n):
        roll = rng.random()
        acc = 0.0
        chosen = reasons[-1][0]
        for name, weight in reasons:
            acc += weight
            if roll < acc:
                chosen = name
                break
        out.append(chosen)
    return out


def simulate(
    profiles: list[ClinicProfile],
    store: EventStore | None = None,
    positive_rates: tuple[float, float] = (0.3, 0.5),
    executors: int = 8,
    signal_seed: int = 0,
) -> PilotReport:
    """Run the pathway once per enrolled patient per clinic; report from logs."""
    store = store or MemoryEventStore()
    source = corpus_text("care_pathway.gfl")
    results: list[ClinicResult] = []
    reasons: dict[str, int] = {}

    for profile in profiles:
        ws_name = _workspace_name(profile.name)
        if profile.failure_rate is not None:
            failing = _choose_failing_probabilistic(profile)
        else:
            failing = _choose_failing(profile)
        adapter = GateFaultAdapter(failing)
        ws = Workspace(
            name=ws_name,
            store=store,
            clock=VirtualClock(1_735_689_600.0),  # 2025-01-01T00:00Z
            retry=RetryPolicy(max_attempts=1),
        )
        ws.adapters.register_default(SimulatedAdapter())
        ws.adapters.register("create-lab-order", adapter)
        ws.load_source(source)
        _seed_clinic(ws, profile)

        started = ws.fire_trigger(PATHWAY_TRIGGER)
        if len(started) != profile.enrolled:
            raise ConfigError(
                f"clinic {profile.name}: {len(started)} runs for {profile.enrolled} patients"
            )
        _drive_runs(ws, started, positive_rates, signal_seed, executors)
        results.append(_clinic_result_from_logs(store, ws_name, profile, reasons))
    return PilotReport(results, reasons)


def _workspace_name(clinic: str) -> str:
    return "clinic-" + "".join(ch if ch.isalnum() else "-" for ch in clinic.lower())


def _seed_clinic(ws: Workspace, profile: ClinicProfile) -> None:
    ws.resources.put(
        Resource(
            id=f"{profile.name}-provider",
            resource_type="contact",
            ext_type="Provider",
            ext_data={"id": f"ext-{profile.name}-provider"},
        )
    )
    for i in range(1, profile.enrolled + 1):
        pid = f"{profile.name}-p{i}"
        ws.resources.put(
            Resource(
                id=pid,
                resource_type="contact",
                ext_type="Patient",
                tags={"upcoming-appointment", "over-60"},
                fields={"name": f"Synthetic {i}"},
                ext_data={"id": f"ext-{pid}", "usualProviderId": f"ext-{profile.name}-provider"},
            )
        )


def _drive_runs(
    ws: Workspace,
    run_ids: list[str],
    positive_rates: tuple[float, float],
    signal_seed: int,
    executors: int,
) -> None:
    """Scripted signaler: completes every run that survived the gate."""

    def drive(run_id: str) -> None:
        run = ws.engine.load_run(ws.name, run_id)
        if run.terminal:
            return
        rng = random.Random(f"{signal_seed}:{run_id}")
        patient = run.bindings.get("patient")
        if rng.random() < positive_rates[0]:
            ws.resources.add_tag(patient, "cognitive-screening-positive")
        ws.resources.add_tag(patient, "cognitive-screening-completed")
        run = ws.engine.load_run(ws.name, run_id)
        if run.status == "waiting" and run.cursor == "6":
            ws.engine.signal(
                ws.name, run_id, {"kind": "human-decision", "choice": "proceed"}, actor="sim-staff"
            )
        if run.status == "waiting" and run.cursor == "7":
            if rng.random() < positive_rates[1]:
                ws.resources.add_tag(patient, "cognitive-assessment-positive")
            ws.resources.add_tag(patient, "cognitive-assessment-completed")

    if executors <= 1:
        for run_id in run_ids:
            drive(run_id)
    else:
        with ThreadPoolExecutor(max_workers=executors) as pool:
            list(pool.map(drive, run_ids))


def _clinic_result_from_logs(
    store: EventStore, ws_name: str, profile: ClinicProfile, reasons: dict[str, int]
) -> ClinicResult:
    completed = errored = 0
    for run_id in store.list_runs(ws_name):
        events = store.read(ws_name, run_id)
        last = events[-1]
        if last.kind == "RunCompleted":
            completed += 1
        elif last.kind == "RunErrored":
            errored += 1
            detail = last.payload.get("detail") or last.payload.get("reason") or "unknown"
            reasons[detail] = reasons.get(detail, 0) + 1
        else:
            raise ConfigError(f"run {run_id} is not terminal ({last.kind})")
    if completed + errored != profile.enrolled:
        raise ConfigError(
            f"clinic {profile.name}: {completed + errored} terminal runs, {profile.enrolled} enrolled"
        )
    return ClinicResult(profile.name, profile.period, completed, errored)


def report_from_logs(store: EventStore, profiles: list[ClinicProfile]) -> PilotReport:
    """Rebuild the report from event logs alone (no in-memory counters)."""
    reasons: dict[str, int] = {}
    results = [
        _clinic_result_from_logs(store, _workspace_name(p.name), p, reasons) for p in profiles
    ]
    return PilotReport(results, reasons)


def load_config(path: str) -> tuple[list[ClinicProfile], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        body = json.load(fh)
    profiles = []
    for entry in body.get("profiles", []):
        profiles.append(
            ClinicProfile(
                name=entry["name"],
                enrolled=int(entry["enrolled"]),
                failures=entry.get("failures"),
                failure_rate=entry.get("failure_rate"),
                seed=int(entry.get("seed", 0)),
                period=entry.get("period", ""),
                reason_mix=entry.get("reason_mix") or dict(DEFAULT_REASON_MIX),
            )
        )
    options = {
        "positive_rates": tuple(body.get("positive_rates", (0.3, 0.5))),
        "executors": int(body.get("executors", 8)),
        "signal_seed": int(body.get("signal_seed", 0)),
    }
    return profiles, options
