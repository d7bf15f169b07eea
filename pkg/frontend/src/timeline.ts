/** Humanize event records for the run-detail timeline. */

import { EventView } from "./api.js";

function payloadStr(payload: Record<string, unknown>, key: string): string {
  const v = payload[key];
  return v === undefined || v === null ? "" : String(v);
}

export function describeEvent(e: EventView): string {
  const p = e.payload;
  switch (e.kind) {
    case "RunStarted":
      return `run started (${payloadStr(p, "slug")})`;
    case "NodeEntered":
      return `entered node ${e.node_id} [${payloadStr(p, "type")}] @${payloadStr(p, "lane")}`;
    case "BoundaryOutcome":
      return p["ok"]
        ? `boundary outcome ok at ${e.node_id}`
        : `boundary attempt ${payloadStr(p, "attempt")} failed at ${e.node_id}: ${payloadStr(p, "error")}`;
    case "DecisionEvaluated":
      return `decision at ${e.node_id}: ${payloadStr(p, "branch")}${p["external"] ? " (external)" : ""}`;
    case "GuardChecked":
      return `${payloadStr(p, "which")} guard ${p["ok"] ? "held" : "VIOLATED"} at ${e.node_id}`;
    case "GuardViolated":
      return `guard violation (${payloadStr(p, "which")}) at ${e.node_id}`;
    case "ListenerArmed":
      return `waiting at ${e.node_id} (${payloadStr(p, "kind")})`;
    case "SignalReceived": {
      const matched = p["matched"] ? "" : " (not matching, audit only)";
      const actor = payloadStr(p, "actor");
      const what = payloadStr(p, "choice") || payloadStr(p, "tag") || payloadStr(p, "signal");
      return `signal ${what}${actor ? " by " + actor : ""}${matched}`;
    }
    case "TimerFired":
      return `timer fired at ${e.node_id}`;
    case "NodeCompleted":
      return `completed node ${e.node_id}`;
    case "RunCompleted":
      return "run completed";
    case "RunErrored":
      return `run errored: ${payloadStr(p, "reason")} ${payloadStr(p, "message") || payloadStr(p, "detail")}`.trim();
    case "CheckpointTaken":
      return "checkpoint";
    default:
      return e.kind;
  }
}

export function statusBadge(status: string): string {
  const symbol: Record<string, string> = {
    running: "▶",
    waiting: "⏸",
    paused: "⚠",
    completed: "✓",
    errored: "✗",
  };
  return `${symbol[status] ?? "?"} ${status}`;
}
