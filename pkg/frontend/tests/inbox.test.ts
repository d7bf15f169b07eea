/**
 * Task-inbox loop: a care-pathway run waiting on its screening result
 * surfaces the downstream "Further testing recommended?" decision; answering
 * yes tags the patient and resumes the run to the assessment order. The
 * fake server reproduces the service's task/signal semantics.
 */

import { describe, expect, it } from "vitest";

import { Client, RunDetail, TaskItem } from "../src/api.js";
import { planSubmission, submitTask } from "../src/inbox.js";

interface FakeServer {
  fetchFn: typeof fetch;
  signals: { kind: string; tag?: string; choice?: string; actor?: string }[];
  run: { status: string; cursor: string | null; trace: string[] };
}

function carePathwayServer(): FakeServer {
  const run = { status: "waiting", cursor: "3", trace: ["1", "2", "3"] };
  const signals: FakeServer["signals"] = [];
  const tags = new Set<string>();

  const task: TaskItem = {
    run_id: "r1",
    node_id: "3",
    label: "Cognitive Screening Result",
    type: "wait",
    choices: ["yes", "no"],
    bindings: { patient: "p1", provider: "prov-1" },
    resource: "p1",
    await_tags: ["cognitive-screening-completed"],
    decision_node: "4",
    decision_label: "Further testing recommended?",
    decision_tag: "cognitive-screening-positive",
  };

  const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    if (path.endsWith("/tasks")) {
      return new Response(JSON.stringify({ tasks: run.status === "waiting" ? [task] : [] }));
    }
    if (path.endsWith("/signal") && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as Record<string, string>;
      signals.push({ kind: body.kind!, tag: body.tag, choice: body.choice, actor: body.actor });
      if (body.kind === "tag-added" && body.tag) {
        tags.add(body.tag);
        if (tags.has("cognitive-screening-completed")) {
          // Wait satisfied: decision 4 evaluates the positive tag.
          if (tags.has("cognitive-screening-positive")) {
            run.status = "waiting";
            run.cursor = "6";
            run.trace = ["1", "2", "3", "4", "5", "6"];
          } else {
            run.status = "completed";
            run.cursor = null;
            run.trace = ["1", "2", "3", "4"];
          }
        }
      }
      const detail: Partial<RunDetail> = {
        run_id: "r1",
        status: run.status,
        trace: run.trace,
      };
      return new Response(JSON.stringify(detail));
    }
    throw new Error(`unexpected request ${path}`);
  }) as typeof fetch;

  return { fetchFn, signals, run };
}

describe("task inbox loop", () => {
  it("surfaces the node-4 decision for a run waiting at node 3", async () => {
    const server = carePathwayServer();
    const client = new Client("http://api", "default", server.fetchFn);
    const { tasks } = await client.tasks();
    expect(tasks).toHaveLength(1);
    expect(tasks[0]!.decision_node).toBe("4");
    expect(tasks[0]!.decision_label).toBe("Further testing recommended?");
    expect(tasks[0]!.choices).toContain("yes");
  });

  it("submitting yes resumes the run past node 4 to node 5", async () => {
    const server = carePathwayServer();
    const client = new Client("http://api", "default", server.fetchFn);
    const { tasks } = await client.tasks();
    await submitTask(client, tasks[0]!, "yes", "dr-a");
    expect(server.run.trace).toContain("5");
    // Every signal carried the operator's actor string.
    expect(server.signals.length).toBeGreaterThan(0);
    for (const s of server.signals) {
      expect(s.actor).toBe("dr-a");
    }
    expect(server.signals.map((s) => s.tag)).toEqual([
      "cognitive-screening-positive",
      "cognitive-screening-completed",
    ]);
  });

  it("submitting no completes the run at the decision", async () => {
    const server = carePathwayServer();
    const client = new Client("http://api", "default", server.fetchFn);
    const { tasks } = await client.tasks();
    await submitTask(client, tasks[0]!, "no", "dr-b");
    expect(server.run.status).toBe("completed");
    expect(server.signals.map((s) => s.tag)).toEqual(["cognitive-screening-completed"]);
  });

  it("plans exactly one POST for plain human decisions", () => {
    const task: TaskItem = {
      run_id: "r2",
      node_id: "6",
      label: "Proctor Cognitive Assessment",
      type: "meeting",
      choices: ["proceed"],
      bindings: {},
    };
    const plan = planSubmission(task, "proceed");
    expect(plan.kind).toBe("human-decision");
    expect(plan.posts).toHaveLength(1);
  });

  it("guards against double submission", async () => {
    let resolveFirst: (() => void) | null = null;
    const calls: string[] = [];
    const fetchFn = (async (url: RequestInfo | URL) => {
      calls.push(String(url));
      await new Promise<void>((resolve) => {
        resolveFirst = resolve;
      });
      return new Response(JSON.stringify({ status: "waiting" }));
    }) as typeof fetch;
    const client = new Client("http://api", "default", fetchFn);
    const task: TaskItem = {
      run_id: "r3",
      node_id: "4",
      label: "Approve?",
      type: "decision",
      choices: ["yes", "no"],
      bindings: {},
    };
    const first = submitTask(client, task, "yes", "coo");
    const second = submitTask(client, task, "yes", "coo"); // swallowed
    await Promise.resolve();
    expect(calls).toHaveLength(1);
    resolveFirst!();
    await Promise.all([first, second]);
    expect(calls).toHaveLength(1);
  });
});
