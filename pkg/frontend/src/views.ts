/** DOM builders for the dashboard views. State lives server-side; these
 * render whatever the latest poll returned. */

import {
  Client,
  CohortMember,
  DiagramGraph,
  DiagramSummary,
  MetricSample,
  RunDetail,
  RunSummary,
  TaskItem,
} from "./api.js";
import { renderChart } from "./chart.js";
import { isSubmitting, submitTask } from "./inbox.js";
import { renderSchematic } from "./schematic.js";
import { describeEvent, statusBadge } from "./timeline.js";

export function el(tag: string, attrs: Record<string, string> = {}, ...children: (Node | string)[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function runsListView(runs: RunSummary[], onOpen: (id: string) => void): HTMLElement {
  const table = el("table", { class: "grid" });
  table.append(
    el("tr", {}, el("th", {}, "run"), el("th", {}, "workflow"), el("th", {}, "status"),
      el("th", {}, "at node"), el("th", {}, "events")),
  );
  for (const run of runs) {
    const link = el("a", { href: `#run/${run.run_id}` }, run.run_id);
    link.addEventListener("click", () => onOpen(run.run_id));
    table.append(
      el("tr", {},
        el("td", {}, link),
        el("td", {}, run.slug),
        el("td", { class: `status-${run.status}` }, statusBadge(run.status)),
        el("td", {}, run.current_node ?? "—"),
        el("td", {}, String(run.events))),
    );
  }
  if (runs.length === 0) {
    table.append(el("tr", {}, el("td", { colspan: "5", class: "empty" }, "no runs yet")));
  }
  return table;
}

export function runDetailView(detail: RunDetail, graph: DiagramGraph | null): HTMLElement {
  const root = el("div", { class: "run-detail" });
  root.append(
    el("h2", {}, `${detail.slug} — ${detail.run_id}`),
    el("p", { class: `status-${detail.status}` },
      statusBadge(detail.status),
      detail.current_node ? ` at ${detail.current_node.id} (${detail.current_node.label})` : ""),
  );
  if (graph !== null) {
    const holder = el("div", { class: "schematic-holder" });
    holder.innerHTML = renderSchematic(graph, detail.current_node?.id ?? null);
    root.append(holder);
  }
  if (detail.return !== null && detail.return !== undefined) {
    root.append(el("p", {}, `returned: ${JSON.stringify(detail.return)}`));
  }
  if (detail.error) {
    root.append(el("p", { class: "error" }, `error: ${JSON.stringify(detail.error)}`));
  }
  const list = el("ol", { class: "timeline" });
  for (const e of detail.timeline) {
    list.append(el("li", { class: `ev-${e.kind}` }, `${e.seq}. ${describeEvent(e)}`));
  }
  root.append(el("h3", {}, "timeline"), list);
  return root;
}

export function inboxView(
  client: Client,
  tasks: TaskItem[],
  actor: () => string,
  refresh: () => void,
): HTMLElement {
  const root = el("div", { class: "inbox" });
  if (tasks.length === 0) {
    root.append(el("p", { class: "empty" }, "inbox empty — nothing waiting on a person"));
    return root;
  }
  for (const task of tasks) {
    const card = el("div", { class: "task-card" });
    const question = task.decision_label ?? task.label;
    card.append(
      el("h3", {}, question),
      el("p", { class: "muted" },
        `run ${task.run_id} · node ${task.decision_node ?? task.node_id} · ${task.type}`),
    );
    if (Object.keys(task.bindings ?? {}).length > 0) {
      card.append(
        el("p", { class: "muted" },
          Object.entries(task.bindings).map(([lane, c]) => `${lane}: ${c}`).join(" · ")),
      );
    }
    const row = el("div", { class: "choices" });
    for (const choice of task.choices) {
      const button = el("button", {}, choice) as HTMLButtonElement;
      button.addEventListener("click", async () => {
        const name = actor();
        if (!name) {
          alert("set an operator name first");
          return;
        }
        if (isSubmitting(task)) return;
        button.disabled = true; // optimistic-disable until the server answers
        try {
          await submitTask(client, task, choice, name);
        } finally {
          button.disabled = false;
          refresh();
        }
      });
      row.append(button);
    }
    card.append(row);
    root.append(card);
  }
  return root;
}

export function cohortView(slug: string, members: CohortMember[]): HTMLElement {
  const root = el("div", {});
  root.append(el("h3", {}, `${slug} — ${members.length} member${members.length === 1 ? "" : "s"}`));
  const table = el("table", { class: "grid" });
  table.append(el("tr", {}, el("th", {}, "id"), el("th", {}, "type"), el("th", {}, "tags"), el("th", {}, "fields")));
  for (const m of members) {
    table.append(
      el("tr", {},
        el("td", {}, m.id),
        el("td", {}, m.ext_type ?? m.resource_type),
        el("td", {}, m.tags.map((t) => `:${t}`).join(" ")),
        el("td", { class: "muted" }, JSON.stringify(m.fields))),
    );
  }
  if (members.length === 0) {
    table.append(el("tr", {}, el("td", { colspan: "4", class: "empty" }, "empty cohort")));
  }
  root.append(table);
  return root;
}

export function metricView(slug: string, samples: MetricSample[], now: number): HTMLElement {
  const root = el("div", { class: "metric" });
  root.append(el("h3", {}, slug));
  const holder = el("div", {});
  holder.innerHTML = renderChart(samples, now);
  root.append(holder);
  return root;
}

export function diagramsView(diagrams: DiagramSummary[]): HTMLElement {
  const table = el("table", { class: "grid" });
  table.append(el("tr", {}, el("th", {}, "workflow"), el("th", {}, "nodes"), el("th", {}, "verified")));
  for (const d of diagrams) {
    table.append(
      el("tr", {},
        el("td", {}, el("a", { href: `#diagram/${d.slug}` }, d.name)),
        el("td", {}, String(d.nodes)),
        el("td", {}, d.admitted ? `✓ ${d.automation_id}` : "runtime only")),
    );
  }
  return table;
}

export function staleBanner(text: string): HTMLElement {
  return el("div", { class: "stale-banner" }, text);
}
