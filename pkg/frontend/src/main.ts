/** App bootstrap: hash routing, pollers per view, settings bar. */

import { Client, DiagramGraph } from "./api.js";
import { loadSettings, saveSettings, Settings } from "./config.js";
import { Poller } from "./poller.js";
import { renderSchematic } from "./schematic.js";
import {
  cohortView,
  diagramsView,
  el,
  inboxView,
  metricView,
  runDetailView,
  runsListView,
  staleBanner,
} from "./views.js";

const settings: Settings = loadSettings();
let client = new Client(settings.baseUrl, settings.workspace);
const graphCache = new Map<string, DiagramGraph>();

const app = document.getElementById("app") ?? document.body;
const content = el("div", { id: "content" });
let poller: Poller | null = null;

function settingsBar(): HTMLElement {
  const bar = el("div", { class: "settings-bar" });
  const base = el("input", { value: settings.baseUrl, size: "28", title: "service base URL" }) as HTMLInputElement;
  const ws = el("input", { value: settings.workspace, size: "10", title: "workspace" }) as HTMLInputElement;
  const actor = el("input", {
    value: settings.actor,
    size: "14",
    placeholder: "operator name",
    title: "recorded on every decision you submit",
  }) as HTMLInputElement;
  for (const [input, key] of [[base, "baseUrl"], [ws, "workspace"], [actor, "actor"]] as const) {
    input.addEventListener("change", () => {
      settings[key] = input.value;
      saveSettings(settings);
      client = new Client(settings.baseUrl, settings.workspace);
      graphCache.clear();
      route();
    });
  }
  bar.append(
    el("span", { class: "brand" }, "graphflow"),
    el("nav", {},
      el("a", { href: "#runs" }, "runs"), " ",
      el("a", { href: "#tasks" }, "inbox"), " ",
      el("a", { href: "#diagrams" }, "workflows"), " ",
      el("a", { href: "#cohorts" }, "cohorts"), " ",
      el("a", { href: "#metrics" }, "metrics")),
    el("span", { class: "spacer" }),
    el("label", {}, "api ", base),
    el("label", {}, "workspace ", ws),
    el("label", {}, "operator ", actor),
  );
  return bar;
}

function setView(render: () => Promise<HTMLElement>): void {
  poller?.stop();
  poller = new Poller(async () => {
    const view = await render();
    content.replaceChildren(view);
    const banner = document.getElementById("banner");
    if (banner) banner.replaceChildren();
  });
  const bannerTick = () => {
    const banner = document.getElementById("banner");
    if (banner && poller?.isStale()) {
      banner.replaceChildren(staleBanner(poller.staleText()));
    }
  };
  setInterval(bannerTick, 1000);
  poller.start();
}

async function diagramFor(slug: string): Promise<DiagramGraph | null> {
  const cached = graphCache.get(slug);
  if (cached) return cached;
  try {
    const graph = await client.diagram(slug);
    graphCache.set(slug, graph);
    return graph;
  } catch {
    return null;
  }
}

function route(): void {
  const hash = window.location.hash.replace(/^#/, "") || "runs";
  const [page, arg] = hash.split("/", 2);
  if (page === "run" && arg) {
    setView(async () => {
      const detail = await client.runDetail(arg);
      const graph = await diagramFor(detail.slug);
      return runDetailView(detail, graph);
    });
  } else if (page === "tasks") {
    setView(async () => {
      const { tasks } = await client.tasks();
      return inboxView(client, tasks, () => settings.actor, () => void poller?.poll());
    });
  } else if (page === "diagrams") {
    setView(async () => diagramsView((await client.listDiagrams()).diagrams));
  } else if (page === "diagram" && arg) {
    setView(async () => {
      const graph = await client.diagram(arg);
      const holder = el("div", { class: "schematic-holder" });
      const title = el("h2", {}, graph.name);
      const svg = el("div", {});
      svg.innerHTML = renderSchematic(graph);
      holder.append(title, svg);
      return holder;
    });
  } else if (page === "cohorts") {
    setView(async () => {
      const root = el("div", {});
      if (arg) {
        const res = await client.cohort(arg);
        root.append(cohortView(arg, res.cohort));
      } else {
        root.append(el("p", { class: "empty" }, "open #cohorts/<query-slug> to browse a cohort"));
      }
      return root;
    });
  } else if (page === "metrics" && arg) {
    setView(async () => {
      const res = await client.metricSamples(arg);
      return metricView(arg, res.samples, Date.now() / 1000);
    });
  } else if (page === "metrics") {
    setView(async () =>
      el("p", { class: "empty" }, "open #metrics/<metric-slug> to chart its samples"),
    );
  } else {
    setView(async () => {
      const { runs } = await client.listRuns();
      return runsListView(runs, () => undefined);
    });
  }
}

app.append(settingsBar(), el("div", { id: "banner" }), content);
window.addEventListener("hashchange", route);
route();
