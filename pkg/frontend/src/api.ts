/**
 * Typed client for the workflow service. The dashboard is read-only except
 * for two mutations: posting a signal to a run and starting a run.
 */

export interface RunSummary {
  run_id: string;
  slug: string;
  status: string;
  current_node: string | null;
  events: number;
}

export interface NodeRef {
  id: string;
  label: string;
  type: string;
}

export interface EventView {
  seq: number;
  at: number;
  kind: string;
  node_id: string | null;
  payload: Record<string, unknown>;
}

export interface RunDetail {
  run_id: string;
  workspace: string;
  slug: string;
  status: string;
  current_node: NodeRef | null;
  current_lane: string | null;
  state: Record<string, unknown>;
  return: unknown;
  error: Record<string, unknown> | null;
  trace: string[];
  timeline: EventView[];
}

export interface TaskItem {
  run_id: string;
  node_id: string;
  label: string;
  type: string;
  choices: string[];
  bindings: Record<string, string>;
  resource?: string;
  await_tags?: string[];
  decision_node?: string;
  decision_label?: string;
  decision_tag?: string;
}

export interface LaneRef {
  slug: string;
  name: string;
}

export interface DiagramNode {
  id: string;
  type: string;
  label: string;
  lane: string;
  action: string | null;
}

export interface DiagramGraph {
  slug: string;
  name: string;
  lanes: LaneRef[];
  core_lanes: string[];
  nodes: DiagramNode[];
  edges: [string, string, string][];
  order: string[] | null;
  acyclic: boolean;
}

export interface DiagramSummary {
  slug: string;
  name: string;
  nodes: number;
  admitted: boolean;
  automation_id: string | null;
}

export interface MetricSample {
  at: number;
  value: number | null;
  cohort_size: number;
  skipped: number;
}

export interface CohortMember {
  id: string;
  resource_type: string;
  ext_type: string | null;
  tags: string[];
  fields: Record<string, unknown>;
}

export interface SignalBody {
  kind: "human-decision" | "tag-added" | "timer";
  actor: string;
  node_id?: string;
  choice?: string;
  tag?: string;
  resource?: string;
}

export interface StartRunBody {
  inputs?: Record<string, unknown>;
  bindings?: Record<string, string>;
  subject?: string | null;
  actor: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Client {
  constructor(
    public baseUrl: string,
    public workspace: string = "default",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const parsed = (await res.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // keep statusText
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  listRuns(status?: string): Promise<{ runs: RunSummary[] }> {
    const suffix = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.get(`/workspaces/${this.workspace}/runs${suffix}`);
  }

  runDetail(runId: string): Promise<RunDetail> {
    return this.get(`/runs/${encodeURIComponent(runId)}`);
  }

  runEvents(runId: string, fromSeq = 1): Promise<{ events: EventView[] }> {
    return this.get(`/runs/${encodeURIComponent(runId)}/events?from=${fromSeq}`);
  }

  tasks(assignee?: string): Promise<{ tasks: TaskItem[] }> {
    const suffix = assignee ? `?assignee=${encodeURIComponent(assignee)}` : "";
    return this.get(`/workspaces/${this.workspace}/tasks${suffix}`);
  }

  listDiagrams(): Promise<{ diagrams: DiagramSummary[] }> {
    return this.get(`/workspaces/${this.workspace}/diagrams`);
  }

  diagram(slug: string): Promise<DiagramGraph> {
    return this.get(`/workspaces/${this.workspace}/diagrams/${encodeURIComponent(slug)}`);
  }

  cohort(slug: string): Promise<{ query: string; cohort: CohortMember[] }> {
    return this.get(`/workspaces/${this.workspace}/queries/${encodeURIComponent(slug)}/cohort`);
  }

  metricSamples(slug: string, windowSeconds?: number): Promise<{ metric: string; samples: MetricSample[] }> {
    const suffix = windowSeconds !== undefined ? `?window=${windowSeconds}` : "";
    return this.get(`/workspaces/${this.workspace}/metrics/${encodeURIComponent(slug)}/samples${suffix}`);
  }

  // -- the only mutations the dashboard performs ---------------------------

  signal(runId: string, body: SignalBody): Promise<RunDetail> {
    return this.request("POST", `/runs/${encodeURIComponent(runId)}/signal`, body);
  }

  startRun(slug: string, body: StartRunBody): Promise<RunDetail> {
    return this.request(
      "POST",
      `/workspaces/${this.workspace}/diagrams/${encodeURIComponent(slug)}/runs`,
      body,
    );
  }
}
