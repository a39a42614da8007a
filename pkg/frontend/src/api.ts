/** Typed client for the workbench HTTP API. The console performs no analysis
 * of its own: every number it shows round-trips from these payloads. */

export interface ProvenanceEntry {
  numeral: string;
  field: string;
  value: unknown;
}

export interface WorkflowStep {
  description: string;
  tool_name: string;
  status: "pending" | "running" | "done" | "failed";
  result_ref: string | null;
}

export interface ArtifactStatus {
  diff_position: number;
  timestamp: number;
  fresh: boolean;
}

export interface SessionSummary {
  session_id: string;
  case: string;
  case_checksum: string;
  version: number;
  diff_count: number;
  diff_digest: string;
  artifacts: Record<string, ArtifactStatus>;
  workflow: { plan_id: string; steps: WorkflowStep[] };
}

export interface ChatReply {
  response: string;
  ok: boolean;
  provenance: ProvenanceEntry[];
  workflow: { plan_id: string; steps: WorkflowStep[] };
  payloads: Record<string, Record<string, unknown>>;
  summary: SessionSummary;
}

export interface SolutionReply {
  solution: Record<string, unknown> & {
    objective_cost: number;
    losses_mw: number;
    min_voltage_pu: number;
    max_voltage_pu: number;
    case_name: string;
    iterations: number;
  };
  fresh: boolean;
  stale_diffs: unknown[];
}

export interface RankingEntry {
  contingency: {
    outage_kind: string;
    element_index: number;
    branch_index: number;
    label: string;
  };
  score: number;
  evidence: {
    n_overloads: number;
    worst_overload_excess_percent: number;
    worst_voltage_deficit_pu: number;
    curtailment_mw: number;
    diverged: boolean;
  };
  justification: string;
  overloaded_branches: { branch_index: number; label: string; loading_percent: number }[];
  low_voltage_buses: { bus_id: number; vm_pu: number }[];
  status: string | null;
}

export interface ContingencyReply {
  case_name: string;
  scope: string;
  summary: { secure: number; violations: number; islanding: number; diverged: number };
  ranking: RankingEntry[];
  result_count: number;
  fresh: boolean;
}

/** Thrown when the session already has a turn in flight (HTTP 409). */
export class TurnInProgressError extends Error {
  constructor() {
    super("a turn is already in progress for this session");
  }
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (resp.status === 409) throw new TurnInProgressError();
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, (body && body.detail) || resp.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "", private fetchFn: typeof fetch = fetch) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async createSession(caseName: string): Promise<{ session_id: string; summary: SessionSummary; cases: string[] }> {
    const resp = await this.fetchFn(this.url("/api/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ case_name: caseName }),
    });
    return expectJson(resp);
  }

  async summary(sessionId: string): Promise<SessionSummary> {
    return expectJson(await this.fetchFn(this.url(`/api/sessions/${sessionId}`)));
  }

  async chat(sessionId: string, utterance: string): Promise<ChatReply> {
    const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/chat`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ utterance }),
    });
    return expectJson(resp);
  }

  async solution(sessionId: string): Promise<SolutionReply | null> {
    const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/solution`));
    if (resp.status === 404) return null;
    return expectJson(resp);
  }

  async contingencies(sessionId: string, top = 5): Promise<ContingencyReply | null> {
    const resp = await this.fetchFn(
      this.url(`/api/sessions/${sessionId}/contingencies?top=${top}`));
    if (resp.status === 404) return null;
    return expectJson(resp);
  }
}
