/**
 * Fetch wrapper over the orchestrator REST routes.
 *
 * Pure client: no domain math happens here. Errors carry the server's
 * code/message verbatim so pages can surface them unchanged.
 */

import type {
  AgentRow,
  EvaluationView,
  EvaluationResult,
  HealthInfo,
  ModelDetail,
  ModelRow,
  SummaryRow,
  TraceView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type AgentQuery = {
  framework?: string;
  constraint?: string;
  arch?: string;
  accelerator?: string;
  min_memory_gb?: number;
};

export type HistoryQuery = {
  model_key?: string;
  agent_id?: string;
  status?: string;
  framework_constraint?: string;
};

function queryString(params: Record<string, string | number | undefined>): string {
  const q = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined && value !== "") {
      q.set(key, String(value));
    }
  }
  const s = q.toString();
  return s ? `?${s}` : "";
}

export class EvalGridClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: string): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : {},
      body,
    });
    const text = await resp.text();
    let payload: unknown;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      throw new ApiError(resp.status, "BadResponse", text.slice(0, 200));
    }
    if (!resp.ok) {
      const err = payload as { code?: string; message?: string };
      throw new ApiError(resp.status, err?.code ?? "HttpError",
        err?.message ?? `HTTP ${resp.status}`);
    }
    return payload as T;
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/health");
  }

  models(): Promise<ModelRow[]> {
    return this.request("GET", "/models");
  }

  model(key: string): Promise<ModelDetail> {
    return this.request("GET", `/models/${key}`);
  }

  agents(query: AgentQuery = {}): Promise<AgentRow[]> {
    return this.request("GET", `/agents${queryString(query)}`);
  }

  evaluations(query: HistoryQuery = {}): Promise<EvaluationResult[]> {
    return this.request("GET", `/evaluations${queryString(query)}`);
  }

  evaluation(id: string): Promise<EvaluationView> {
    return this.request("GET", `/evaluations/${id}`);
  }

  summary(id: string): Promise<SummaryRow[]> {
    return this.request("GET", `/evaluations/${id}/summary`);
  }

  trace(id: string): Promise<TraceView> {
    return this.request("GET", `/traces/${id}`);
  }

  publishManifest(manifestText: string): Promise<{ key: string }> {
    return this.request("POST", "/manifests",
      JSON.stringify({ manifest_text: manifestText }));
  }

  /** Submit a pre-serialized request body; bytes go out untouched. */
  submitRaw(canonicalBody: string): Promise<{ evaluation_id: string }> {
    return this.request("POST", "/evaluations", canonicalBody);
  }

  /** Poll until no agents are pending; same backoff curve as the CLI. */
  async pollEvaluation(id: string, timeoutMs = 60_000): Promise<EvaluationView> {
    const deadline = Date.now() + timeoutMs;
    let delay = 50;
    for (;;) {
      const view = await this.evaluation(id);
      if (view.pending_agents.length === 0 || Date.now() >= deadline) {
        return view;
      }
      await new Promise((resolve) => setTimeout(resolve, delay));
      delay = Math.min(delay * 2, 1000);
    }
  }
}
