/**
 * Payload shapes for the orchestrator REST API.
 *
 * Field sets mirror ../../schemas/rest_api.json; the schema conformance
 * tests on both sides keep these honest. Everything the dashboard renders
 * comes straight out of these objects.
 */

export type TraceLevelName =
  | "NONE"
  | "MODEL"
  | "FRAMEWORK"
  | "LAYER"
  | "LIBRARY"
  | "HARDWARE";

export const TRACE_LEVELS: readonly TraceLevelName[] = [
  "NONE", "MODEL", "FRAMEWORK", "LAYER", "LIBRARY", "HARDWARE",
];

/** Rank for lane ordering and level filters; matches the server enum. */
export function traceLevelRank(level: TraceLevelName): number {
  return TRACE_LEVELS.indexOf(level);
}

export interface HealthInfo {
  ok: boolean;
  role: string;
  rpc_endpoint: string;
}

export interface ModelRow {
  key: string;
  name: string;
  version: string;
  task: string;
  framework: string;
  framework_constraint: string;
  description: string;
}

export interface ModelDetail extends ModelRow {
  manifest_text: string;
}

export interface HardwareInfo {
  arch: string;
  accelerator: string;
  memory_gb: number;
  labels: string[];
}

export interface AgentRow {
  agent_id: string;
  framework: string;
  framework_version: string;
  hardware: HardwareInfo;
  endpoint: string;
}

export interface Prediction {
  index: number;
  probability: number;
  label: string | null;
}

export interface EvaluationResult {
  evaluation_id: string;
  agent_id: string;
  model_key: string;
  status: "succeeded" | "failed";
  error: { code: string; message: string } | null;
  predictions: Prediction[][];
  batch_size: number;
  batch_latencies: number[];
  input_count: number;
  container_image: string;
  trace_id: string;
  framework: string;
  framework_version: string;
  hardware: HardwareInfo | null;
  started_at: number;
  finished_at: number;
}

export interface EvaluationView {
  evaluation_id: string;
  status: "running" | "succeeded" | "failed";
  model_key: string;
  dispatch: string;
  results: EvaluationResult[];
  pending_agents: string[];
}

export interface SummaryRow {
  agent_id: string;
  batch_size: number;
  batch_count: number;
  input_count: number;
  mean_latency_ms: number;
  min_latency_ms: number;
  max_latency_ms: number;
  throughput_per_sec: number;
  price_per_hour: number | null;
  cost_per_million: number | null;
}

export interface Span {
  id: string;
  trace_id: string;
  parent_id: string | null;
  name: string;
  level: TraceLevelName;
  begin_us: number;
  end_us: number;
  tags: Record<string, string>;
}

export interface SpanNode {
  id: string;
  name: string;
  level: TraceLevelName;
  begin_us: number;
  end_us: number;
  duration_us: number;
  tags: Record<string, string>;
  children: SpanNode[];
}

export interface TraceView {
  trace_id: string;
  roots: SpanNode[];
  spans: Span[];
}

/** POST /evaluations body; key set fixed by the schema file. */
export type EvaluationRequestBody = {
  model_key: string;
  manifest_text: string;
  inputs_b64: string[];
  batch_size: number;
  top_k: number;
  dispatch: "one" | "all";
  framework_constraint: string;
  arch: string | null;
  accelerator: string | null;
  min_memory_gb: number | null;
  trace_granularity: TraceLevelName;
  price_per_hour: number | null;
  metadata: Record<string, unknown>;
};
