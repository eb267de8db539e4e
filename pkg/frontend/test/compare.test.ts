import { describe, expect, it } from "vitest";

import { CompareError, compareEvaluations, top1 } from "../src/compare.js";
import type { EvaluationResult, EvaluationView, Prediction } from "../src/types.js";

function pred(index: number, label: string | null): Prediction {
  return { index, probability: 0.9, label };
}

function result(agent: string, status: string,
                predictions: Prediction[][]): EvaluationResult {
  return {
    evaluation_id: "e", agent_id: agent, model_key: "m", status,
    error: status === "failed" ? { code: "PipelineError", message: "boom" } : null,
    predictions, batch_size: 1,
    batch_latencies: [0.001], input_count: predictions.length,
    container_image: "img", trace_id: null, framework: "refnn",
    framework_version: "1.12.0", hardware: {
      arch: "amd64", accelerator: "cpu", memory_gb: 8, labels: [],
    },
    started_at: 1.0, finished_at: 2.0,
  };
}

function view(id: string, results: EvaluationResult[]): EvaluationView {
  return {
    evaluation_id: id, status: "succeeded", model_key: "m",
    dispatch: "one", results, pending_agents: [],
  };
}

describe("top1", () => {
  it("prefers the label when present", () => {
    expect(top1(result("a", "succeeded", [[pred(3, "cat")]]))).toEqual(["cat"]);
  });

  it("falls back to the class index without labels", () => {
    expect(top1(result("a", "succeeded", [[pred(3, null)]]))).toEqual([3]);
  });

  it("yields null for inputs with no predictions", () => {
    expect(top1(result("a", "succeeded", [[]]))).toEqual([null]);
  });
});

describe("compareEvaluations", () => {
  it("flags per-input disagreements", () => {
    const a = view("ev-a", [result("agent-1", "succeeded",
      [[pred(0, "red")], [pred(2, "blue")], [pred(1, "green")]])]);
    const b = view("ev-b", [result("agent-2", "succeeded",
      [[pred(2, "blue")], [pred(2, "blue")], [pred(0, "red")]])]);
    const report = compareEvaluations(a, b);
    expect(report.evaluation_a).toBe("ev-a");
    expect(report.agent_b).toBe("agent-2");
    expect(report.inputs_compared).toBe(3);
    expect(report.rows.map((r) => r.flipped)).toEqual([true, false, true]);
    expect(report.flipped).toHaveLength(2);
    expect(report.agreement_rate).toBeCloseTo(1 / 3, 12);
  });

  it("uses the first successful result on each side", () => {
    const a = view("ev-a", [
      result("agent-bad", "failed", []),
      result("agent-ok", "succeeded", [[pred(0, "red")]]),
    ]);
    const b = view("ev-b", [result("agent-2", "succeeded", [[pred(0, "red")]])]);
    const report = compareEvaluations(a, b);
    expect(report.agent_a).toBe("agent-ok");
    expect(report.agreement_rate).toBe(1);
  });

  it("compares only the overlapping input range", () => {
    const a = view("ev-a", [result("a1", "succeeded",
      [[pred(0, "red")], [pred(1, "green")]])]);
    const b = view("ev-b", [result("b1", "succeeded", [[pred(0, "red")]])]);
    expect(compareEvaluations(a, b).inputs_compared).toBe(1);
  });

  it("treats matching empty predictions as agreement", () => {
    const a = view("ev-a", [result("a1", "succeeded", [[]])]);
    const b = view("ev-b", [result("b1", "succeeded", [[]])]);
    const report = compareEvaluations(a, b);
    expect(report.rows[0]?.flipped).toBe(false);
    expect(report.agreement_rate).toBe(1);
  });

  it("reports full agreement over zero inputs", () => {
    const a = view("ev-a", [result("a1", "succeeded", [])]);
    const b = view("ev-b", [result("b1", "succeeded", [])]);
    expect(compareEvaluations(a, b).agreement_rate).toBe(1.0);
  });

  it("refuses when either side has no successful result", () => {
    const ok = view("ev-a", [result("a1", "succeeded", [[pred(0, "red")]])]);
    const bad = view("ev-b", [result("b1", "failed", [])]);
    expect(() => compareEvaluations(ok, bad)).toThrow(CompareError);
    expect(() => compareEvaluations(bad, ok)).toThrow(CompareError);
  });
});
