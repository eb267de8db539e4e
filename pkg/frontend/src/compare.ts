/**
 * Side-by-side comparison of two evaluations.
 *
 * Mirrors the CLI's compare semantics exactly: take the first successful
 * result of each evaluation, line inputs up by position, and flag rows
 * whose top-1 disagrees. The CLI output for the same pair is the reference
 * in tests, so any drift here is a bug.
 */

import type { EvaluationResult, EvaluationView } from "./types.js";

export type Top1 = string | number | null;

export interface CompareRow {
  input: number;
  a: Top1;
  b: Top1;
  flipped: boolean;
}

export interface CompareReport {
  evaluation_a: string;
  evaluation_b: string;
  agent_a: string;
  agent_b: string;
  inputs_compared: number;
  agreement_rate: number;
  rows: CompareRow[];
  flipped: CompareRow[];
}

export class CompareError extends Error {}

export function top1(result: EvaluationResult): Top1[] {
  return result.predictions.map((preds) => {
    const top = preds[0];
    if (top === undefined) {
      return null;
    }
    return top.label !== null ? top.label : top.index;
  });
}

export function compareEvaluations(
  viewA: EvaluationView,
  viewB: EvaluationView,
): CompareReport {
  const succeededA = viewA.results.filter((r) => r.status === "succeeded");
  const succeededB = viewB.results.filter((r) => r.status === "succeeded");
  const a = succeededA[0];
  const b = succeededB[0];
  if (a === undefined || b === undefined) {
    throw new CompareError("both evaluations need at least one successful result");
  }
  const topA = top1(a);
  const topB = top1(b);
  const count = Math.min(topA.length, topB.length);
  const rows: CompareRow[] = [];
  for (let i = 0; i < count; i++) {
    const left = topA[i] ?? null;
    const right = topB[i] ?? null;
    rows.push({ input: i, a: left, b: right, flipped: left !== right });
  }
  const agreements = rows.filter((r) => !r.flipped).length;
  return {
    evaluation_a: viewA.evaluation_id,
    evaluation_b: viewB.evaluation_id,
    agent_a: a.agent_id,
    agent_b: b.agent_id,
    inputs_compared: count,
    agreement_rate: count ? agreements / count : 1.0,
    rows,
    flipped: rows.filter((r) => r.flipped),
  };
}
