/**
 * The evaluation form model and its serialization.
 *
 * One form can fan out into several submissions (one per batch size), and
 * each serialized body must be byte-equal to what the CLI would send for
 * the same choices. That parity is pinned by a fixture test, so any change
 * here has to move in lockstep with the server's request schema.
 */

import { FloatValue, stableStringify } from "./canonical.js";
import type { EvaluationRequestBody, TraceLevelName } from "./types.js";

export interface EvaluationForm {
  /** Published manifest key; empty when sending an edited manifest inline. */
  modelKey: string;
  /** Pipeline-step override: the manifest text submitted instead of a key. */
  manifestText: string;
  /** Uploaded inputs, already base64-encoded. */
  inputsB64: string[];
  batchSizes: number[];
  topK: number;
  dispatch: "one" | "all";
  frameworkConstraint: string;
  arch: string | null;
  accelerator: string | null;
  minMemoryGb: number | null;
  traceLevel: TraceLevelName;
  pricePerHour: number | null;
}

export function defaultForm(): EvaluationForm {
  return {
    modelKey: "",
    manifestText: "",
    inputsB64: [],
    batchSizes: [1],
    topK: 5,
    dispatch: "one",
    frameworkConstraint: "",
    arch: null,
    accelerator: null,
    minMemoryGb: null,
    traceLevel: "FRAMEWORK",
    pricePerHour: null,
  };
}

export class FormError extends Error {}

export function checkForm(form: EvaluationForm): void {
  if (!form.modelKey && !form.manifestText) {
    throw new FormError("pick a model or supply a manifest");
  }
  if (form.inputsB64.length === 0) {
    throw new FormError("at least one input is required");
  }
  if (form.batchSizes.length === 0 ||
      form.batchSizes.some((b) => !Number.isInteger(b) || b < 1)) {
    throw new FormError(`bad batch sizes: ${form.batchSizes.join(",")}`);
  }
}

/** The request object for one batch size, field-for-field per the schema. */
export function requestBody(form: EvaluationForm, batchSize: number): EvaluationRequestBody {
  return {
    model_key: form.modelKey,
    manifest_text: form.manifestText,
    inputs_b64: [...form.inputsB64],
    batch_size: batchSize,
    top_k: form.topK,
    dispatch: form.dispatch,
    framework_constraint: form.frameworkConstraint,
    arch: form.arch,
    accelerator: form.accelerator,
    min_memory_gb: form.minMemoryGb,
    trace_granularity: form.traceLevel,
    price_per_hour: form.pricePerHour,
    metadata: {},
  };
}

/** Canonical bodies ready to POST, one per batch size. */
export function serializeForm(form: EvaluationForm): string[] {
  checkForm(form);
  return form.batchSizes.map((size) => {
    const body = requestBody(form, size) as Record<string, unknown>;
    if (form.minMemoryGb !== null) {
      body["min_memory_gb"] = new FloatValue(form.minMemoryGb);
    }
    if (form.pricePerHour !== null) {
      body["price_per_hour"] = new FloatValue(form.pricePerHour);
    }
    return stableStringify(body);
  });
}

/**
 * Submit stays disabled until a model is chosen and at least one registered
 * agent can actually run it.
 */
export function canSubmit(form: EvaluationForm, resolvableAgents: number): boolean {
  return (form.modelKey !== "" || form.manifestText !== "") &&
    form.inputsB64.length > 0 &&
    resolvableAgents >= 1;
}
