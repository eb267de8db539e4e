/**
 * Dashboard single-page app.
 *
 * Served statically by the orchestrator; everything it shows comes from the
 * REST API via EvalGridClient. Pages: model catalog, live agents, the
 * evaluation form, result/history views, trace timelines, and a side-by-side
 * comparison view. Domain logic stays in form/compare/timeline modules so
 * it is testable without a browser.
 */

import { ApiError, EvalGridClient } from "./api.js";
import { compareEvaluations } from "./compare.js";
import { canSubmit, defaultForm, serializeForm, type EvaluationForm } from "./form.js";
import { allSpans, layoutTimeline, toPixels, type Viewport } from "./timeline.js";
import type {
  AgentRow,
  EvaluationResult,
  EvaluationView,
  ModelRow,
  TraceLevelName,
} from "./types.js";
import { TRACE_LEVELS } from "./types.js";

const client = new EvalGridClient(window.location.origin);

// --- tiny DOM helpers --------------------------------------------------------

type Child = Node | string | null | undefined;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

function table(headers: string[], rows: Child[][]): HTMLTableElement {
  const head = el("tr", {}, ...headers.map((h) => el("th", {}, h)));
  const body = rows.map((cells) =>
    el("tr", {}, ...cells.map((c) => el("td", {}, c))));
  return el("table", { class: "grid" }, el("thead", {}, head),
    el("tbody", {}, ...body));
}

function badge(text: string): HTMLElement {
  return el("span", { class: "badge" }, text);
}

function link(href: string, text: string): HTMLElement {
  return el("a", { href }, text);
}

function errorBox(err: unknown): HTMLElement {
  // API errors surface verbatim, status code and all
  if (err instanceof ApiError) {
    return el("div", { class: "error" }, `${err.status} ${err.code}: ${err.message}`);
  }
  return el("div", { class: "error" }, String(err));
}

const root = (): HTMLElement => {
  const node = document.getElementById("app");
  if (!node) throw new Error("missing #app mount point");
  return node;
};

function show(...children: Child[]): void {
  const mount = root();
  mount.replaceChildren();
  for (const child of children) {
    if (child) mount.append(child instanceof Node ? child : document.createTextNode(child));
  }
}

// --- pages ---------------------------------------------------------------------

async function modelsPage(): Promise<void> {
  const models = await client.models();
  show(
    el("h2", {}, "Models"),
    table(
      ["key", "name", "version", "task", "framework", "description", ""],
      models.map((m: ModelRow) => [
        link(`#/models/${m.key}`, m.key),
        m.name, m.version, m.task,
        `${m.framework} ${m.framework_constraint}`.trim(),
        m.description,
        link(`#/evaluate?model=${encodeURIComponent(m.key)}`, "evaluate"),
      ])),
  );
}

async function modelPage(key: string): Promise<void> {
  const detail = await client.model(key);
  show(
    el("h2", {}, `Model ${detail.key}`),
    el("p", {}, `${detail.task} on ${detail.framework} ${detail.framework_constraint}`),
    el("p", {}, detail.description),
    el("pre", { class: "manifest" }, detail.manifest_text),
    link(`#/evaluate?model=${encodeURIComponent(detail.key)}`, "evaluate this model"),
  );
}

async function agentsPage(): Promise<void> {
  const agents = await client.agents();
  show(
    el("h2", {}, "Agents"),
    table(
      ["agent", "framework", "version", "hardware", "memory", "labels", "endpoint"],
      agents.map((a: AgentRow) => [
        a.agent_id, a.framework, a.framework_version,
        el("span", {}, badge(a.hardware.arch), " ", badge(a.hardware.accelerator)),
        `${a.hardware.memory_gb} GB`,
        a.hardware.labels.join(", "),
        a.endpoint,
      ])),
  );
}

function readFileAsB64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onerror = () => reject(reader.error);
    reader.onload = () => {
      const url = String(reader.result);       // data:...;base64,<payload>
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.readAsDataURL(file);
  });
}

async function evaluatePage(params: URLSearchParams): Promise<void> {
  const form: EvaluationForm = defaultForm();
  form.modelKey = params.get("model") ?? "";
  const models = await client.models();

  const status = el("div", { class: "status" });
  const submit = el("button", { type: "button", disabled: "" }, "Submit evaluation");
  let resolvable = 0;

  const modelSelect = el("select", {},
    el("option", { value: "" }, "(inline manifest below)"),
    ...models.map((m) => {
      const opt = el("option", { value: m.key }, m.key);
      if (m.key === form.modelKey) opt.selected = true;
      return opt;
    }));
  const manifestOverride = el("textarea", {
    rows: "6", placeholder: "Optional: paste a manifest to tweak pipeline steps",
  });
  const constraint = el("input", { placeholder: "e.g. ^1.x" });
  const archSelect = el("select", {},
    ...["", "amd64", "arm64", "ppc64le"].map((v) =>
      el("option", { value: v }, v || "(any arch)")));
  const accelSelect = el("select", {},
    ...["", "cpu", "gpu"].map((v) => el("option", { value: v }, v || "(any accelerator)")));
  const minMemory = el("input", { type: "number", step: "0.5", min: "0" });
  const batchSizes = el("input", { value: "1" });
  const topK = el("input", { type: "number", value: "5", min: "1" });
  const dispatchAll = el("input", { type: "checkbox" });
  const traceSelect = el("select", {},
    ...TRACE_LEVELS.map((lvl) => {
      const opt = el("option", { value: lvl }, lvl);
      if (lvl === "FRAMEWORK") opt.selected = true;
      return opt;
    }));
  const fileInput = el("input", { type: "file", multiple: "" });

  async function refresh(): Promise<void> {
    form.modelKey = modelSelect.value;
    form.manifestText = manifestOverride.value;
    form.frameworkConstraint = constraint.value.trim();
    form.arch = archSelect.value || null;
    form.accelerator = accelSelect.value || null;
    form.minMemoryGb = minMemory.value ? Number(minMemory.value) : null;
    form.batchSizes = batchSizes.value
      .split(",").map((s) => s.trim()).filter(Boolean).map(Number);
    form.topK = Number(topK.value) || 5;
    form.dispatch = dispatchAll.checked ? "all" : "one";
    form.traceLevel = traceSelect.value as TraceLevelName;

    const picked = models.find((m) => m.key === form.modelKey);
    if (picked) {
      try {
        const matching = await client.agents({
          framework: picked.framework,
          constraint: form.frameworkConstraint || picked.framework_constraint || "x",
          arch: form.arch ?? undefined,
          accelerator: form.accelerator ?? undefined,
          min_memory_gb: form.minMemoryGb ?? undefined,
        });
        resolvable = matching.length;
        status.textContent = `${resolvable} agent(s) can run this`;
      } catch (err) {
        resolvable = 0;
        status.replaceChildren(errorBox(err));
      }
    } else {
      // inline manifests are resolved server-side at submit time
      resolvable = form.manifestText ? 1 : 0;
      status.textContent = form.manifestText ? "inline manifest" : "pick a model";
    }
    if (canSubmit(form, resolvable)) submit.removeAttribute("disabled");
    else submit.setAttribute("disabled", "");
  }

  fileInput.addEventListener("change", async () => {
    form.inputsB64 = await Promise.all(
      Array.from(fileInput.files ?? []).map(readFileAsB64));
    await refresh();
  });
  for (const input of [modelSelect, manifestOverride, constraint, archSelect,
                       accelSelect, minMemory, batchSizes, topK, dispatchAll,
                       traceSelect]) {
    input.addEventListener("change", () => void refresh());
  }

  submit.addEventListener("click", async () => {
    try {
      const ids: string[] = [];
      for (const body of serializeForm(form)) {
        const { evaluation_id } = await client.submitRaw(body);
        ids.push(evaluation_id);
      }
      window.location.hash = `#/evaluations/${ids[0]}`;
    } catch (err) {
      status.replaceChildren(errorBox(err));
    }
  });

  const field = (label: string, input: HTMLElement) =>
    el("label", { class: "field" }, el("span", {}, label), input);
  show(
    el("h2", {}, "New evaluation"),
    el("div", { class: "form" },
      field("Model", modelSelect),
      field("Manifest override", manifestOverride),
      field("Inputs", fileInput),
      field("Framework constraint", constraint),
      field("Architecture", archSelect),
      field("Accelerator", accelSelect),
      field("Min memory (GB)", minMemory),
      field("Batch sizes", batchSizes),
      field("Top-k", topK),
      field("Dispatch to all matching agents", dispatchAll),
      field("Trace level", traceSelect),
      submit, status),
  );
  await refresh();
}

function predictionCell(result: EvaluationResult): HTMLElement {
  const lines = result.predictions.map((preds, i) => {
    const top = preds[0];
    const text = top
      ? `${top.label ?? top.index} (${top.probability.toFixed(4)})`
      : "(none)";
    return el("div", {}, `input ${i}: ${text}`);
  });
  return el("div", {}, ...lines);
}

async function evaluationPage(id: string): Promise<void> {
  show(el("p", {}, `waiting for evaluation ${id}…`));
  const view: EvaluationView = await client.pollEvaluation(id);
  const rows = view.results.map((r) => [
    r.agent_id,
    r.status === "succeeded" ? badge("succeeded") : badge(`failed: ${r.error?.code}`),
    String(r.batch_size),
    predictionCell(r),
    r.trace_id ? link(`#/traces/${r.trace_id}`, "trace") : "",
  ]);
  const blocks: Child[] = [
    el("h2", {}, `Evaluation ${view.evaluation_id}`),
    el("p", {}, `model ${view.model_key}, dispatch ${view.dispatch}, status ${view.status}`),
    table(["agent", "status", "batch", "top-1 per input", "trace"], rows),
  ];
  try {
    const summaries = await client.summary(id);
    blocks.push(el("h3", {}, "Summary"), table(
      ["agent", "batch", "mean ms", "throughput/s", "$/hr", "$/1M"],
      summaries.map((s) => [
        s.agent_id, String(s.batch_size), s.mean_latency_ms.toFixed(3),
        s.throughput_per_sec.toFixed(1),
        s.price_per_hour === null ? "-" : s.price_per_hour.toFixed(2),
        s.cost_per_million === null ? "-" : s.cost_per_million.toFixed(4),
      ])));
  } catch (err) {
    blocks.push(errorBox(err));
  }
  show(...blocks);
}

async function historyPage(): Promise<void> {
  const results = await client.evaluations();
  const picked: string[] = [];
  const compareLink = el("span", {});
  const rows = results.map((r) => {
    const checkbox = el("input", { type: "checkbox" });
    checkbox.addEventListener("change", () => {
      const idx = picked.indexOf(r.evaluation_id);
      if (checkbox.checked && idx < 0) picked.push(r.evaluation_id);
      if (!checkbox.checked && idx >= 0) picked.splice(idx, 1);
      compareLink.replaceChildren(picked.length === 2
        ? link(`#/compare?a=${picked[0]}&b=${picked[1]}`, "compare selected")
        : "");
    });
    return [
      checkbox,
      link(`#/evaluations/${r.evaluation_id}`, r.evaluation_id.slice(0, 8)),
      r.model_key, r.agent_id, r.status, String(r.batch_size),
      new Date(r.finished_at * 1000).toISOString(),
    ];
  });
  show(
    el("h2", {}, "History"),
    compareLink,
    table(["", "evaluation", "model", "agent", "status", "batch", "finished"], rows),
  );
}

const LANE_HEIGHT = 26;

async function tracePage(id: string, params: URLSearchParams): Promise<void> {
  const trace = await client.trace(id);
  const maxLevel = (params.get("level") as TraceLevelName | null) ?? undefined;
  const timeline = layoutTimeline(trace, maxLevel);
  const view: Viewport = {
    beginUs: Number(params.get("from") ?? timeline.beginUs),
    endUs: Number(params.get("to") ?? timeline.endUs),
    widthPx: 960,
  };

  const lanesBox = el("div", { class: "timeline" });
  for (const lane of timeline.lanes) {
    const row = el("div", {
      class: "lane",
      style: `height:${LANE_HEIGHT * (1 + Math.max(...lane.spans.map((s) => s.depth)))}px`,
    }, el("span", { class: "lane-label" }, lane.level));
    for (const span of lane.spans) {
      const px = toPixels(span, view);
      row.append(el("div", {
        class: "span",
        title: `${span.name}: ${span.durationUs}us`,
        style: `left:${px.leftPx + 90}px;width:${px.widthPx}px;` +
               `top:${4 + span.depth * LANE_HEIGHT}px`,
      }, span.name));
    }
    lanesBox.append(row);
  }

  const levelFilter = el("select", {},
    el("option", { value: "" }, "all levels"),
    ...TRACE_LEVELS.slice(1).map((lvl) => {
      const opt = el("option", { value: lvl }, `up to ${lvl}`);
      if (lvl === maxLevel) opt.selected = true;
      return opt;
    }));
  levelFilter.addEventListener("change", () => {
    const next = new URLSearchParams(params);
    if (levelFilter.value) next.set("level", levelFilter.value);
    else next.delete("level");
    window.location.hash = `#/traces/${id}?${next}`;
  });

  const zoom = (factor: number) => () => {
    const mid = (view.beginUs + view.endUs) / 2;
    const half = ((view.endUs - view.beginUs) / 2) * factor;
    const next = new URLSearchParams(params);
    next.set("from", String(Math.max(timeline.beginUs, mid - half)));
    next.set("to", String(Math.min(timeline.endUs, mid + half)));
    window.location.hash = `#/traces/${id}?${next}`;
  };
  const zoomIn = el("button", { type: "button" }, "zoom in");
  zoomIn.addEventListener("click", zoom(0.5));
  const zoomOut = el("button", { type: "button" }, "zoom out");
  zoomOut.addEventListener("click", zoom(2));

  show(
    el("h2", {}, `Trace ${timeline.traceId}`),
    el("p", {}, `${allSpans(timeline).length} spans, `,
      `${timeline.endUs - timeline.beginUs}us total`),
    el("div", { class: "controls" }, levelFilter, " ", zoomIn, " ", zoomOut),
    lanesBox,
  );
}

async function comparePage(params: URLSearchParams): Promise<void> {
  const a = params.get("a");
  const b = params.get("b");
  if (!a || !b) {
    show(el("p", {}, "pick two evaluations from the history page"));
    return;
  }
  const [viewA, viewB] = await Promise.all([
    client.evaluation(a), client.evaluation(b),
  ]);
  const report = compareEvaluations(viewA, viewB);
  const rows = report.rows.map((row) => [
    String(row.input),
    String(row.a ?? "-"),
    String(row.b ?? "-"),
    row.flipped ? badge("flipped") : "",
  ]);
  show(
    el("h2", {}, "Compare"),
    el("p", {},
      `${report.evaluation_a} (${report.agent_a}) vs `,
      `${report.evaluation_b} (${report.agent_b}): `,
      `${(report.agreement_rate * 100).toFixed(1)}% agreement over `,
      `${report.inputs_compared} inputs`),
    table(["input", "A top-1", "B top-1", ""], rows),
  );
}

// --- router ----------------------------------------------------------------------

async function route(): Promise<void> {
  const hash = window.location.hash.slice(1) || "/models";
  const [path, search] = hash.split("?") as [string, string | undefined];
  const params = new URLSearchParams(search ?? "");
  try {
    if (path === "/models") return await modelsPage();
    if (path.startsWith("/models/")) return await modelPage(path.slice("/models/".length));
    if (path === "/agents") return await agentsPage();
    if (path === "/evaluate") return await evaluatePage(params);
    if (path === "/evaluations") return await historyPage();
    if (path.startsWith("/evaluations/")) {
      return await evaluationPage(path.slice("/evaluations/".length));
    }
    if (path.startsWith("/traces/")) {
      return await tracePage(path.slice("/traces/".length), params);
    }
    if (path === "/compare") return await comparePage(params);
    show(el("p", {}, `no such page: ${path}`));
  } catch (err) {
    show(errorBox(err));
  }
}

window.addEventListener("hashchange", () => void route());
window.addEventListener("DOMContentLoaded", () => void route());
