/**
 * End-to-end color layout workflow against real server processes.
 *
 * Boots an orchestrator and one agent out of process, publishes the same
 * channel-mean model twice with the decode step reading RGB and BGR, then
 * runs identical inputs through both via the dashboard code path (form
 * serializer + raw submit + poll). The resulting comparison report must
 * match what `evalgrid compare --json` prints for the same evaluations,
 * and the colored inputs must flip while the achromatic one holds.
 */
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { EvalGridClient } from "../src/api.js";
import { compareEvaluations } from "../src/compare.js";
import { defaultForm, serializeForm, type EvaluationForm } from "../src/form.js";
import type { EvaluationView } from "../src/types.js";

const PYTHON = process.env.PYTHON ?? "python3";

function ppm(rgb: [number, number, number], side = 4): Buffer {
  const header = Buffer.from(`P6\n${side} ${side}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(Array(side * side).fill(rgb).flat())]);
}

const MANIFEST = (color: "RGB" | "BGR", root: string) => `\
name: HueNet-${color}
version: 1.0.0
task: classification
license: MIT
framework:
  name: refnn
  version: ^1.11
container:
  amd64:
    cpu: evalgrid/refnn:1-cpu
inputs:
  - type: image
    layer_name: data
    element_type: uint8
    steps:
      decode:
        element_type: uint8
        data_layout: NHWC
        color_layout: ${color}
outputs:
  - type: probability
    layer_name: prob
    element_type: float32
    features_url: ${root}/labels.txt
source:
  graph_path: graph.json
  base_url: ${root}/
`;

function spawnReady(args: string[]): Promise<{ proc: ChildProcess; ready: unknown }> {
  return new Promise((resolve, reject) => {
    const proc = spawn(PYTHON, ["-m", "evalgrid", ...args], {
      stdio: ["ignore", "pipe", "pipe"],
    });
    let out = "";
    let err = "";
    const timer = setTimeout(() => {
      proc.kill();
      reject(new Error(`no READY line from ${args.join(" ")}:\n${out}${err}`));
    }, 30_000);
    proc.stderr?.on("data", (chunk: Buffer) => { err += chunk.toString(); });
    proc.stdout?.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const line = out.split("\n").find((l) => l.startsWith("READY "));
      if (line) {
        clearTimeout(timer);
        resolve({ proc, ready: JSON.parse(line.slice("READY ".length)) });
      }
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`process exited early (${code}):\n${out}${err}`));
    });
  });
}

describe("color layout flip, dashboard vs command line", () => {
  let scratch: string;
  let orchestrator: ChildProcess;
  let agent: ChildProcess;
  let api: string;
  let client: EvalGridClient;

  beforeAll(async () => {
    scratch = mkdtempSync(join(tmpdir(), "evalgrid-ui-"));
    writeFileSync(join(scratch, "graph.json"),
      JSON.stringify({ kind: "channel_mean", classes: 3 }));
    writeFileSync(join(scratch, "labels.txt"), "red\ngreen\nblue\n");

    const orch = await spawnReady([
      "orchestrator", "serve", "--host", "127.0.0.1", "--port", "0",
      "--rpc-port", "0",
    ]);
    orchestrator = orch.proc;
    api = (orch.ready as { api: string }).api;

    const ag = await spawnReady([
      "agent", "serve", "--orchestrator", api, "--agent-id", "browser-agent",
      "--framework-version", "1.12.0", "--cache-dir", join(scratch, "cache"),
    ]);
    agent = ag.proc;
    client = new EvalGridClient(api);
  });

  afterAll(() => {
    agent?.kill();
    orchestrator?.kill();
    rmSync(scratch, { recursive: true, force: true });
  });

  it("matches the command line comparison exactly", async () => {
    const rgbKey = (await client.publishManifest(MANIFEST("RGB", scratch))).key;
    const bgrKey = (await client.publishManifest(MANIFEST("BGR", scratch))).key;

    const inputs = [
      ppm([200, 10, 10]),   // red-dominant: flips under BGR
      ppm([10, 10, 200]),   // blue-dominant: flips under BGR
      ppm([90, 90, 90]),    // achromatic: same either way
    ].map((buf) => buf.toString("base64"));

    const form = (modelKey: string): EvaluationForm => ({
      ...defaultForm(), modelKey, inputsB64: inputs,
    });
    const submit = async (f: EvaluationForm): Promise<EvaluationView> => {
      const bodies = serializeForm(f);
      expect(bodies).toHaveLength(1);
      const { evaluation_id } = await client.submitRaw(bodies[0]!);
      return client.pollEvaluation(evaluation_id);
    };

    const viewA = await submit(form(rgbKey));
    const viewB = await submit(form(bgrKey));
    expect(viewA.status).toBe("succeeded");
    expect(viewB.status).toBe("succeeded");

    const uiReport = compareEvaluations(viewA, viewB);

    const stdout = execFileSync(PYTHON, [
      "-m", "evalgrid", "compare",
      viewA.evaluation_id, viewB.evaluation_id,
      "--api", api, "--json",
    ], { encoding: "utf8" });
    const cliReport = JSON.parse(stdout);

    expect(uiReport).toEqual(cliReport);

    // the physics of the flip, not just agreement between the two clients
    expect(uiReport.inputs_compared).toBe(3);
    expect(uiReport.rows.map((r) => r.flipped)).toEqual([true, true, false]);
    expect(uiReport.rows[0]).toEqual(
      { input: 0, a: "red", b: "blue", flipped: true });
    expect(uiReport.rows[2]?.a).toBe(uiReport.rows[2]?.b);
    expect(uiReport.agreement_rate).toBeCloseTo(1 / 3, 12);
  });

  it("serves the documented health shape", async () => {
    const health = await client.health();
    expect(health.ok).toBe(true);
    expect(health.role).toBe("orchestrator");
  });
});
