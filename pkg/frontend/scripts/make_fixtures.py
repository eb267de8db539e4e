"""Regenerate the checked-in fixtures the dashboard tests replay.

Run from the repository root with the package installed:

    python3 frontend/scripts/make_fixtures.py

evaluation_forms.json pairs dashboard form states with the request bodies
the command line client prints for the same arguments (``evaluate
--dry-run``); the form serializer test replays each one byte for byte.
synthetic_trace.json is a real ``/traces/{id}`` payload captured from an
in-process orchestrator/agent pair running a synthetic profile model.
"""
from __future__ import annotations

import base64
import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[2]
FIXTURES = REPO / "frontend" / "fixtures"

INLINE_MANIFEST = """\
name: HueNet
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
        color_layout: RGB
outputs:
  - type: probability
    layer_name: prob
    element_type: float32
    features_url: file:///tmp/labels.txt
source:
  graph_path: graph.json
  base_url: file:///tmp/
"""

UNICODE_MANIFEST = INLINE_MANIFEST.replace(
    "task: classification",
    "task: classification\ndescription: modèle d'été ≈ größte 模型 ∑",
)

PROFILE_MANIFEST = """\
name: ProfNet
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
        color_layout: RGB
outputs:
  - type: probability
    layer_name: prob
    element_type: float32
    features_url: {root}/labels.txt
source:
  graph_path: graph.json
  base_url: {root}/
"""

PROFILE_GRAPH = {
    "kind": "synthetic_profile",
    "classes": 3,
    "layers": [
        {"name": "conv1", "duration_us": 900},
        {"name": "gemm", "duration_us": 400, "level": "LIBRARY"},
        {"name": "relu", "duration_us": 150},
        {"name": "pool", "duration_us": 250},
    ],
}


def ppm(width: int, height: int, rgb: tuple[int, int, int]) -> bytes:
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + bytes(rgb) * (width * height)


def dry_run(argv: list[str]) -> list[str]:
    proc = subprocess.run(
        [sys.executable, "-m", "evalgrid", "evaluate", "--dry-run", *argv],
        capture_output=True, text=True, check=True)
    return [line for line in proc.stdout.splitlines() if line.strip()]


def form_rows(rng: random.Random, scratch: Path) -> list[dict]:
    def make(name: str, *, model: str = "", manifest_text: str = "",
             inputs: int = 1, batch_sizes: list[int] | None = None,
             top_k: int = 5, dispatch: str = "one", constraint: str = "",
             arch: str | None = None, accelerator: str | None = None,
             min_memory: float | None = None, trace_level: str = "FRAMEWORK",
             price: float | None = None) -> dict:
        batch_sizes = batch_sizes or [1]
        argv: list[str] = []
        if model:
            argv += ["--model", model]
        if manifest_text:
            manifest_file = scratch / f"{name}.yml"
            manifest_file.write_text(manifest_text, encoding="utf-8")
            argv += ["--manifest", str(manifest_file)]
        payloads = [rng.randbytes(rng.randrange(3, 40)) for _ in range(inputs)]
        for i, payload in enumerate(payloads):
            input_file = scratch / f"{name}-in{i}.bin"
            input_file.write_bytes(payload)
            argv += ["--input", str(input_file)]
        argv += ["--batch-sizes", ",".join(str(s) for s in batch_sizes)]
        argv += ["--top-k", str(top_k), "--dispatch", dispatch]
        if constraint:
            argv += ["--framework-constraint", constraint]
        if arch:
            argv += ["--arch", arch]
        if accelerator:
            argv += ["--accelerator", accelerator]
        if min_memory is not None:
            argv += ["--min-memory", str(min_memory)]
        argv += ["--trace-level", trace_level]
        if price is not None:
            argv += ["--price-per-hour", str(price)]
        return {
            "name": name,
            "form": {
                "modelKey": model,
                "manifestText": manifest_text,
                "inputsB64": [base64.b64encode(p).decode("ascii")
                              for p in payloads],
                "batchSizes": batch_sizes,
                "topK": top_k,
                "dispatch": dispatch,
                "frameworkConstraint": constraint,
                "arch": arch,
                "accelerator": accelerator,
                "minMemoryGb": min_memory,
                "traceLevel": trace_level,
                "pricePerHour": price,
            },
            "argv": ["evaluate", "--dry-run", *argv],
            "bodies": dry_run(argv),
        }

    return [
        make("model-defaults", model="huenet@1.0.0"),
        make("multi-batch", model="huenet@1.0.0", batch_sizes=[1, 2, 4],
             top_k=3, dispatch="all"),
        make("inline-manifest", manifest_text=INLINE_MANIFEST, inputs=2),
        make("range-constraint", model="inception@3.0.0",
             constraint=">=1.10.x and <=1.13.0", arch="amd64"),
        make("integral-memory", model="huenet@1.0.0", accelerator="gpu",
             min_memory=8.0, trace_level="LAYER"),
        make("fractional-memory", model="huenet@1.0.0", min_memory=0.5,
             price=3.6),
        make("integral-price", model="huenet@1.0.0", price=2.0,
             trace_level="NONE", batch_sizes=[8]),
        make("hardware-trace", model="huenet@1.0.0", inputs=3,
             dispatch="all", trace_level="HARDWARE", batch_sizes=[2]),
        make("unicode-key", model="modèle-été@1.0.0", top_k=2,
             constraint="^1.x"),
        make("unicode-manifest", manifest_text=UNICODE_MANIFEST,
             inputs=2, batch_sizes=[1, 2], min_memory=16.0, price=0.25),
    ]


def trace_fixture(scratch: Path) -> dict:
    import requests

    from evalgrid.agent import Agent, AgentConfig
    from evalgrid.orchestrator import EvaluationRequest, Orchestrator
    from evalgrid.registry import HardwareDescriptor
    from evalgrid.restapi import RestApi

    (scratch / "graph.json").write_text(json.dumps(PROFILE_GRAPH))
    (scratch / "labels.txt").write_text("red\ngreen\nblue\n")
    orch = Orchestrator()
    agent = Agent(AgentConfig(
        agent_id="fixture-agent", framework_version="1.12.0",
        hardware=HardwareDescriptor(arch="amd64", accelerator="cpu",
                                    memory_gb=8.0),
        cache_dir=str(scratch / "cache"),
        orchestrator_endpoint=orch.endpoint,
        heartbeat_interval=5.0))
    agent.start()
    api = RestApi(orch)
    api.start()
    try:
        key = orch.publish_manifest(PROFILE_MANIFEST.format(root=scratch))
        eid = orch.submit(EvaluationRequest(
            model_key=key,
            inputs=(ppm(4, 4, (200, 10, 10)), ppm(4, 4, (10, 10, 200))),
            trace_granularity="HARDWARE"))
        view = orch.wait(eid, timeout=30)
        result = view["results"][0]
        if result["status"] != "succeeded":
            raise RuntimeError(f"fixture evaluation failed: {result['error']}")
        resp = requests.get(f"{api.endpoint}/traces/{result['trace_id']}",
                            timeout=10)
        resp.raise_for_status()
        return resp.json()
    finally:
        api.close()
        agent.close()
        orch.close()


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20260815)
    with tempfile.TemporaryDirectory() as tmp:
        scratch = Path(tmp)
        rows = form_rows(rng, scratch)
        trace = trace_fixture(scratch)
    (FIXTURES / "evaluation_forms.json").write_text(
        json.dumps(rows, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    (FIXTURES / "synthetic_trace.json").write_text(
        json.dumps(trace, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    print(f"wrote {len(rows)} form rows and a trace with "
          f"{len(trace['spans'])} spans")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
