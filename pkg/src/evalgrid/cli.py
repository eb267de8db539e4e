"""Command-line entry point.

Everything that touches platform state goes through the REST API, so the
CLI and the web dashboard are interchangeable clients; `manifest validate`
is the one offline command (it is a pure function over a file). Exit codes:
0 success, 1 user error (bad input, constraint mismatch, not found),
2 internal or transport error.

The orchestrator address resolves in order: --api flag, EVALGRID_API
environment variable, "api" key in the config file, then the local default.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
import time
from datetime import datetime
from pathlib import Path

import requests

from .errors import EvalGridError, error_for_code
from .manifest import parse_manifest, validate_manifest
from .orchestrator import (
    EvaluationRequest, EvaluationResult, summarize_results,
)

DEFAULT_API = "http://127.0.0.1:8420"
DEFAULT_CONFIG = "~/.config/evalgrid/config.json"

_USER_ERROR = 1
_INTERNAL_ERROR = 2

# codes that signal something broke rather than a bad request
_INTERNAL_CODES = {"InternalError", "Unreachable", "ProtocolError", "BindFailure"}


def canonical_json(obj) -> str:
    """The one serialization used wherever bodies must compare byte-equal."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


class ApiClient:
    """Minimal JSON-over-HTTP client for the orchestrator REST surface."""

    def __init__(self, base: str, timeout: float = 30.0):
        self.base = base.rstrip("/")
        self.timeout = timeout

    def _finish(self, resp: requests.Response):
        try:
            payload = resp.json()
        except ValueError:
            payload = {}
        if resp.status_code >= 400:
            code = payload.get("code", "Error")
            message = payload.get("message", f"HTTP {resp.status_code}")
            exc = error_for_code(code, message)
            if resp.status_code >= 500:
                exc.code = "InternalError"
            raise exc
        return payload

    def get(self, path: str, params=None):
        try:
            resp = requests.get(self.base + path, params=params,
                                timeout=self.timeout)
        except requests.RequestException as exc:
            err = EvalGridError(f"cannot reach {self.base}: {exc}")
            err.code = "Unreachable"
            raise err from exc
        return self._finish(resp)

    def post(self, path: str, body: dict):
        try:
            resp = requests.post(self.base + path, json=body,
                                 timeout=self.timeout)
        except requests.RequestException as exc:
            err = EvalGridError(f"cannot reach {self.base}: {exc}")
            err.code = "Unreachable"
            raise err from exc
        return self._finish(resp)


def resolve_api(args) -> str:
    if getattr(args, "api", None):
        return args.api
    env = os.environ.get("EVALGRID_API")
    if env:
        return env
    config_path = Path(os.path.expanduser(
        getattr(args, "config", None) or DEFAULT_CONFIG))
    if config_path.is_file():
        try:
            doc = json.loads(config_path.read_text(encoding="utf-8"))
            if isinstance(doc, dict) and doc.get("api"):
                return str(doc["api"])
        except (OSError, json.JSONDecodeError):
            pass
    return DEFAULT_API


def _client(args) -> ApiClient:
    return ApiClient(resolve_api(args), timeout=getattr(args, "timeout", 30.0))


def _emit(args, payload, text_fn=None) -> None:
    if getattr(args, "json", False) or text_fn is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        text_fn(payload)


def _fail(args, exc: EvalGridError) -> int:
    if getattr(args, "json", False):
        print(json.dumps({"code": exc.code, "message": exc.message},
                         sort_keys=True), file=sys.stderr)
    else:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
    return _INTERNAL_ERROR if exc.code in _INTERNAL_CODES else _USER_ERROR


def _read_input(spec: str) -> bytes:
    if spec.startswith(("http://", "https://")):
        resp = requests.get(spec, timeout=60)
        resp.raise_for_status()
        return resp.content
    return Path(spec).read_bytes()


def _when(ts: float) -> str:
    if not ts:
        return "-"
    return datetime.fromtimestamp(ts).strftime("%Y-%m-%d %H:%M:%S")


# --- serve commands -------------------------------------------------------


def cmd_orchestrator_serve(args) -> int:
    from .orchestrator import FileResultStore, Orchestrator
    from .registry import InMemoryRegistry
    from .restapi import RestApi

    price_table = {}
    if args.prices:
        price_table = json.loads(Path(args.prices).read_text(encoding="utf-8"))
    store = FileResultStore(args.store) if args.store else None
    registry = InMemoryRegistry(ttl=args.ttl)
    orch = Orchestrator(registry=registry, host=args.host, port=args.rpc_port,
                        store=store, price_table=price_table)
    api = RestApi(orch, host=args.host, port=args.port,
                  static_dir=args.static_dir)
    api.start()
    ready = {"api": api.endpoint, "rpc": orch.endpoint}
    print(f"READY {canonical_json(ready)}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        api.close()
        orch.close()
    return 0


def cmd_agent_serve(args) -> int:
    from .agent import Agent, AgentConfig
    from .registry import HardwareDescriptor

    target = args.orchestrator
    if target.startswith(("http://", "https://")):
        health = ApiClient(target).get("/health")
        target = health["rpc_endpoint"]
    config = AgentConfig(
        agent_id=args.agent_id,
        framework=args.framework,
        framework_version=args.framework_version,
        hardware=HardwareDescriptor(
            arch=args.arch, accelerator=args.accelerator,
            memory_gb=args.memory_gb,
            labels=tuple(args.label or ()),
        ),
        cache_dir=args.cache_dir or "",
        orchestrator_endpoint=target,
        heartbeat_interval=args.heartbeat_interval,
    )
    agent = Agent(config)
    agent.start()
    print(f"READY {canonical_json({'agent': agent.endpoint})}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        agent.close()
    return 0


# --- manifest commands ----------------------------------------------------


def cmd_manifest_validate(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    try:
        manifest = parse_manifest(text)
    except EvalGridError as exc:
        if args.json:
            print(json.dumps({"valid": False, "issues": [
                {"severity": "ERROR", "path": getattr(exc, "path", ""),
                 "message": exc.message}]}, sort_keys=True))
        else:
            print(f"invalid: {exc.message}", file=sys.stderr)
        return _USER_ERROR
    report = validate_manifest(manifest)
    if args.json:
        print(json.dumps({"valid": report.ok, "issues": [
            {"severity": i.severity, "path": i.path, "message": i.message}
            for i in report]}, sort_keys=True))
    else:
        print(report.render())
        if report and report.ok:
            print("valid")
    return 0 if report.ok else _USER_ERROR


def cmd_manifest_publish(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    payload = _client(args).post("/manifests", {"manifest_text": text})
    _emit(args, payload, lambda p: print(f"published {p['key']}"))
    return 0


# --- evaluation commands --------------------------------------------------


def _build_requests(args) -> list:
    manifest_text = ""
    if args.manifest:
        manifest_text = Path(args.manifest).read_text(encoding="utf-8")
    if not args.model and not manifest_text:
        raise EvalGridError("one of --model or --manifest is required")
    if not args.input:
        raise EvalGridError("at least one --input is required")
    inputs = tuple(_read_input(spec) for spec in args.input)
    sizes = [int(s) for s in str(args.batch_sizes).split(",") if s.strip()]
    if not sizes or any(s < 1 for s in sizes):
        raise EvalGridError(f"bad --batch-sizes {args.batch_sizes!r}")
    return [EvaluationRequest(
        model_key=args.model or "",
        manifest_text=manifest_text,
        inputs=inputs,
        batch_size=size,
        top_k=args.top_k,
        dispatch=args.dispatch,
        framework_constraint=args.framework_constraint or "",
        arch=args.arch,
        accelerator=args.accelerator,
        min_memory_gb=args.min_memory,
        trace_granularity=args.trace_level,
        price_per_hour=args.price_per_hour,
    ) for size in sizes]


def _poll_until_done(client: ApiClient, evaluation_id: str,
                     timeout: float) -> dict:
    deadline = time.monotonic() + timeout
    delay = 0.05
    while True:
        view = client.get(f"/evaluations/{evaluation_id}")
        if not view["pending_agents"] or time.monotonic() >= deadline:
            return view
        time.sleep(delay)
        delay = min(delay * 2, 1.0)


def _print_view(view: dict) -> None:
    print(f"evaluation {view['evaluation_id']}: {view['status']}")
    for result in view["results"]:
        line = f"  {result['agent_id']}: {result['status']}"
        if result["error"]:
            line += f" [{result['error']['code']}] {result['error']['message']}"
        print(line)
        for i, preds in enumerate(result["predictions"]):
            if not preds:
                continue
            top = preds[0]
            label = top["label"] if top["label"] is not None else top["index"]
            print(f"    input {i}: top-1 {label} ({top['probability']:.4f})")
    if view["pending_agents"]:
        print(f"  still pending: {', '.join(view['pending_agents'])}")


def cmd_evaluate(args) -> int:
    requests_to_send = _build_requests(args)
    if args.dry_run:
        for req in requests_to_send:
            print(canonical_json(req.to_dict()))
        return 0
    client = _client(args)
    views = []
    for req in requests_to_send:
        submitted = client.post("/evaluations", req.to_dict())
        evaluation_id = submitted["evaluation_id"]
        if args.no_wait:
            views.append({"evaluation_id": evaluation_id, "status": "submitted",
                          "results": [], "pending_agents": []})
            continue
        views.append(_poll_until_done(client, evaluation_id, args.timeout))
    if args.json:
        print(json.dumps(views if len(views) > 1 else views[0],
                         indent=2, sort_keys=True))
    else:
        for view in views:
            _print_view(view)
    incomplete = any(v.get("pending_agents") for v in views)
    failed = any(v.get("status") == "failed" for v in views)
    return _USER_ERROR if (incomplete or failed) else 0


def cmd_results_list(args) -> int:
    params = {}
    if args.model:
        params["model_key"] = args.model
    if args.agent:
        params["agent_id"] = args.agent
    if args.status:
        params["status"] = args.status
    if args.framework_constraint:
        params["framework_constraint"] = args.framework_constraint
    rows = _client(args).get("/evaluations", params=params)

    def render(rows):
        if not rows:
            print("no results")
            return
        for r in rows:
            print(f"{r['evaluation_id']}  {r['agent_id']:<12} {r['status']:<10}"
                  f" {r['model_key']:<32} {_when(r['finished_at'])}")

    _emit(args, rows, render)
    return 0


def cmd_results_show(args) -> int:
    view = _client(args).get(f"/evaluations/{args.evaluation_id}")
    _emit(args, view, _print_view)
    return 0


def cmd_summarize(args) -> int:
    client = _client(args)
    if args.prices:
        prices = json.loads(Path(args.prices).read_text(encoding="utf-8"))
        view = client.get(f"/evaluations/{args.evaluation_id}")
        results = [EvaluationResult.from_dict(d) for d in view["results"]]
        summaries = [s.to_dict() for s in summarize_results(results, prices)]
    else:
        summaries = client.get(f"/evaluations/{args.evaluation_id}/summary")

    def render(summaries):
        for s in summaries:
            cost = (f"  ${s['cost_per_million']:.4f}/M"
                    if s.get("cost_per_million") is not None else "")
            print(f"{s['agent_id']:<12} batch {s['batch_size']:<4}"
                  f" mean {s['mean_latency_ms']:8.3f} ms"
                  f"  {s['throughput_per_sec']:10.1f}/s{cost}")

    _emit(args, summaries, render)
    return 0


def cmd_trace_show(args) -> int:
    payload = _client(args).get(f"/traces/{args.trace_id}")

    def render(payload):
        def walk(node, depth):
            print(f"{'  ' * depth}{node['name']:<28} {node['level']:<10}"
                  f" {node['duration_us']:10.1f} us")
            for child in node["children"]:
                walk(child, depth + 1)

        for root in payload["roots"]:
            walk(root, 0)

    _emit(args, payload, render)
    return 0


def _top1(result: dict) -> list:
    out = []
    for preds in result["predictions"]:
        if preds:
            top = preds[0]
            out.append(top["label"] if top["label"] is not None else top["index"])
        else:
            out.append(None)
    return out


def compare_views(view_a: dict, view_b: dict) -> dict:
    """Per-input top-1 agreement between the first result of two evaluations."""
    results_a = [r for r in view_a["results"] if r["status"] == "succeeded"]
    results_b = [r for r in view_b["results"] if r["status"] == "succeeded"]
    if not results_a or not results_b:
        raise EvalGridError("both evaluations need at least one successful result")
    a, b = results_a[0], results_b[0]
    top_a, top_b = _top1(a), _top1(b)
    count = min(len(top_a), len(top_b))
    rows = []
    for i in range(count):
        rows.append({
            "input": i,
            "a": top_a[i],
            "b": top_b[i],
            "flipped": top_a[i] != top_b[i],
        })
    agreements = sum(1 for row in rows if not row["flipped"])
    return {
        "evaluation_a": view_a["evaluation_id"],
        "evaluation_b": view_b["evaluation_id"],
        "agent_a": a["agent_id"],
        "agent_b": b["agent_id"],
        "inputs_compared": count,
        "agreement_rate": agreements / count if count else 1.0,
        "rows": rows,
        "flipped": [row for row in rows if row["flipped"]],
    }


def cmd_compare(args) -> int:
    client = _client(args)
    view_a = client.get(f"/evaluations/{args.evaluation_a}")
    view_b = client.get(f"/evaluations/{args.evaluation_b}")
    report = compare_views(view_a, view_b)

    def render(report):
        print(f"comparing {report['evaluation_a']} ({report['agent_a']}) vs "
              f"{report['evaluation_b']} ({report['agent_b']})")
        print(f"agreement: {report['agreement_rate']:.1%} over "
              f"{report['inputs_compared']} inputs")
        for row in report["flipped"]:
            print(f"  input {row['input']}: {row['a']} -> {row['b']}")

    _emit(args, report, render)
    return 0


# --- wiring ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):                # usage problems are user errors
        self.print_usage(sys.stderr)
        self.exit(_USER_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--api", help="orchestrator REST address")
    common.add_argument("--config", help=f"config file (default {DEFAULT_CONFIG})")
    common.add_argument("--json", action="store_true",
                        help="machine-readable output")
    common.add_argument("--timeout", type=float, default=60.0,
                        help="seconds to wait on requests and polling")

    parser = _Parser(prog="evalgrid",
                     description="model evaluation over registered agents")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_orch = sub.add_parser("orchestrator", parents=[common]).add_subparsers(
        dest="subcommand", parser_class=_Parser)
    p_serve = p_orch.add_parser("serve", parents=[common])
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8420)
    p_serve.add_argument("--rpc-port", type=int, default=0)
    p_serve.add_argument("--static-dir", default=None,
                         help="directory with the dashboard bundle")
    p_serve.add_argument("--store", default=None,
                         help="JSONL file for persistent result history")
    p_serve.add_argument("--prices", default=None,
                         help="JSON price table, dollars/hour per agent label")
    p_serve.add_argument("--ttl", type=float, default=30.0,
                         help="agent liveness window, seconds")
    p_serve.set_defaults(handler=cmd_orchestrator_serve)

    p_agent = sub.add_parser("agent", parents=[common]).add_subparsers(
        dest="subcommand", parser_class=_Parser)
    p_aserve = p_agent.add_parser("serve", parents=[common])
    p_aserve.add_argument("--orchestrator", required=True,
                          help="REST address or RPC host:port")
    p_aserve.add_argument("--agent-id", required=True)
    p_aserve.add_argument("--framework", default="refnn")
    p_aserve.add_argument("--framework-version", default="1.13.0")
    p_aserve.add_argument("--arch", default="amd64")
    p_aserve.add_argument("--accelerator", default="cpu")
    p_aserve.add_argument("--memory-gb", type=float, default=4.0)
    p_aserve.add_argument("--label", action="append",
                          help="hardware label, repeatable (price table key)")
    p_aserve.add_argument("--cache-dir", default=None)
    p_aserve.add_argument("--heartbeat-interval", type=float, default=10.0)
    p_aserve.set_defaults(handler=cmd_agent_serve)

    p_manifest = sub.add_parser("manifest", parents=[common]).add_subparsers(
        dest="subcommand", parser_class=_Parser)
    p_validate = p_manifest.add_parser("validate", parents=[common])
    p_validate.add_argument("file")
    p_validate.set_defaults(handler=cmd_manifest_validate)
    p_publish = p_manifest.add_parser("publish", parents=[common])
    p_publish.add_argument("file")
    p_publish.set_defaults(handler=cmd_manifest_publish)

    p_eval = sub.add_parser("evaluate", parents=[common])
    p_eval.add_argument("--model", help="published manifest key")
    p_eval.add_argument("--manifest", help="manifest file to send inline")
    p_eval.add_argument("--input", action="append",
                        help="input file or URL, repeatable")
    p_eval.add_argument("--batch-sizes", default="1",
                        help="comma-separated; one evaluation per size")
    p_eval.add_argument("--top-k", type=int, default=5)
    p_eval.add_argument("--dispatch", choices=["one", "all"], default="one")
    p_eval.add_argument("--framework-constraint", default="")
    p_eval.add_argument("--arch", default=None)
    p_eval.add_argument("--accelerator", default=None)
    p_eval.add_argument("--min-memory", type=float, default=None)
    p_eval.add_argument("--trace-level", default="FRAMEWORK",
                        choices=["NONE", "MODEL", "FRAMEWORK", "LAYER",
                                 "LIBRARY", "HARDWARE"])
    p_eval.add_argument("--price-per-hour", type=float, default=None)
    p_eval.add_argument("--no-wait", action="store_true")
    p_eval.add_argument("--dry-run", action="store_true",
                        help="print the request body without submitting")
    p_eval.set_defaults(handler=cmd_evaluate)

    p_results = sub.add_parser("results", parents=[common]).add_subparsers(
        dest="subcommand", parser_class=_Parser)
    p_list = p_results.add_parser("list", parents=[common])
    p_list.add_argument("--model")
    p_list.add_argument("--agent")
    p_list.add_argument("--status", choices=["succeeded", "failed"])
    p_list.add_argument("--framework-constraint")
    p_list.set_defaults(handler=cmd_results_list)
    p_show = p_results.add_parser("show", parents=[common])
    p_show.add_argument("evaluation_id")
    p_show.set_defaults(handler=cmd_results_show)

    p_sum = sub.add_parser("summarize", parents=[common])
    p_sum.add_argument("evaluation_id")
    p_sum.add_argument("--prices", help="JSON price table file")
    p_sum.set_defaults(handler=cmd_summarize)

    p_trace = sub.add_parser("trace", parents=[common]).add_subparsers(
        dest="subcommand", parser_class=_Parser)
    p_tshow = p_trace.add_parser("show", parents=[common])
    p_tshow.add_argument("trace_id")
    p_tshow.set_defaults(handler=cmd_trace_show)

    p_cmp = sub.add_parser("compare", parents=[common])
    p_cmp.add_argument("evaluation_a")
    p_cmp.add_argument("evaluation_b")
    p_cmp.set_defaults(handler=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_usage(sys.stderr)
        return _USER_ERROR
    try:
        return handler(args)
    except EvalGridError as exc:
        return _fail(args, exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USER_ERROR
    except Exception as exc:  # noqa: BLE001 - last resort, keep the contract
        print(f"internal error: {exc!r}", file=sys.stderr)
        return _INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
