"""Orchestrator: accepts evaluations, routes them to agents, keeps results.

Submission resolves the manifest's framework constraint plus any hardware
filter against live registered agents, then dispatches over the wire from a
worker pool so a fan-out to N agents runs concurrently, not serially. Agents
acknowledge immediately and push an EvaluationResult (and trace spans) back
when done; an unreachable agent turns into a failed result rather than a
stuck evaluation.

Completed results land in an append-only store (in-memory by default, a
JSONL file when you want history to survive restarts) and are summarized
per (agent, batch size) from the per-batch predict latencies:

    throughput  = batch_size / mean latency          (inputs per second)
    cost per 1M = price_per_hour / 3600 / throughput * 1e6

Prices come from a table keyed by agent id, hardware label, "arch/accel",
or "default", first match wins.
"""

from __future__ import annotations

import base64
import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    EvalGridError, NoAgentSatisfiesConstraints, NoSuccessfulResults,
    TraceError, UnknownEvaluation,
)
from .manifest import Manifest, parse_manifest, render_manifest, validate_manifest
from .registry import AgentRecord, InMemoryRegistry, ResolutionQuery
from .semver import SemVer, VersionConstraint
from .tracer import Span, assemble_trace
from . import wire

DISPATCH_ONE = "one"
DISPATCH_ALL = "all"

SUCCEEDED = "succeeded"
FAILED = "failed"


@dataclass(frozen=True)
class EvaluationRequest:
    model_key: str = ""
    manifest_text: str = ""                  # inline alternative to model_key
    inputs: tuple = ()                       # raw payload bytes, one per input
    batch_size: int = 1
    top_k: int = 5
    dispatch: str = DISPATCH_ONE
    framework_constraint: str = ""           # extra agent-version filter
    arch: Optional[str] = None
    accelerator: Optional[str] = None
    min_memory_gb: Optional[float] = None
    trace_granularity: str = "FRAMEWORK"
    price_per_hour: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_key": self.model_key,
            "manifest_text": self.manifest_text,
            "inputs_b64": [base64.b64encode(p).decode("ascii") for p in self.inputs],
            "batch_size": self.batch_size,
            "top_k": self.top_k,
            "dispatch": self.dispatch,
            "framework_constraint": self.framework_constraint,
            "arch": self.arch,
            "accelerator": self.accelerator,
            "min_memory_gb": self.min_memory_gb,
            "trace_granularity": self.trace_granularity,
            "price_per_hour": self.price_per_hour,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRequest":
        return cls(
            model_key=str(d.get("model_key", "")),
            manifest_text=str(d.get("manifest_text", "")),
            inputs=tuple(base64.b64decode(p) for p in d.get("inputs_b64", ())),
            batch_size=int(d.get("batch_size", 1)),
            top_k=int(d.get("top_k", 5)),
            dispatch=str(d.get("dispatch", DISPATCH_ONE)),
            framework_constraint=str(d.get("framework_constraint", "")),
            arch=d.get("arch"),
            accelerator=d.get("accelerator"),
            min_memory_gb=(None if d.get("min_memory_gb") is None
                           else float(d["min_memory_gb"])),
            trace_granularity=str(d.get("trace_granularity", "FRAMEWORK")),
            price_per_hour=(None if d.get("price_per_hour") is None
                            else float(d["price_per_hour"])),
            metadata=dict(d.get("metadata", {})),
        )


@dataclass(frozen=True)
class EvaluationResult:
    evaluation_id: str
    agent_id: str
    model_key: str
    status: str
    error: Optional[dict] = None             # {"code", "message"} when failed
    predictions: tuple = ()                  # per input: tuple of (idx, prob, label)
    batch_size: int = 1
    batch_latencies: tuple = ()              # seconds per predict call
    input_count: int = 0
    container_image: str = ""
    trace_id: str = ""
    framework: str = ""                      # what the agent actually ran
    framework_version: str = ""
    hardware: Optional[dict] = None          # agent's HardwareDescriptor
    started_at: float = 0.0
    finished_at: float = 0.0

    def to_dict(self) -> dict:
        return {
            "evaluation_id": self.evaluation_id,
            "agent_id": self.agent_id,
            "model_key": self.model_key,
            "status": self.status,
            "error": self.error,
            "predictions": [
                [{"index": i, "probability": p, "label": l} for (i, p, l) in per_input]
                for per_input in self.predictions
            ],
            "batch_size": self.batch_size,
            "batch_latencies": list(self.batch_latencies),
            "input_count": self.input_count,
            "container_image": self.container_image,
            "trace_id": self.trace_id,
            "framework": self.framework,
            "framework_version": self.framework_version,
            "hardware": self.hardware,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationResult":
        return cls(
            evaluation_id=str(d["evaluation_id"]),
            agent_id=str(d["agent_id"]),
            model_key=str(d.get("model_key", "")),
            status=str(d["status"]),
            error=d.get("error"),
            predictions=tuple(
                tuple((int(p["index"]), float(p["probability"]), p.get("label"))
                      for p in per_input)
                for per_input in d.get("predictions", ())
            ),
            batch_size=int(d.get("batch_size", 1)),
            batch_latencies=tuple(float(x) for x in d.get("batch_latencies", ())),
            input_count=int(d.get("input_count", 0)),
            container_image=str(d.get("container_image", "")),
            trace_id=str(d.get("trace_id", "")),
            framework=str(d.get("framework", "")),
            framework_version=str(d.get("framework_version", "")),
            hardware=d.get("hardware"),
            started_at=float(d.get("started_at", 0.0)),
            finished_at=float(d.get("finished_at", 0.0)),
        )


@dataclass(frozen=True)
class MetricSummary:
    agent_id: str
    batch_size: int
    batch_count: int
    input_count: int
    mean_latency_ms: float
    min_latency_ms: float
    max_latency_ms: float
    throughput_per_sec: float
    price_per_hour: Optional[float] = None
    cost_per_million: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "batch_size": self.batch_size,
            "batch_count": self.batch_count,
            "input_count": self.input_count,
            "mean_latency_ms": self.mean_latency_ms,
            "min_latency_ms": self.min_latency_ms,
            "max_latency_ms": self.max_latency_ms,
            "throughput_per_sec": self.throughput_per_sec,
            "price_per_hour": self.price_per_hour,
            "cost_per_million": self.cost_per_million,
        }


def price_for(result: EvaluationResult, prices: Optional[dict]) -> Optional[float]:
    """Dollars/hour for the machine that produced a result.

    Lookup order: agent id, any hardware label, "arch/accelerator", "default".
    """
    if not prices:
        return None
    if result.agent_id in prices:
        return float(prices[result.agent_id])
    hw = result.hardware or {}
    for label in hw.get("labels", ()):
        if label in prices:
            return float(prices[label])
    pair = f"{hw.get('arch', '')}/{hw.get('accelerator', '')}"
    if pair in prices:
        return float(prices[pair])
    if "default" in prices:
        return float(prices["default"])
    return None


def summarize_results(results, prices: Optional[dict] = None) -> list:
    """One MetricSummary per (agent, batch size) over successful results."""
    groups: dict = {}
    for r in results:
        if r.status != SUCCEEDED or not r.batch_latencies:
            continue
        groups.setdefault((r.agent_id, r.batch_size), []).append(r)
    if not groups:
        raise NoSuccessfulResults("no successful results to summarize")
    out = []
    for (agent_id, batch_size) in sorted(groups):
        rs = groups[(agent_id, batch_size)]
        latencies = [s for r in rs for s in r.batch_latencies]
        mean_s = sum(latencies) / len(latencies)
        throughput = batch_size / mean_s
        price = price_for(rs[0], prices)
        cost = None if price is None else price / 3600.0 / throughput * 1e6
        out.append(MetricSummary(
            agent_id=agent_id,
            batch_size=batch_size,
            batch_count=len(latencies),
            input_count=sum(r.input_count for r in rs),
            mean_latency_ms=mean_s * 1e3,
            min_latency_ms=min(latencies) * 1e3,
            max_latency_ms=max(latencies) * 1e3,
            throughput_per_sec=throughput,
            price_per_hour=price,
            cost_per_million=cost,
        ))
    return out


class InMemoryResultStore:
    """Append-only result log; the default evaluation database."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list = []

    def append(self, result: EvaluationResult) -> None:
        with self._lock:
            self._records.append(result)

    def all(self) -> list:
        with self._lock:
            return list(self._records)


class FileResultStore:
    """JSONL-backed result log so history survives an orchestrator restart."""

    def __init__(self, path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, result: EvaluationResult) -> None:
        line = json.dumps(result.to_dict(), sort_keys=True)
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def all(self) -> list:
        with self._lock:
            if not self._path.exists():
                return []
            with open(self._path, "r", encoding="utf-8") as fh:
                return [EvaluationResult.from_dict(json.loads(line))
                        for line in fh if line.strip()]


class Orchestrator:
    """Registry + dispatcher + result/trace store behind one RPC endpoint."""

    def __init__(self, registry: Optional[InMemoryRegistry] = None,
                 host: str = "127.0.0.1", port: int = 0,
                 store=None, price_table: Optional[dict] = None,
                 dispatch_workers: int = 16,
                 rpc_timeout: float = 60.0):
        self.registry = registry or InMemoryRegistry()
        self.store = store if store is not None else InMemoryResultStore()
        self.price_table = dict(price_table or {})
        self._rpc_timeout = rpc_timeout
        self._lock = threading.Condition()
        self._requests: dict = {}            # eval_id -> EvaluationRequest
        self._results: dict = {}             # eval_id -> {agent_id: result}
        self._pending: dict = {}             # eval_id -> set of agent_ids
        self._traces: dict = {}              # trace_id -> {span_id: Span}
        for result in self.store.all():      # adopt persisted history
            self._results.setdefault(result.evaluation_id, {})[result.agent_id] = result
            self._pending.setdefault(result.evaluation_id, set())
        self._pool = ThreadPoolExecutor(max_workers=dispatch_workers,
                                        thread_name_prefix="dispatch")
        self._server = wire.RpcServer(self._handle_rpc, host=host, port=port)

    # -- lifecycle

    @property
    def endpoint(self) -> str:
        return self._server.endpoint

    def close(self) -> None:
        self._server.close()
        self._pool.shutdown(wait=False)

    # -- manifest intake

    def publish_manifest(self, text: str) -> str:
        m = parse_manifest(text)
        report = validate_manifest(m)
        if not report.ok:
            first = report.errors[0]
            raise EvalGridError(f"manifest invalid: {first.path}: {first.message}")
        return self.registry.put_manifest(m)

    def _manifest_for(self, request: EvaluationRequest) -> Manifest:
        if request.model_key:
            try:
                return self.registry.get_manifest(request.model_key)
            except KeyError:
                raise UnknownEvaluation(
                    f"no manifest published under {request.model_key!r}") from None
        if request.manifest_text:
            return parse_manifest(request.manifest_text)
        raise EvalGridError("request names neither model_key nor manifest_text")

    # -- submission

    def resolve_agents(self, request: EvaluationRequest) -> list:
        m = self._manifest_for(request)
        constraint = m.framework.constraint or VersionConstraint.parse("x")
        query = ResolutionQuery(
            framework=m.framework.name,
            constraint=constraint,
            arch=request.arch,
            accelerator=request.accelerator,
            min_memory_gb=request.min_memory_gb,
        )
        agents = self.registry.resolve(query)
        if request.framework_constraint:
            extra = VersionConstraint.parse(request.framework_constraint)
            agents = [a for a in agents if extra.matches(a.framework_version)]
        return agents

    def submit(self, request: EvaluationRequest) -> str:
        manifest = self._manifest_for(request)
        agents = self.resolve_agents(request)
        if not agents:
            raise NoAgentSatisfiesConstraints(
                f"no live agent satisfies {manifest.framework.name} "
                f"{manifest.framework.constraint} with the requested hardware")
        if request.dispatch == DISPATCH_ONE:
            agents = agents[:1]
        elif request.dispatch != DISPATCH_ALL:
            raise EvalGridError(f"unknown dispatch mode {request.dispatch!r}")

        evaluation_id = uuid.uuid4().hex
        with self._lock:
            self._requests[evaluation_id] = request
            self._results[evaluation_id] = {}
            self._pending[evaluation_id] = {a.agent_id for a in agents}
        body = {
            "evaluation_id": evaluation_id,
            "orchestrator": self.endpoint,
            "manifest_text": render_manifest(manifest),
            "request": request.to_dict(),
        }
        for record in agents:
            self._pool.submit(self._dispatch_one, evaluation_id, record, body)
        return evaluation_id

    def _dispatch_one(self, evaluation_id: str, record: AgentRecord,
                      body: dict) -> None:
        client = wire.RpcClient.for_endpoint(record.endpoint,
                                             timeout=self._rpc_timeout)
        try:
            reply = client.call(wire.RUN_EVALUATION, body)
            if not reply.get("accepted"):
                # agent chose to answer synchronously
                self.collect_result(EvaluationResult.from_dict(reply))
        except EvalGridError as exc:
            self.collect_result(EvaluationResult(
                evaluation_id=evaluation_id, agent_id=record.agent_id,
                model_key="", status=FAILED,
                error={"code": exc.code, "message": exc.message},
                finished_at=time.time(),
            ))
        except OSError as exc:
            self.collect_result(EvaluationResult(
                evaluation_id=evaluation_id, agent_id=record.agent_id,
                model_key="", status=FAILED,
                error={"code": "Unreachable", "message": str(exc)},
                finished_at=time.time(),
            ))
        finally:
            client.close()

    # -- results

    def collect_result(self, result: EvaluationResult) -> bool:
        """Store a result; duplicate (evaluation, agent) pairs are ignored."""
        with self._lock:
            if result.evaluation_id not in self._results:
                raise UnknownEvaluation(
                    f"evaluation {result.evaluation_id!r} was never submitted")
            per_eval = self._results[result.evaluation_id]
            if result.agent_id in per_eval:
                return False
            per_eval[result.agent_id] = result
        # persist before clearing pending: once wait() returns, every result
        # it reported is already in the store
        self.store.append(result)
        with self._lock:
            self._pending[result.evaluation_id].discard(result.agent_id)
            self._lock.notify_all()
        return True

    def get_evaluation(self, evaluation_id: str) -> dict:
        with self._lock:
            if evaluation_id not in self._results:
                raise UnknownEvaluation(f"unknown evaluation {evaluation_id!r}")
            results = [r.to_dict() for _, r in
                       sorted(self._results[evaluation_id].items())]
            pending = sorted(self._pending[evaluation_id])
            request = self._requests.get(evaluation_id)
        status = "running" if pending else (
            SUCCEEDED if any(r["status"] == SUCCEEDED for r in results) else FAILED)
        return {
            "evaluation_id": evaluation_id,
            "status": status,
            "model_key": request.model_key if request else "",
            "dispatch": request.dispatch if request else "",
            "results": results,
            "pending_agents": pending,
        }

    def wait(self, evaluation_id: str, timeout: float = 60.0) -> dict:
        deadline = time.monotonic() + timeout
        with self._lock:
            if evaluation_id not in self._results:
                raise UnknownEvaluation(f"unknown evaluation {evaluation_id!r}")
            while self._pending[evaluation_id]:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._lock.wait(timeout=remaining):
                    break
        return self.get_evaluation(evaluation_id)

    def query_history(self, model_key: Optional[str] = None,
                      agent_id: Optional[str] = None,
                      status: Optional[str] = None,
                      framework_constraint: Optional[str] = None) -> list:
        """Completed results matching every given filter.

        Ordered by (completion time, evaluation id, agent id) so identical
        stores always list identically.
        """
        constraint = None
        if framework_constraint:
            constraint = VersionConstraint.parse(framework_constraint)
        with self._lock:
            results = [r for per_eval in self._results.values()
                       for r in per_eval.values()]
        out = []
        for r in results:
            if model_key and r.model_key != model_key:
                continue
            if agent_id and r.agent_id != agent_id:
                continue
            if status and r.status != status:
                continue
            if constraint is not None:
                try:
                    version = SemVer.parse(r.framework_version)
                except EvalGridError:
                    continue
                if not constraint.matches(version):
                    continue
            out.append(r)
        out.sort(key=lambda r: (r.finished_at, r.evaluation_id, r.agent_id))
        return out

    def summarize(self, evaluation_id: str,
                  prices: Optional[dict] = None) -> list:
        """MetricSummary per (agent, batch size) for one evaluation."""
        with self._lock:
            if evaluation_id not in self._results:
                raise UnknownEvaluation(f"unknown evaluation {evaluation_id!r}")
            results = list(self._results[evaluation_id].values())
            request = self._requests.get(evaluation_id)
        if prices is None:
            prices = dict(self.price_table)
            if request is not None and request.price_per_hour is not None:
                prices.setdefault("default", request.price_per_hour)
        return summarize_results(results, prices)

    # -- traces

    def store_spans(self, trace_id: str, span_dicts: list) -> int:
        spans = [Span.from_dict(d) for d in span_dicts]
        with self._lock:
            store = self._traces.setdefault(trace_id, {})
            for span in spans:
                store.setdefault(span.span_id, span)
            return len(store)

    def get_trace_spans(self, trace_id: str) -> list:
        """Flat span list for a trace, ordered by begin time."""
        with self._lock:
            store = self._traces.get(trace_id)
            if store is None:
                raise TraceError(f"unknown trace {trace_id!r}")
            spans = list(store.values())
        spans.sort(key=lambda s: (s.begin_us, s.span_id))
        return spans

    def get_trace(self, trace_id: str) -> list:
        return assemble_trace(self.get_trace_spans(trace_id))

    # -- agent-facing RPC

    def _handle_rpc(self, message: dict) -> Optional[dict]:
        mtype = message.get("type")
        body = message.get("body") or {}
        if mtype == wire.REGISTER_AGENT:
            from .registry import HardwareDescriptor

            record = self.registry.register_agent(
                agent_id=str(body["agent_id"]),
                framework=str(body["framework"]),
                framework_version=str(body["framework_version"]),
                hardware=HardwareDescriptor.from_dict(body["hardware"]),
                endpoint=str(body.get("endpoint", "")),
            )
            return {"ok": True, "ttl": self.registry.ttl,
                    "agent_id": record.agent_id}
        if mtype == wire.HEARTBEAT:
            self.registry.heartbeat(str(body["agent_id"]))
            return {"ok": True}
        if mtype == wire.PUBLISH_RESULT:
            accepted = self.collect_result(EvaluationResult.from_dict(body["result"]))
            return {"ok": True, "accepted": accepted}
        if mtype == wire.PUBLISH_SPANS:
            count = self.store_spans(str(body["trace_id"]), body.get("spans", []))
            return {"ok": True, "stored": count}
        if mtype == wire.HEALTH:
            return {"ok": True, "role": "orchestrator"}
        raise EvalGridError(f"unsupported message type {mtype!r}")
