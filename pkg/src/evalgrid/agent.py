"""Agent: a worker that loads models and runs evaluations on its hardware.

An agent owns a predictor host, an asset cache, and an RPC endpoint. On
start it registers with the orchestrator and heartbeats on an interval so
the registry keeps considering it live; a missed registration is retried
with exponential backoff, and a heartbeat rejected with UnknownAgent (the
orchestrator restarted) triggers re-registration.

Evaluations arrive two ways. The orchestrator sends RunEvaluation with an
evaluation_id and its own endpoint: the agent acknowledges immediately,
runs the work on a separate thread, and pushes spans then the result back.
A bare RunEvaluation (no evaluation_id) is served synchronously, which is
what the direct CLI path and tests use.

Evaluation failures of any kind become a failed EvaluationResult with an
error code; the agent process itself never dies on a bad manifest, a
missing asset, or a model error.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Optional

from .assets import AssetCache
from .errors import EvalGridError, SchemaError
from .manifest import Manifest, manifest_key, parse_manifest, select_container, validate_manifest
from .orchestrator import FAILED, SUCCEEDED, EvaluationRequest, EvaluationResult
from .pipeline import run_pipeline, stack_batch, top_k
from .predictor import OpenRequest, PredictorHost, REFERENCE_FRAMEWORK, REFERENCE_VERSIONS
from .registry import DEFAULT_HEARTBEAT_INTERVAL, HardwareDescriptor
from .tensor import tensor_from_wire, tensor_to_wire
from .tracer import TraceLevel, Tracer
from . import wire


@dataclass
class AgentConfig:
    agent_id: str
    framework: str = REFERENCE_FRAMEWORK
    framework_version: str = REFERENCE_VERSIONS[-1]
    hardware: HardwareDescriptor = field(
        default_factory=lambda: HardwareDescriptor(arch="amd64"))
    cache_dir: str = ""
    orchestrator_endpoint: str = ""          # empty: standalone, no registration
    heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL
    register_attempts: int = 5
    register_backoff: float = 0.2            # doubles per attempt
    host: str = "127.0.0.1"
    port: int = 0
    rpc_timeout: float = 30.0


class Agent:
    """One worker process: predictor host + asset cache behind RPC."""

    def __init__(self, config: AgentConfig, fetcher=None,
                 sleeper=time.sleep, clock=time.perf_counter):
        self.config = config
        self._clock = clock
        cache_root = config.cache_dir or None
        if cache_root is None:
            import tempfile

            cache_root = tempfile.mkdtemp(prefix=f"evalgrid-{config.agent_id}-")
        self.cache = AssetCache(cache_root, fetcher=fetcher)
        accel = config.hardware.accelerator
        devices = ("cpu",) if accel == "cpu" else ("cpu", accel)
        self.predictors = PredictorHost(devices=devices, sleeper=sleeper)
        self._stop = threading.Event()
        self._heartbeat_thread: Optional[threading.Thread] = None
        self._server = wire.RpcServer(self._handle_rpc,
                                      host=config.host, port=config.port)

    @property
    def endpoint(self) -> str:
        return self._server.endpoint

    # -- orchestrator liaison

    def _client(self) -> wire.RpcClient:
        return wire.RpcClient.for_endpoint(self.config.orchestrator_endpoint,
                                           timeout=self.config.rpc_timeout)

    def register(self) -> None:
        """Announce this agent; retries transient failures with backoff."""
        last: Optional[Exception] = None
        for attempt in range(max(1, self.config.register_attempts)):
            if attempt:
                time.sleep(self.config.register_backoff * (2 ** (attempt - 1)))
            client = self._client()
            try:
                client.call(wire.REGISTER_AGENT, {
                    "agent_id": self.config.agent_id,
                    "framework": self.config.framework,
                    "framework_version": self.config.framework_version,
                    "hardware": self.config.hardware.to_dict(),
                    "endpoint": self.endpoint,
                })
                return
            except (EvalGridError, OSError) as exc:
                last = exc
            finally:
                client.close()
        raise EvalGridError(
            f"could not register with {self.config.orchestrator_endpoint}: {last}")

    def start(self) -> None:
        """Register and begin heartbeating; a no-op without an orchestrator."""
        if not self.config.orchestrator_endpoint:
            return
        self.register()
        self._heartbeat_thread = threading.Thread(
            target=self._heartbeat_loop, daemon=True,
            name=f"heartbeat-{self.config.agent_id}")
        self._heartbeat_thread.start()

    def _heartbeat_loop(self) -> None:
        while not self._stop.wait(self.config.heartbeat_interval):
            client = self._client()
            try:
                client.call(wire.HEARTBEAT, {"agent_id": self.config.agent_id})
            except EvalGridError as exc:
                if exc.code == "UnknownAgent":
                    # orchestrator lost us (restart, prune); re-announce
                    try:
                        self.register()
                    except EvalGridError:
                        pass
            except OSError:
                pass                          # transient; next beat retries
            finally:
                client.close()

    def close(self) -> None:
        self._stop.set()
        self._server.close()
        if self._heartbeat_thread is not None:
            self._heartbeat_thread.join(timeout=2.0)

    # -- RPC surface

    def _handle_rpc(self, message: dict):
        mtype = message.get("type")
        body = message.get("body") or {}
        if mtype == wire.HEALTH:
            return {"ok": True, "role": "agent",
                    "agent_id": self.config.agent_id,
                    "open_handles": self.predictors.open_handles()}
        if mtype == wire.MODEL_LOAD:
            return self._handle_load(body)
        if mtype == wire.PREDICT:
            out = self.predictors.predict(str(body["handle"]),
                                          tensor_from_wire(body["tensor"]))
            return {"tensor": tensor_to_wire(out)}
        if mtype == wire.MODEL_UNLOAD:
            self.predictors.model_unload(str(body["handle"]))
            return {"ok": True}
        if mtype == wire.RUN_EVALUATION:
            return self._handle_run(body)
        raise EvalGridError(f"unsupported message type {mtype!r}")

    def _handle_load(self, body: dict) -> dict:
        graph = self.cache.fetch(str(body["graph_url"]),
                                 body.get("graph_checksum"))
        weights = None
        if body.get("weights_url"):
            weights = str(self.cache.fetch(str(body["weights_url"]),
                                           body.get("weights_checksum")))
        handle = self.predictors.model_load(OpenRequest(
            model_name=str(body.get("model_name", "")),
            graph_file=str(graph),
            weights_file=weights,
            device=str(body.get("device", self.config.hardware.accelerator)),
            batch_size=int(body.get("batch_size", 1)),
        ))
        return {"handle": handle}

    def _handle_run(self, body: dict):
        request = EvaluationRequest.from_dict(body.get("request") or {})
        manifest = parse_manifest(body["manifest_text"])
        evaluation_id = str(body.get("evaluation_id") or uuid.uuid4().hex)
        orchestrator = str(body.get("orchestrator") or "")
        if body.get("evaluation_id") and orchestrator:
            worker = threading.Thread(
                target=self._run_and_publish,
                args=(evaluation_id, manifest, request, orchestrator),
                daemon=True, name=f"evaluation-{evaluation_id[:8]}")
            worker.start()
            return {"accepted": True, "evaluation_id": evaluation_id,
                    "agent_id": self.config.agent_id}
        result, _, _ = self.run_evaluation(evaluation_id, manifest, request)
        return result.to_dict()

    def _run_and_publish(self, evaluation_id: str, manifest: Manifest,
                         request: EvaluationRequest, orchestrator: str) -> None:
        result, spans, trace_id = self.run_evaluation(
            evaluation_id, manifest, request)
        client = wire.RpcClient.for_endpoint(orchestrator,
                                             timeout=self.config.rpc_timeout)
        try:
            # spans first so the trace is queryable when the result lands
            if spans:
                client.call(wire.PUBLISH_SPANS, {
                    "trace_id": trace_id,
                    "spans": [s.to_dict() for s in spans],
                })
            client.call(wire.PUBLISH_RESULT, {"result": result.to_dict()})
        except (EvalGridError, OSError):
            pass                              # orchestrator gone; nothing to do
        finally:
            client.close()

    # -- the actual work

    def run_evaluation(self, evaluation_id: str, manifest: Manifest,
                       request: EvaluationRequest):
        """Run one evaluation to completion; never raises.

        Returns (result, completed spans, trace_id).
        """
        started = time.time()
        try:
            granularity = TraceLevel[request.trace_granularity.upper()]
        except KeyError:
            granularity = TraceLevel.FRAMEWORK
        tracer = Tracer(granularity=granularity, clock=self._clock)
        trace_id = tracer.new_trace()
        container = ""
        error = None
        predictions: tuple = ()
        latencies: tuple = ()
        try:
            container, predictions, latencies = self._evaluate(
                manifest, request, tracer, trace_id)
            status = SUCCEEDED
        except EvalGridError as exc:
            status = FAILED
            error = {"code": exc.code, "message": exc.message}
        except Exception as exc:  # noqa: BLE001 - agent must answer, not die
            status = FAILED
            error = {"code": "InternalError", "message": repr(exc)}
        spans = self._collect_spans(tracer, trace_id)
        result = EvaluationResult(
            evaluation_id=evaluation_id,
            agent_id=self.config.agent_id,
            model_key=manifest_key(manifest) if manifest.name else "",
            status=status,
            error=error,
            predictions=predictions,
            batch_size=request.batch_size,
            batch_latencies=latencies,
            input_count=len(request.inputs),
            container_image=container,
            trace_id=trace_id,
            framework=self.config.framework,
            framework_version=self.config.framework_version,
            hardware=self.config.hardware.to_dict(),
            started_at=started,
            finished_at=time.time(),
        )
        return result, spans, trace_id

    @staticmethod
    def _collect_spans(tracer: Tracer, trace_id: str) -> list:
        try:
            spans = tracer.trace_spans(trace_id)
        except EvalGridError:
            spans = []                        # filtered out or failed mid-span
        finally:
            tracer.shutdown()
        return spans

    def _labels_for(self, manifest: Manifest) -> Optional[list]:
        for spec in manifest.outputs:
            if spec.features_url:
                raw = self.cache.fetch(spec.features_url).read_bytes()
                return [line.strip() for line in
                        raw.decode("utf-8").splitlines() if line.strip()]
        return None

    def _evaluate(self, manifest: Manifest, request: EvaluationRequest,
                  tracer: Tracer, trace_id: str):
        report = validate_manifest(manifest)
        if not report.ok:
            first = report.errors[0]
            raise EvalGridError(
                f"manifest invalid: {first.path}: {first.message}")
        hw = self.config.hardware
        # recorded so results say what image this work maps to; nothing is
        # launched here, the predictor host stands in for the container
        container = select_container(manifest.containers, hw.arch, hw.accelerator)
        source = manifest.source
        if not source.graph_path:
            raise SchemaError("source.graph_path", "mandatory field is missing")
        graph = self.cache.fetch(source.resolved_graph(), source.graph_checksum)
        weights = None
        if source.weights_path:
            weights = str(self.cache.fetch(source.resolved_weights(),
                                           source.weights_checksum))
        labels = self._labels_for(manifest)
        if not request.inputs:
            raise EvalGridError("evaluation request carries no inputs")
        if request.batch_size < 1:
            raise EvalGridError(f"bad batch size {request.batch_size}")

        handle = self.predictors.model_load(OpenRequest(
            model_name=manifest.name,
            graph_file=str(graph),
            weights_file=weights,
            device=hw.accelerator,
            batch_size=request.batch_size,
        ))
        steps = manifest.inputs[0].steps if manifest.inputs else ()
        predictions: list = []
        latencies: list = []
        root = tracer.begin_span(f"evaluate/{manifest.name}",
                                 TraceLevel.MODEL, trace_id=trace_id)
        try:
            tensors = [run_pipeline(steps, payload, tracer, parent_span=root)
                       for payload in request.inputs]
            for lo in range(0, len(tensors), request.batch_size):
                batch = stack_batch(tensors[lo:lo + request.batch_size])
                t0 = self._clock()
                out = self.predictors.predict(handle, batch,
                                              tracer=tracer, parent_span=root)
                latencies.append(self._clock() - t0)
                for row in top_k(out, request.top_k, labels):
                    predictions.append(tuple(
                        (p.index, p.probability, p.label) for p in row))
        finally:
            tracer.end_span(root)
            self.predictors.model_unload(handle)
        return container, tuple(predictions), tuple(latencies)
