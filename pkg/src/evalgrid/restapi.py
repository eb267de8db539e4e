"""JSON/HTTP front of the orchestrator, plus static hosting for the web UI.

Every route is a thin adapter over Orchestrator methods; the REST layer owns
no state of its own, so any number of concurrent requests see one shared
store. Domain errors map onto HTTP statuses by error code and keep their
{code, message} body shape; unexpected exceptions become a 500 without
killing the server thread.

Routes:
    GET  /health
    GET  /models                 published manifests, one row per key
    GET  /models/{key}           manifest detail + rendered text
    POST /manifests              body {"manifest_text": ...} -> {"key": ...}
    GET  /agents                 live agents; optional resolve-style filters
    POST /evaluations            EvaluationRequest body -> 202 {"evaluation_id"}
    GET  /evaluations            history; filters model_key/agent_id/status/
                                 framework_constraint
    GET  /evaluations/{id}       results + pending agents
    GET  /evaluations/{id}/summary
    GET  /traces/{id}            span tree + flat span list

Anything else is served from the static directory when one is configured,
which is how the dashboard bundle ships.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from .errors import BindFailure, EvalGridError
from .manifest import manifest_key, render_manifest
from .orchestrator import EvaluationRequest, Orchestrator
from .registry import ResolutionQuery
from .semver import VersionConstraint

_STATUS_BY_CODE = {
    "NoAgentSatisfiesConstraints": 409,
    "UnknownEvaluation": 404,
    "UnknownAgent": 404,
    "TraceError": 404,
    "DuplicateKey": 409,
}


def _agent_row(record) -> dict:
    return record.to_dict()


def _model_row(m) -> dict:
    return {
        "key": manifest_key(m),
        "name": m.name,
        "version": str(m.version) if m.version else "",
        "task": m.task,
        "framework": m.framework.name,
        "framework_constraint": str(m.framework.constraint)
        if m.framework.constraint else "",
        "description": m.description,
    }


class RestApi:
    """HTTP server bound to one orchestrator; start() is non-blocking."""

    def __init__(self, orchestrator: Orchestrator,
                 host: str = "127.0.0.1", port: int = 0,
                 static_dir: Optional[str] = None):
        self.orchestrator = orchestrator
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        try:
            self._httpd = ThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._httpd.api = self
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="rest-api", daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread.start()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    # -- route bodies; each returns (status, payload)

    def handle_get(self, path: str, query: dict):
        orch = self.orchestrator
        if path == "/health":
            return 200, {"ok": True, "role": "orchestrator",
                         "rpc_endpoint": orch.endpoint}
        if path == "/models":
            keys = orch.registry.list_manifest_keys()
            return 200, [_model_row(orch.registry.get_manifest(k)) for k in keys]
        if path.startswith("/models/"):
            key = path[len("/models/"):]
            try:
                m = orch.registry.get_manifest(key)
            except KeyError:
                return 404, {"code": "UnknownModel",
                             "message": f"no manifest published under {key!r}"}
            row = _model_row(m)
            row["manifest_text"] = render_manifest(m)
            return 200, row
        if path == "/agents":
            if "framework" in query:
                constraint = VersionConstraint.parse(
                    query.get("constraint", ["x"])[0])
                records = orch.registry.resolve(ResolutionQuery(
                    framework=query["framework"][0],
                    constraint=constraint,
                    arch=query.get("arch", [None])[0],
                    accelerator=query.get("accelerator", [None])[0],
                    min_memory_gb=float(query["min_memory_gb"][0])
                    if "min_memory_gb" in query else None,
                ))
            else:
                records = orch.registry.live_agents()
            return 200, [_agent_row(r) for r in records]
        if path == "/evaluations":
            results = orch.query_history(
                model_key=query.get("model_key", [None])[0],
                agent_id=query.get("agent_id", [None])[0],
                status=query.get("status", [None])[0],
                framework_constraint=query.get("framework_constraint", [None])[0],
            )
            return 200, [r.to_dict() for r in results]
        if path.startswith("/evaluations/") and path.endswith("/summary"):
            evaluation_id = path[len("/evaluations/"):-len("/summary")]
            summaries = orch.summarize(evaluation_id)
            return 200, [s.to_dict() for s in summaries]
        if path.startswith("/evaluations/"):
            evaluation_id = path[len("/evaluations/"):]
            return 200, orch.get_evaluation(evaluation_id)
        if path.startswith("/traces/"):
            trace_id = path[len("/traces/"):]
            roots = orch.get_trace(trace_id)
            flat = orch.get_trace_spans(trace_id)
            return 200, {
                "trace_id": trace_id,
                "roots": [n.to_dict() for n in roots],
                "spans": [s.to_dict() for s in flat],
            }
        return None

    def handle_post(self, path: str, body: dict):
        orch = self.orchestrator
        if path == "/manifests":
            key = orch.publish_manifest(str(body.get("manifest_text", "")))
            return 201, {"key": key}
        if path == "/evaluations":
            request = EvaluationRequest.from_dict(body)
            evaluation_id = orch.submit(request)
            return 202, {"evaluation_id": evaluation_id}
        return None

    def read_static(self, path: str):
        if self.static_dir is None:
            return None
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir)):
            return None                       # path escape attempt
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return None
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        return ctype, target.read_bytes()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def api(self) -> RestApi:
        return self.server.api

    def log_message(self, fmt, *args):       # quiet by default
        pass

    def _send_json(self, status: int, payload) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_error_for(self, exc: Exception) -> None:
        if isinstance(exc, EvalGridError):
            status = _STATUS_BY_CODE.get(exc.code, 400)
            self._send_json(status, {"code": exc.code, "message": exc.message})
        else:
            self._send_json(500, {"code": "InternalError", "message": repr(exc)})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            parsed = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EvalGridError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise EvalGridError("request body must be a JSON object")
        return parsed

    def do_GET(self) -> None:
        parts = urlsplit(self.path)
        path = parts.path.rstrip("/") or "/"
        try:
            outcome = self.api.handle_get(path, parse_qs(parts.query))
            if outcome is not None:
                self._send_json(*outcome)
                return
            static = self.api.read_static(parts.path)
            if static is not None:
                ctype, data = static
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                return
            self._send_json(404, {"code": "NotFound",
                                  "message": f"no route for {path}"})
        except Exception as exc:  # noqa: BLE001 - every error becomes a reply
            self._send_error_for(exc)

    def do_POST(self) -> None:
        parts = urlsplit(self.path)
        path = parts.path.rstrip("/") or "/"
        try:
            outcome = self.api.handle_post(path, self._read_body())
            if outcome is not None:
                self._send_json(*outcome)
                return
            self._send_json(404, {"code": "NotFound",
                                  "message": f"no route for {path}"})
        except Exception as exc:  # noqa: BLE001
            self._send_error_for(exc)
