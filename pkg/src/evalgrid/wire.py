"""Socket protocol between orchestrators and agents.

Frames are a 4-byte little-endian length followed by that many bytes of
UTF-8 JSON. Every message is {"type": ..., "id": ..., "body": {...}}; a
reply reuses the request id. Failures travel as type "Error" with
{"code", "message"} in the body and the connection stays usable: a frame
that does not parse gets a ProtocolError reply rather than a hangup.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
import uuid
from typing import Callable, Optional

from .errors import EvalGridError, ProtocolError, error_for_code

MAX_FRAME = 256 * 1024 * 1024  # refuse absurd lengths rather than allocate

# message types
MODEL_LOAD = "ModelLoad"
PREDICT = "Predict"
MODEL_UNLOAD = "ModelUnload"
RUN_EVALUATION = "RunEvaluation"
HEALTH = "Health"
REGISTER_AGENT = "RegisterAgent"
HEARTBEAT = "Heartbeat"
PUBLISH_RESULT = "PublishResult"
PUBLISH_SPANS = "PublishSpans"
ERROR = "Error"


def write_frame(sock: socket.socket, message: dict) -> None:
    payload = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds the cap")
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[dict]:
    """Next message, or None on orderly EOF. Raises ProtocolError on junk."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("<I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds the cap")
    payload = _read_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError("frame must be an object with a type field")
    return message


def request(type_: str, body: dict, id_: Optional[str] = None) -> dict:
    return {"type": type_, "id": id_ or uuid.uuid4().hex, "body": body}


def error_reply(id_: Optional[str], exc: Exception) -> dict:
    if isinstance(exc, EvalGridError):
        code, message = exc.code, exc.message
    else:
        code, message = "Error", f"{type(exc).__name__}: {exc}"
    return {"type": ERROR, "id": id_, "body": {"code": code, "message": message}}


class RpcServer:
    """Threaded frame server: one handler thread per connection.

    handler(msg) returns the reply body, or a full reply dict when it needs
    to set its own type; raising an EvalGridError turns into an Error frame.
    Returning None means "no reply for this message".
    """

    def __init__(self, handler: Callable[[dict], Optional[dict]],
                 host: str = "127.0.0.1", port: int = 0):
        self._handler = handler
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
        except OSError as exc:
            raise EvalGridError(f"cannot bind {host}:{port}: {exc}") from exc
        self._sock.listen(64)
        self.host, self.port = self._sock.getsockname()
        self._closing = threading.Event()
        self._threads: list = []
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"rpc-accept-{self.port}", daemon=True)
        self._accept_thread.start()

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def _accept_loop(self) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_conn(self, conn: socket.socket) -> None:
        with conn:
            while not self._closing.is_set():
                try:
                    message = read_frame(conn)
                except ProtocolError as exc:
                    # malformed input is answered, not fatal to the connection
                    try:
                        write_frame(conn, error_reply(None, exc))
                        continue
                    except OSError:
                        return
                except OSError:
                    return
                if message is None:
                    return
                reply = self._dispatch(message)
                if reply is None or message.get("no_reply"):
                    continue
                try:
                    write_frame(conn, reply)
                except OSError:
                    return

    def _dispatch(self, message: dict) -> Optional[dict]:
        msg_id = message.get("id")
        try:
            out = self._handler(message)
        except Exception as exc:  # noqa: BLE001 - all failures become frames
            return error_reply(msg_id, exc)
        if out is None:
            return None
        if isinstance(out, dict) and "type" in out and "body" in out:
            out.setdefault("id", msg_id)
            return out
        return {"type": f"{message.get('type')}Reply", "id": msg_id, "body": out}

    def close(self) -> None:
        self._closing.set()
        try:
            self._sock.close()
        except OSError:
            pass


class RpcClient:
    """Blocking frame client; one in-flight call at a time per client."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._addr = (host, port)
        self._timeout = timeout
        self._lock = threading.Lock()
        self._sock: Optional[socket.socket] = None

    @classmethod
    def for_endpoint(cls, endpoint: str, timeout: float = 30.0) -> "RpcClient":
        host, _, port = endpoint.rpartition(":")
        return cls(host, int(port), timeout)

    def _ensure(self) -> socket.socket:
        if self._sock is None:
            sock = socket.create_connection(self._addr, timeout=self._timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
        return self._sock

    def call(self, type_: str, body: dict, timeout: Optional[float] = None) -> dict:
        """Send one request and wait for its reply body."""
        message = request(type_, body)
        with self._lock:
            sock = self._ensure()
            if timeout is not None:
                sock.settimeout(timeout)
            try:
                write_frame(sock, message)
                while True:
                    reply = read_frame(sock)
                    if reply is None:
                        raise ProtocolError("connection closed awaiting reply")
                    if reply.get("id") in (message["id"], None):
                        break
            except (OSError, ProtocolError):
                self.close_locked()
                raise
        if reply["type"] == ERROR:
            body = reply.get("body") or {}
            raise error_for_code(body.get("code", "Error"),
                                 body.get("message", "remote error"))
        return reply.get("body") or {}

    def notify(self, type_: str, body: dict) -> None:
        """Fire-and-forget message; no reply expected."""
        message = request(type_, body)
        message["no_reply"] = True
        with self._lock:
            sock = self._ensure()
            try:
                write_frame(sock, message)
            except OSError:
                self.close_locked()
                raise

    def close_locked(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self) -> None:
        with self._lock:
            self.close_locked()
