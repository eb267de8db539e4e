"""Predictor host: the three-call surface every framework shim implements.

model_load opens a model from local graph/weights files and returns an opaque
handle; predict runs a batch through that handle; model_unload closes it,
waiting out any predicts still in flight. Everything a caller can observe
goes through those three calls, which is what lets agents treat frameworks
interchangeably.

Three reference model kinds ship under the "refnn" framework, selected by the
"kind" field of the JSON graph file:

  linear_softmax     dense layer + softmax read from a binary weights file
  channel_mean       softmax over per-channel means; probes color handling
  synthetic_profile  replays a declared per-layer timing table, emitting
                     layer-level spans while actually sleeping

Byte tensors handed to predict are widened with the standard x/255
conversion, so a pipeline that skips cast_float still reaches the same
scale the model was written for.
"""

from __future__ import annotations

import json
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    BadWeights, ClosedHandle, DeviceUnavailable, NoPredictor, PredictError,
    ShapeMismatch,
)
from .tensor import FLOAT32, UINT8, Tensor
from .tracer import TraceLevel

REFERENCE_FRAMEWORK = "refnn"
#: versions reference agents may advertise; lets constraint routing be exercised
REFERENCE_VERSIONS = ("1.10.0", "1.11.0", "1.12.0", "1.13.0")


@dataclass(frozen=True)
class OpenRequest:
    model_name: str
    graph_file: str
    weights_file: Optional[str] = None
    device: str = "cpu"
    batch_size: int = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically-stable softmax over the last axis, float32 throughout."""
    z = logits.astype(np.float32, copy=False)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_float_batch(tensor: Tensor) -> np.ndarray:
    """Batch-first float32 view; bytes get the canonical x/255 widening."""
    data = tensor.data
    if tensor.element_type == UINT8:
        data = data.astype(np.float32) / np.float32(255.0)
    if data.ndim == 3:
        data = data[None, ...]
    return data


# --- weights codec -------------------------------------------------------------

def write_weights(path: str, weight: np.ndarray, bias: np.ndarray) -> None:
    """rows/cols as uint32 LE, then the float32 LE matrix row-major, then bias."""
    weight = np.asarray(weight, dtype="<f4")
    bias = np.asarray(bias, dtype="<f4")
    rows, cols = weight.shape
    if bias.shape != (rows,):
        raise BadWeights(f"bias has {bias.shape[0]} entries for {rows} rows")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", rows, cols))
        fh.write(weight.tobytes())
        fh.write(bias.tobytes())


def read_weights(path: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise BadWeights(f"cannot read weights file: {exc}") from exc
    if len(blob) < 8:
        raise BadWeights("weights file is shorter than its header")
    rows, cols = struct.unpack_from("<II", blob, 0)
    expected = 8 + 4 * (rows * cols + rows)
    if len(blob) != expected:
        raise BadWeights(
            f"weights file is {len(blob)} bytes, expected {expected} "
            f"for a {rows}x{cols} layer")
    weight = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=8)
    bias = np.frombuffer(blob, dtype="<f4", count=rows, offset=8 + 4 * rows * cols)
    return (weight.reshape(rows, cols).astype(np.float32),
            bias.astype(np.float32))


# --- reference models -----------------------------------------------------------

class _LinearSoftmax:
    def __init__(self, graph: dict, req: OpenRequest):
        if not req.weights_file:
            raise BadWeights("linear_softmax requires a weights file")
        self.weight, self.bias = read_weights(req.weights_file)
        declared = graph.get("classes")
        if declared is not None and declared != self.weight.shape[0]:
            raise BadWeights(
                f"graph declares {declared} classes, weights have "
                f"{self.weight.shape[0]}")

    def forward(self, tensor: Tensor, tracer, parent) -> Tensor:
        batched = _as_float_batch(tensor)
        x = batched.reshape(batched.shape[0], -1)
        if x.shape[1] != self.weight.shape[1]:
            raise ShapeMismatch(
                f"input flattens to {x.shape[1]} features, weights expect "
                f"{self.weight.shape[1]}")
        span = None
        if tracer is not None:
            span = tracer.begin_span("dense", TraceLevel.LAYER, parent_id=parent)
        logits = x @ self.weight.T + self.bias
        if tracer is not None:
            tracer.end_span(span)
        return Tensor(softmax(logits), tensor.layout)


class _ChannelMean:
    def __init__(self, graph: dict, req: OpenRequest):
        self.classes = int(graph.get("classes", 3))

    def forward(self, tensor: Tensor, tracer, parent) -> Tensor:
        axis = tensor.channel_axis
        data = _as_float_batch(tensor)
        axis = axis + 1 if len(tensor.shape) == 3 else axis
        if data.shape[axis] != self.classes:
            raise ShapeMismatch(
                f"channel_mean expects {self.classes} channels, got {data.shape[axis]}")
        reduce_over = tuple(i for i in range(1, data.ndim) if i != axis)
        means = data.mean(axis=reduce_over, dtype=np.float32)
        return Tensor(softmax(means), tensor.layout)


class _SyntheticProfile:
    def __init__(self, graph: dict, req: OpenRequest):
        self.classes = int(graph.get("classes", 3))
        self.layers = []
        for i, entry in enumerate(graph.get("layers", ())):
            name = str(entry.get("name", f"layer{i}"))
            duration_us = float(entry.get("duration_us", 0.0))
            level = getattr(TraceLevel, str(entry.get("level", "LAYER")).upper())
            self.layers.append((name, duration_us, level))

    def forward(self, tensor: Tensor, tracer, parent,
                sleeper: Callable[[float], None]) -> Tensor:
        for name, duration_us, level in self.layers:
            span = None
            if tracer is not None:
                span = tracer.begin_span(name, level, parent_id=parent)
            sleeper(duration_us / 1e6)
            if tracer is not None:
                tracer.end_span(span)
        batch = tensor.shape[0] if len(tensor.shape) == 4 else 1
        return Tensor(softmax(np.zeros((batch, self.classes), dtype=np.float32)),
                      tensor.layout)


_MODEL_KINDS = {
    "linear_softmax": _LinearSoftmax,
    "channel_mean": _ChannelMean,
    "synthetic_profile": _SyntheticProfile,
}


# --- the host --------------------------------------------------------------------

@dataclass
class _Slot:
    model: object
    request: OpenRequest
    in_flight: int = 0
    closing: bool = False
    idle: threading.Condition = field(default_factory=threading.Condition)


class PredictorHost:
    """Owns the handle table; thread-safe, one instance per agent process."""

    def __init__(self, devices: tuple = ("cpu",),
                 sleeper: Callable[[float], None] = time.sleep):
        self._devices = tuple(devices)
        self._sleeper = sleeper
        self._lock = threading.Lock()
        self._slots: dict = {}
        self._counter = 0

    def model_load(self, request: OpenRequest) -> str:
        if request.device not in self._devices:
            raise DeviceUnavailable(
                f"device {request.device!r} not present (have {self._devices})")
        try:
            with open(request.graph_file, "r", encoding="utf-8") as fh:
                graph = json.load(fh)
        except OSError as exc:
            raise BadWeights(f"cannot read graph file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise BadWeights(f"graph file is not valid JSON: {exc}") from exc
        if not isinstance(graph, dict):
            raise BadWeights("graph file must hold a JSON object")
        kind = graph.get("kind")
        model_cls = _MODEL_KINDS.get(kind)
        if model_cls is None:
            raise NoPredictor(f"no predictor for model kind {kind!r}")
        model = model_cls(graph, request)
        with self._lock:
            self._counter += 1
            handle = f"h{self._counter:04d}"
            self._slots[handle] = _Slot(model=model, request=request)
        return handle

    def predict(self, handle: str, tensor: Tensor,
                tracer=None, parent_span: Optional[str] = None) -> Tensor:
        with self._lock:
            slot = self._slots.get(handle)
            if slot is None or slot.closing:
                raise ClosedHandle(f"handle {handle!r} is not open")
            with slot.idle:
                slot.in_flight += 1
        span = None
        if tracer is not None:
            span = tracer.begin_span("forward", TraceLevel.FRAMEWORK,
                                     parent_id=parent_span)
        try:
            model = slot.model
            if isinstance(model, _SyntheticProfile):
                out = model.forward(tensor, tracer, span or parent_span, self._sleeper)
            else:
                out = model.forward(tensor, tracer, span or parent_span)
            if out.element_type != FLOAT32:
                raise PredictError("model produced a non-float output")
            return out
        finally:
            if tracer is not None:
                tracer.end_span(span)
            with slot.idle:
                slot.in_flight -= 1
                slot.idle.notify_all()

    def model_unload(self, handle: str, timeout: float = 30.0) -> None:
        """Close the handle; blocks until in-flight predicts finish."""
        with self._lock:
            slot = self._slots.get(handle)
            if slot is None or slot.closing:
                raise ClosedHandle(f"handle {handle!r} is not open")
            slot.closing = True
        with slot.idle:
            if not slot.idle.wait_for(lambda: slot.in_flight == 0, timeout=timeout):
                raise PredictError(f"predicts still in flight on {handle!r}")
        with self._lock:
            self._slots.pop(handle, None)

    def open_handles(self) -> list:
        with self._lock:
            return sorted(h for h, s in self._slots.items() if not s.closing)
