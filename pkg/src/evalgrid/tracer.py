"""Hierarchical timing traces with tunable granularity.

Spans carry a level describing how deep in the stack they sit; a tracer
configured at granularity g records only spans with level <= g, so turning
profiling down is free at the call site (begin_span hands back a no-op id).

The hot path only captures timestamps and appends to a bounded in-memory
buffer; a background thread moves completed spans into the per-trace store.
When the buffer is full, the least important spans (library and hardware
levels) are evicted first and counted, never blocking the caller.
"""

from __future__ import annotations

import threading
import time
import uuid
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Sequence, Union

from .errors import (
    EndBeforeStart, IncompleteTrace, TraceError, UnknownSpan,
)


class TraceLevel(IntEnum):
    NONE = 0
    MODEL = 1
    FRAMEWORK = 2
    LAYER = 3
    LIBRARY = 4
    HARDWARE = 5


#: Levels sacrificed first when the collection buffer overflows.
_EVICTABLE = (TraceLevel.LIBRARY, TraceLevel.HARDWARE)


@dataclass
class Span:
    span_id: str
    trace_id: str
    name: str
    level: TraceLevel
    begin_us: float
    end_us: Optional[float] = None
    parent_id: Optional[str] = None
    tags: dict = field(default_factory=dict)

    @property
    def duration_us(self) -> float:
        if self.end_us is None:
            raise IncompleteTrace(f"span {self.span_id} ({self.name}) is still open")
        return self.end_us - self.begin_us

    def to_dict(self) -> dict:
        return {
            "id": self.span_id,
            "trace_id": self.trace_id,
            "parent_id": self.parent_id,
            "name": self.name,
            "level": self.level.name,
            "begin_us": self.begin_us,
            "end_us": self.end_us,
            "tags": dict(self.tags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Span":
        level = d["level"]
        level = TraceLevel[level] if isinstance(level, str) else TraceLevel(int(level))
        return cls(
            span_id=str(d["id"]),
            trace_id=str(d["trace_id"]),
            name=str(d["name"]),
            level=level,
            begin_us=float(d["begin_us"]),
            end_us=None if d.get("end_us") is None else float(d["end_us"]),
            parent_id=d.get("parent_id"),
            tags=dict(d.get("tags") or {}),
        )


@dataclass
class SpanNode:
    span: Span
    children: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.span.span_id,
            "name": self.span.name,
            "level": self.span.level.name,
            "begin_us": self.span.begin_us,
            "end_us": self.span.end_us,
            "duration_us": self.span.duration_us,
            "tags": dict(self.span.tags),
            "children": [c.to_dict() for c in self.children],
        }


class Tracer:
    """Records spans against an injectable clock.

    clock returns seconds; timestamps are stored in microseconds. Tests pass
    a virtual clock to make durations deterministic.
    """

    def __init__(self, granularity: TraceLevel = TraceLevel.HARDWARE,
                 clock: Callable[[], float] = time.perf_counter,
                 capacity: int = 4096,
                 sink: Optional[Callable[[Span], None]] = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.granularity = TraceLevel(granularity)
        self._clock = clock
        self._capacity = capacity
        self._sink = sink
        self._cv = threading.Condition()
        self._queue: deque = deque()
        self._active: dict = {}
        self._open_per_trace: Counter = Counter()
        self._store: dict = {}
        self._dropped = 0
        self._draining = False
        self._closed = False
        self._worker = threading.Thread(
            target=self._drain, name="trace-collector", daemon=True)
        self._worker.start()

    # -- hot path

    def now_us(self) -> float:
        return self._clock() * 1e6

    def new_trace(self) -> str:
        return uuid.uuid4().hex

    def begin_span(self, name: str, level: TraceLevel,
                   trace_id: Optional[str] = None,
                   parent_id: Optional[str] = None,
                   tags: Optional[dict] = None) -> Optional[str]:
        """Open a span; returns None (a no-op id) when filtered out."""
        level = TraceLevel(level)
        if level > self.granularity or level == TraceLevel.NONE:
            return None
        begin = self.now_us()
        with self._cv:
            if parent_id is not None:
                parent = self._active.get(parent_id)
                if parent is None:
                    raise UnknownSpan(f"parent span {parent_id} is not open")
                if trace_id is not None and trace_id != parent.trace_id:
                    raise TraceError("parent belongs to a different trace")
                trace_id = parent.trace_id
            if trace_id is None:
                trace_id = uuid.uuid4().hex
            span = Span(
                span_id=uuid.uuid4().hex,
                trace_id=trace_id,
                name=name,
                level=level,
                begin_us=begin,
                parent_id=parent_id,
                tags=dict(tags or {}),
            )
            self._active[span.span_id] = span
            self._open_per_trace[trace_id] += 1
            return span.span_id

    def end_span(self, span_id: Optional[str]) -> None:
        """Close a span. None ids (filtered spans) are accepted and ignored."""
        if span_id is None:
            return
        end = self.now_us()
        with self._cv:
            span = self._active.pop(span_id, None)
            if span is None:
                raise UnknownSpan(f"span {span_id} is not open")
            self._open_per_trace[span.trace_id] -= 1
            if not self._open_per_trace[span.trace_id]:
                del self._open_per_trace[span.trace_id]
            if end < span.begin_us:
                raise EndBeforeStart(
                    f"span {span.name} ends {span.begin_us - end:.1f}us before it begins")
            span.end_us = end
            self._enqueue(span)

    def span(self, name: str, level: TraceLevel, **kw):
        return _SpanContext(self, name, level, kw)

    def _enqueue(self, span: Span) -> None:
        # caller holds the lock
        if len(self._queue) >= self._capacity:
            for i, queued in enumerate(self._queue):
                if queued.level in _EVICTABLE:
                    del self._queue[i]
                    self._dropped += 1
                    break
            else:
                if span.level in _EVICTABLE:
                    self._dropped += 1
                    return
                self._queue.popleft()
                self._dropped += 1
        self._queue.append(span)
        self._cv.notify_all()

    # -- collection

    def _drain(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._closed:
                    self._cv.wait()
                if not self._queue and self._closed:
                    return
                span = self._queue.popleft()
                self._draining = True
            # the sink may be slow (network publisher); it runs here, off the
            # recording hot path, and its failures never kill the collector
            if self._sink is not None:
                try:
                    self._sink(span)
                except Exception:  # noqa: BLE001
                    pass
            with self._cv:
                self._store.setdefault(span.trace_id, []).append(span)
                self._draining = False
                self._cv.notify_all()

    def flush(self, timeout: float = 5.0) -> None:
        with self._cv:
            if not self._cv.wait_for(
                    lambda: not self._queue and not self._draining,
                    timeout=timeout):
                raise TraceError("trace collector did not drain in time")

    @property
    def dropped(self) -> int:
        with self._cv:
            return self._dropped

    def shutdown(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()
        self._worker.join(timeout=5.0)

    # -- export

    def open_spans(self, trace_id: str) -> int:
        with self._cv:
            return self._open_per_trace.get(trace_id, 0)

    def trace_spans(self, trace_id: str) -> list:
        """Flat list of completed spans for shipping elsewhere."""
        self.flush()
        with self._cv:
            if self._open_per_trace.get(trace_id):
                raise IncompleteTrace(
                    f"trace {trace_id} has {self._open_per_trace[trace_id]} open spans")
            spans = self._store.get(trace_id)
            if spans is None:
                raise TraceError(f"unknown trace {trace_id}")
            return list(spans)

    def export_trace(self, trace_id: str) -> list:
        """Validated span tree for one trace, children ordered by begin time."""
        return assemble_trace(self.trace_spans(trace_id))


class _SpanContext:
    def __init__(self, tracer, name, level, kw):
        self._tracer, self._name, self._level, self._kw = tracer, name, level, kw
        self.span_id = None

    def __enter__(self):
        self.span_id = self._tracer.begin_span(self._name, self._level, **self._kw)
        return self.span_id

    def __exit__(self, *exc):
        self._tracer.end_span(self.span_id)
        return False


def assemble_trace(spans: Sequence[Span]) -> list:
    """Build the span tree, enforcing parent linkage and interval containment."""
    nodes = {}
    for span in spans:
        if span.end_us is None:
            raise IncompleteTrace(f"span {span.span_id} ({span.name}) is still open")
        if span.span_id in nodes:
            raise TraceError(f"duplicate span id {span.span_id}")
        nodes[span.span_id] = SpanNode(span)
    roots = []
    for node in nodes.values():
        pid = node.span.parent_id
        if pid is None:
            roots.append(node)
            continue
        parent = nodes.get(pid)
        if parent is None:
            raise TraceError(
                f"span {node.span.span_id} ({node.span.name}) references "
                f"missing parent {pid}")
        if (node.span.begin_us < parent.span.begin_us
                or node.span.end_us > parent.span.end_us):
            raise TraceError(
                f"span {node.span.name} [{node.span.begin_us}, {node.span.end_us}] "
                f"is not contained in parent {parent.span.name} "
                f"[{parent.span.begin_us}, {parent.span.end_us}]")
        parent.children.append(node)
    # stable sort: spans that begin at the same tick keep arrival order
    for node in nodes.values():
        node.children.sort(key=lambda n: n.span.begin_us)
    roots.sort(key=lambda n: n.span.begin_us)
    return roots


def _walk(nodes):
    for node in nodes:
        yield node.span
        yield from _walk(node.children)


def aggregate_layers(trace: Union[Sequence[Span], Sequence[SpanNode]],
                     level: TraceLevel = TraceLevel.LAYER) -> dict:
    """Per-name duration stats (microseconds) for spans at one level."""
    spans = list(trace)
    if spans and isinstance(spans[0], SpanNode):
        spans = list(_walk(spans))
    groups: dict = {}
    for span in spans:
        if span.level != level:
            continue
        groups.setdefault(span.name, []).append(span.duration_us)
    return {
        name: {
            "count": len(ds),
            "mean_us": sum(ds) / len(ds),
            "min_us": min(ds),
            "max_us": max(ds),
        }
        for name, ds in sorted(groups.items())
    }


class VirtualClock:
    """Deterministic, manually-advanced clock for tests."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += seconds

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)
