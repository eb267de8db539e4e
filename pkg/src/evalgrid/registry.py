"""Agent and manifest registry kept by the orchestrator.

Agents register with the framework build they can serve plus a hardware
description, then stay alive by heartbeating; an agent whose last heartbeat
is older than the TTL drops out of resolution without being deleted, so a
late heartbeat revives it. Resolution is a pure filter: live agents whose
framework satisfies the manifest constraint and whose hardware matches the
request, returned in stable agent-id order so dispatch is deterministic.

Manifests are stored under framework/name/version (case-normalized).
Publishing the same key again is legal only when the content is identical.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace
from typing import Optional

from .errors import DuplicateKey, UnknownAgent
from .manifest import Manifest, manifest_key, render_manifest
from .semver import SemVer, VersionConstraint


@dataclass(frozen=True)
class HardwareDescriptor:
    arch: str
    accelerator: str = "cpu"
    memory_gb: float = 1.0
    labels: tuple = ()

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "accelerator": self.accelerator,
            "memory_gb": self.memory_gb,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareDescriptor":
        return cls(
            arch=str(d["arch"]),
            accelerator=str(d.get("accelerator", "cpu")),
            memory_gb=float(d.get("memory_gb", 1.0)),
            labels=tuple(d.get("labels", ())),
        )


@dataclass(frozen=True)
class AgentRecord:
    agent_id: str
    framework: str
    framework_version: SemVer
    hardware: HardwareDescriptor
    endpoint: str = ""
    registered_at: float = 0.0
    last_heartbeat: float = 0.0

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "framework": self.framework,
            "framework_version": str(self.framework_version),
            "hardware": self.hardware.to_dict(),
            "endpoint": self.endpoint,
        }


@dataclass(frozen=True)
class ResolutionQuery:
    framework: str
    constraint: VersionConstraint
    arch: Optional[str] = None
    accelerator: Optional[str] = None
    min_memory_gb: Optional[float] = None


DEFAULT_TTL = 30.0
DEFAULT_HEARTBEAT_INTERVAL = 10.0


class InMemoryRegistry:
    """Thread-safe agent + manifest store with TTL-based liveness."""

    def __init__(self, ttl: float = DEFAULT_TTL, clock=time.monotonic):
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        self.ttl = ttl
        self._clock = clock
        self._lock = threading.RLock()
        self._agents: dict = {}
        self._manifests: dict = {}          # key -> (Manifest, canonical text)

    # -- agents

    def register_agent(self, agent_id: str, framework: str,
                       framework_version, hardware: HardwareDescriptor,
                       endpoint: str = "") -> AgentRecord:
        if not agent_id:
            raise UnknownAgent("agent_id must be non-empty")
        version = (framework_version if isinstance(framework_version, SemVer)
                   else SemVer.parse(framework_version))
        now = self._clock()
        record = AgentRecord(
            agent_id=agent_id, framework=framework, framework_version=version,
            hardware=hardware, endpoint=endpoint,
            registered_at=now, last_heartbeat=now,
        )
        with self._lock:
            self._agents[agent_id] = record
        return record

    def heartbeat(self, agent_id: str) -> None:
        with self._lock:
            record = self._agents.get(agent_id)
            if record is None:
                raise UnknownAgent(f"agent {agent_id!r} was never registered")
            self._agents[agent_id] = replace(record, last_heartbeat=self._clock())

    def deregister_agent(self, agent_id: str) -> None:
        with self._lock:
            if self._agents.pop(agent_id, None) is None:
                raise UnknownAgent(f"agent {agent_id!r} was never registered")

    def get_agent(self, agent_id: str) -> AgentRecord:
        with self._lock:
            record = self._agents.get(agent_id)
        if record is None:
            raise UnknownAgent(f"agent {agent_id!r} was never registered")
        return record

    def _is_live(self, record: AgentRecord, now: float) -> bool:
        return now - record.last_heartbeat <= self.ttl

    def live_agents(self) -> list:
        now = self._clock()
        with self._lock:
            records = list(self._agents.values())
        return sorted((r for r in records if self._is_live(r, now)),
                      key=lambda r: r.agent_id)

    def all_agents(self) -> list:
        with self._lock:
            return sorted(self._agents.values(), key=lambda r: r.agent_id)

    def prune(self) -> int:
        """Drop records that have been stale for one extra TTL window."""
        now = self._clock()
        with self._lock:
            stale = [aid for aid, r in self._agents.items()
                     if now - r.last_heartbeat > 2 * self.ttl]
            for aid in stale:
                del self._agents[aid]
        return len(stale)

    def resolve(self, query: ResolutionQuery) -> list:
        """Live agents able to run the model, in stable agent-id order."""
        out = []
        for record in self.live_agents():
            if record.framework.lower() != query.framework.lower():
                continue
            if not query.constraint.matches(record.framework_version):
                continue
            hw = record.hardware
            if query.arch is not None and hw.arch != query.arch:
                continue
            if query.accelerator is not None and hw.accelerator != query.accelerator:
                continue
            if query.min_memory_gb is not None and hw.memory_gb < query.min_memory_gb:
                continue
            out.append(record)
        return out

    # -- manifests

    def put_manifest(self, m: Manifest) -> str:
        key = manifest_key(m)
        text = render_manifest(m)
        with self._lock:
            existing = self._manifests.get(key)
            if existing is not None and existing[1] != text:
                raise DuplicateKey(
                    f"manifest {key!r} already published with different content")
            self._manifests[key] = (m, text)
        return key

    def get_manifest(self, key: str) -> Manifest:
        with self._lock:
            entry = self._manifests.get(key.lower())
        if entry is None:
            raise KeyError(key)
        return entry[0]

    def find_manifests(self, framework: Optional[str] = None,
                       name: Optional[str] = None,
                       task: Optional[str] = None) -> list:
        with self._lock:
            manifests = [m for m, _ in self._manifests.values()]
        out = []
        for m in manifests:
            if framework and m.framework.name.lower() != framework.lower():
                continue
            if name and m.name.lower() != name.lower():
                continue
            if task and m.task != task:
                continue
            out.append(m)
        return sorted(out, key=manifest_key)

    def list_manifest_keys(self) -> list:
        with self._lock:
            return sorted(self._manifests)
