from __future__ import annotations

import random

import pytest

from evalgrid.errors import DuplicateKey, UnknownAgent
from evalgrid.manifest import parse_manifest
from evalgrid.registry import (
    HardwareDescriptor, InMemoryRegistry, ResolutionQuery,
)
from evalgrid.semver import VersionConstraint

from .oracles import oracle_resolve, random_constraint, random_version


class FakeClock:
    def __init__(self, now=1000.0):
        self.now = now

    def __call__(self):
        return self.now


def make_registry(ttl=30.0):
    clock = FakeClock()
    return InMemoryRegistry(ttl=ttl, clock=clock), clock


CPU = HardwareDescriptor(arch="amd64", accelerator="cpu", memory_gb=4.0)
GPU = HardwareDescriptor(arch="amd64", accelerator="gpu", memory_gb=16.0,
                         labels=("p2.xlarge",))
ARM = HardwareDescriptor(arch="arm64", accelerator="cpu", memory_gb=2.0)


def test_register_and_lookup():
    reg, _ = make_registry()
    record = reg.register_agent("a1", "refnn", "1.13.0", CPU, "127.0.0.1:9000")
    assert record.agent_id == "a1"
    assert str(record.framework_version) == "1.13.0"
    assert reg.get_agent("a1").endpoint == "127.0.0.1:9000"
    assert [r.agent_id for r in reg.live_agents()] == ["a1"]


def test_reregistration_updates_in_place():
    reg, _ = make_registry()
    reg.register_agent("a1", "refnn", "1.10.0", CPU, "host:1")
    reg.register_agent("a1", "refnn", "1.12.0", GPU, "host:2")
    record = reg.get_agent("a1")
    assert str(record.framework_version) == "1.12.0"
    assert record.endpoint == "host:2"
    assert record.hardware.accelerator == "gpu"
    assert len(reg.all_agents()) == 1


def test_heartbeat_unknown_agent():
    reg, _ = make_registry()
    with pytest.raises(UnknownAgent):
        reg.heartbeat("ghost")


def test_ttl_liveness_and_revival():
    reg, clock = make_registry(ttl=30.0)
    reg.register_agent("a1", "refnn", "1.13.0", CPU, "e")
    clock.now += 29.0
    assert [r.agent_id for r in reg.live_agents()] == ["a1"]
    clock.now += 2.0  # 31 s without a heartbeat: past the ttl
    assert reg.live_agents() == []
    reg.heartbeat("a1")  # a late heartbeat brings it back
    assert [r.agent_id for r in reg.live_agents()] == ["a1"]


def test_prune_drops_long_dead_agents():
    reg, clock = make_registry(ttl=30.0)
    reg.register_agent("dead", "refnn", "1.13.0", CPU, "e")
    clock.now += 61.0
    reg.register_agent("alive", "refnn", "1.13.0", CPU, "e")
    reg.prune()
    ids = [r.agent_id for r in reg.all_agents()]
    assert ids == ["alive"]


def test_deregister():
    reg, _ = make_registry()
    reg.register_agent("a1", "refnn", "1.13.0", CPU, "e")
    reg.deregister_agent("a1")
    assert reg.all_agents() == []
    with pytest.raises(UnknownAgent):
        reg.deregister_agent("a1")


def query(framework="refnn", constraint="x", **kw):
    return ResolutionQuery(framework=framework,
                           constraint=VersionConstraint.parse(constraint), **kw)


def test_resolve_filters():
    reg, clock = make_registry(ttl=30.0)
    reg.register_agent("cpu-old", "refnn", "1.10.0", CPU, "e")
    reg.register_agent("gpu-new", "refnn", "1.13.0", GPU, "e")
    reg.register_agent("arm", "refnn", "1.13.0", ARM, "e")
    reg.register_agent("other", "torch", "1.13.0", CPU, "e")

    def ids(q):
        return [r.agent_id for r in reg.resolve(q)]

    assert ids(query()) == ["arm", "cpu-old", "gpu-new"]
    assert ids(query(framework="REFNN")) == ["arm", "cpu-old", "gpu-new"]
    assert ids(query(constraint="^1.12")) == ["arm", "gpu-new"]
    assert ids(query(accelerator="gpu")) == ["gpu-new"]
    assert ids(query(arch="arm64")) == ["arm"]
    assert ids(query(min_memory_gb=8.0)) == ["gpu-new"]
    assert ids(query(framework="torch")) == ["other"]
    assert ids(query(constraint="2.x")) == []

    clock.now += 31.0
    reg.heartbeat("gpu-new")
    assert ids(query()) == ["gpu-new"]  # the others went stale


def test_resolve_matches_brute_force_oracle():
    rng = random.Random(0x5EED)
    archs = ["amd64", "arm64", "ppc64le"]
    accels = ["cpu", "gpu"]
    frameworks = ["refnn", "torch", "Nnlib"]
    for _ in range(60):
        reg, clock = make_registry(ttl=30.0)
        agents = []
        for i in range(rng.randrange(1, 25)):
            agent = {
                "agent_id": f"a{i:02d}",
                "framework": rng.choice(frameworks),
                "framework_version": random_version(rng),
                "arch": rng.choice(archs),
                "accelerator": rng.choice(accels),
                "memory_gb": rng.choice([1.0, 4.0, 16.0, 64.0]),
                "last_heartbeat": 1000.0 + rng.uniform(-45.0, 0.0),
            }
            agents.append(agent)
            clock.now = agent["last_heartbeat"]
            reg.register_agent(
                agent["agent_id"], agent["framework"],
                agent["framework_version"],
                HardwareDescriptor(arch=agent["arch"],
                                   accelerator=agent["accelerator"],
                                   memory_gb=agent["memory_gb"]),
                "endpoint")
        clock.now = 1000.0
        for _ in range(10):
            framework = rng.choice(frameworks)
            constraint = random_constraint(rng)
            arch = rng.choice([None, *archs])
            accelerator = rng.choice([None, *accels])
            min_memory = rng.choice([None, 2.0, 8.0, 32.0])
            got = [r.agent_id for r in reg.resolve(ResolutionQuery(
                framework=framework,
                constraint=VersionConstraint.parse(constraint),
                arch=arch, accelerator=accelerator,
                min_memory_gb=min_memory))]
            want = oracle_resolve(agents, framework, constraint,
                                  arch=arch, accelerator=accelerator,
                                  min_memory_gb=min_memory,
                                  now=1000.0, ttl=30.0)
            assert got == want, (constraint, arch, accelerator, min_memory)


MANIFEST_TEMPLATE = """\
name: {name}
version: {version}
task: classification
license: MIT
description: registry test fixture
framework:
  name: {framework}
  version: ^1.0
container:
  amd64: repo/img:1
inputs:
  - type: image
    element_type: uint8
    steps:
      decode: {{}}
outputs:
  - type: probability
    element_type: float32
source:
  graph_path: g.json
"""


def manifest(name="ModelA", version="1.0.0", framework="refnn"):
    return parse_manifest(MANIFEST_TEMPLATE.format(
        name=name, version=version, framework=framework))


def test_manifest_store_roundtrip():
    reg, _ = make_registry()
    key = reg.put_manifest(manifest())
    assert key == "refnn/modela/1.0.0"
    assert reg.get_manifest(key).name == "ModelA"
    assert reg.get_manifest("REFNN/MODELA/1.0.0").name == "ModelA"
    with pytest.raises(KeyError):
        reg.get_manifest("refnn/other/1.0.0")


def test_manifest_duplicate_rules():
    reg, _ = make_registry()
    reg.put_manifest(manifest())
    reg.put_manifest(manifest())  # identical content is idempotent
    changed = parse_manifest(MANIFEST_TEMPLATE.format(
        name="ModelA", version="1.0.0", framework="refnn").replace(
        "registry test fixture", "different words"))
    with pytest.raises(DuplicateKey):
        reg.put_manifest(changed)


def test_find_manifests_filters():
    reg, _ = make_registry()
    reg.put_manifest(manifest("A", "1.0.0", "refnn"))
    reg.put_manifest(manifest("B", "1.0.0", "refnn"))
    reg.put_manifest(manifest("A", "2.0.0", "torch"))
    assert [m.name for m in reg.find_manifests(framework="refnn")] == ["A", "B"]
    # results come back in key order: refnn/a/1.0.0 before torch/a/2.0.0
    assert [str(m.version) for m in reg.find_manifests(name="A")] \
        == ["1.0.0", "2.0.0"]
    keys = reg.list_manifest_keys()
    assert keys == sorted(keys)
    assert len(reg.find_manifests(task="classification")) == 3
    assert reg.find_manifests(task="object_detection") == []
