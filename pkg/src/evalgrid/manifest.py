"""Evaluation manifests: parse, validate, render, and canonically identify.

A manifest is a UTF-8 YAML document describing one model evaluation: identity
(name/version/task), the framework and its version constraint, per-arch
containers, environment variables, input/output tensor specs with optional
declarative preprocessing steps, and the model source URLs. The document
shape::

    name: Inception-v3
    version: 1.0.0
    task: classification
    framework:
      name: TensorFlow
      version: ^1.x
    container:
      amd64:
        cpu: repo/tensorflow:1-13-0_amd64-cpu
        gpu: repo/tensorflow:1-13-0_amd64-gpu
      arm64: repo/tensorflow:1-13-0_arm64-cpu
    envvars:
      - TF_ENABLE_WINOGRAD_NONFUSED: 0
    inputs:
      - type: image
        layer_name: data
        element_type: float32
        steps:
          decode: {element_type: uint8, data_layout: NHWC, color_layout: RGB}
          crop: {method: center, percentage: 87.5}
          resize: {dimensions: [3, 299, 299], method: bilinear, keep_aspect_ratio: true}
          mean: [127.5, 127.5, 127.5]
          rescale: 127.5
    outputs:
      - type: probability
        layer_name: prob
        element_type: float32
    source:
      graph_path: https://host/inception_v3.pb

Free-form embedded pre-/post-processing scripts are parsed and carried as
opaque text (an extension hook) but never executed. Unknown top-level keys
are preserved into `attributes` and reported as warnings, not errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import yaml

from .errors import ManifestSyntaxError, NoContainerForArch, SchemaError
from .semver import SemVer, VersionConstraint
from .tensor import FLOAT32, NCHW, NHWC, UINT8

ARCHITECTURES = ("amd64", "arm64", "ppc64le")
ACCELERATORS = ("cpu", "gpu")
MODALITIES = ("image", "box", "probability", "class", "mask", "raw")
COLOR_LAYOUTS = ("RGB", "BGR")

_LAYOUT_ALIASES = {"NCHW": NCHW, "NHWC": NHWC, "CHW": NCHW, "HWC": NHWC}


# --- pipeline steps ----------------------------------------------------------

@dataclass(frozen=True)
class DecodeStep:
    element_type: str = UINT8
    data_layout: str = NHWC
    color_layout: str = "RGB"
    kind = "decode"


@dataclass(frozen=True)
class CropStep:
    percentage: float
    method: str = "center"
    kind = "crop"


@dataclass(frozen=True)
class ResizeStep:
    dimensions: tuple[int, int, int]  # [C, H, W]
    method: str = "bilinear"
    keep_aspect_ratio: bool = False
    kind = "resize"


@dataclass(frozen=True)
class MeanStep:
    values: tuple[float, ...]  # scalar -> length 1, per-channel -> length C
    kind = "mean"


@dataclass(frozen=True)
class RescaleStep:
    value: float
    kind = "rescale"


@dataclass(frozen=True)
class LayoutConvertStep:
    target: str
    kind = "layout_convert"


@dataclass(frozen=True)
class CastFloatStep:
    kind = "cast_float"


@dataclass(frozen=True)
class CastByteStep:
    kind = "cast_byte"


PipelineStep = Union[DecodeStep, CropStep, ResizeStep, MeanStep, RescaleStep,
                     LayoutConvertStep, CastFloatStep, CastByteStep]


# --- manifest types ----------------------------------------------------------

@dataclass(frozen=True)
class Framework:
    name: str
    constraint: Optional[VersionConstraint] = None


@dataclass(frozen=True)
class IOSpec:
    modality: str
    layer_name: Union[str, int, None] = None
    element_type: Optional[str] = None
    layout: Optional[str] = None
    color_layout: Optional[str] = None
    features_url: Optional[str] = None
    steps: tuple[PipelineStep, ...] = ()


@dataclass(frozen=True)
class Source:
    graph_path: Optional[str] = None
    weights_path: Optional[str] = None
    base_url: Optional[str] = None
    graph_checksum: Optional[str] = None
    weights_checksum: Optional[str] = None

    def resolved_graph(self) -> Optional[str]:
        return _join_base(self.base_url, self.graph_path)

    def resolved_weights(self) -> Optional[str]:
        return _join_base(self.base_url, self.weights_path)


def _join_base(base: Optional[str], path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    if base and "://" not in path:
        return base.rstrip("/") + "/" + path.lstrip("/")
    return path


ContainerMap = dict  # arch -> image ref or {"cpu": ref, "gpu": ref}


@dataclass(frozen=True)
class Manifest:
    name: str = ""
    version: Optional[SemVer] = None
    task: str = ""
    framework: Framework = Framework("")
    license: str = ""
    description: str = ""
    containers: ContainerMap = field(default_factory=dict)
    envvars: tuple[tuple[str, str], ...] = ()
    inputs: tuple[IOSpec, ...] = ()
    outputs: tuple[IOSpec, ...] = ()
    source: Source = Source()
    references: tuple[str, ...] = ()
    preprocessing_script: Optional[str] = None
    postprocessing_script: Optional[str] = None
    attributes: dict = field(default_factory=dict)
    # bookkeeping for validation warnings; not part of manifest identity
    unknown_keys: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # ERROR | WARNING
    path: str
    message: str


class ValidationReport(list):
    @property
    def errors(self) -> list:
        return [i for i in self if i.severity == "ERROR"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def render(self) -> str:
        if not self:
            return "valid"
        return "\n".join(f"{i.severity} {i.path}: {i.message}" for i in self)


# --- parsing -----------------------------------------------------------------

_KNOWN_TOP = {
    "name", "version", "task", "license", "description", "framework",
    "container", "containers", "envvars", "inputs", "outputs", "source",
    "attributes", "references", "training_dataset",
    "pre-processing", "post-processing",
}


def _want(value, types, path):
    if not isinstance(value, types):
        names = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        raise SchemaError(path, f"expected {names}, got {type(value).__name__}")
    return value


def _scalar_str(value, path) -> str:
    if isinstance(value, (str, int, float, bool)):
        return str(value)
    raise SchemaError(path, f"expected scalar, got {type(value).__name__}")


def parse_manifest(text: str) -> Manifest:
    """Parse a manifest document.

    Raises ManifestSyntaxError for malformed YAML and SchemaError when a
    known field carries the wrong type. Missing mandatory fields do not
    raise here; validate_manifest reports them.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ManifestSyntaxError(f"malformed manifest document: {exc}") from exc
    if doc is None:
        raise ManifestSyntaxError("empty manifest document")
    if not isinstance(doc, dict):
        raise ManifestSyntaxError(
            f"manifest root must be a mapping, got {type(doc).__name__}")

    name = _scalar_str(doc["name"], "name") if "name" in doc else ""
    task = _scalar_str(doc["task"], "task") if "task" in doc else ""
    license_ = _scalar_str(doc["license"], "license") if "license" in doc else ""
    description = _scalar_str(doc["description"], "description") if "description" in doc else ""

    version = None
    if "version" in doc:
        try:
            version = SemVer.parse(_scalar_str(doc["version"], "version"))
        except ValueError as exc:
            raise SchemaError("version", str(exc)) from exc

    framework = Framework("")
    if "framework" in doc:
        fw = _want(doc["framework"], dict, "framework")
        fw_name = _scalar_str(fw["name"], "framework.name") if "name" in fw else ""
        constraint = None
        if "version" in fw:
            try:
                constraint = VersionConstraint.parse(_scalar_str(fw["version"], "framework.version"))
            except ValueError as exc:
                raise SchemaError("framework.version", str(exc)) from exc
        framework = Framework(fw_name, constraint)

    containers = _parse_containers(doc.get("container", doc.get("containers")))
    envvars = _parse_envvars(doc.get("envvars"))
    inputs = _parse_iospecs(doc.get("inputs"), "inputs", allow_steps=True)
    outputs = _parse_iospecs(doc.get("outputs"), "outputs", allow_steps=True)
    source = _parse_source(doc.get("source"))

    references: tuple[str, ...] = ()
    if "references" in doc and doc["references"] is not None:
        refs = _want(doc["references"], list, "references")
        references = tuple(_scalar_str(r, f"references[{i}]") for i, r in enumerate(refs))

    attributes: dict = {}
    if "attributes" in doc and doc["attributes"] is not None:
        attrs = _want(doc["attributes"], dict, "attributes")
        for k, v in attrs.items():
            attributes[str(k)] = _flatten_attr(v)
    if "training_dataset" in doc:
        td = doc["training_dataset"]
        if isinstance(td, dict):
            if "name" in td:
                attributes["training_dataset"] = _scalar_str(td["name"], "training_dataset.name")
            if "version" in td:
                attributes["training_dataset_version"] = _scalar_str(
                    td["version"], "training_dataset.version")
        else:
            attributes["training_dataset"] = _scalar_str(td, "training_dataset")

    unknown = tuple(k for k in doc if k not in _KNOWN_TOP)
    for k in unknown:
        attributes[str(k)] = _flatten_attr(doc[k])

    return Manifest(
        name=name,
        version=version,
        task=task,
        framework=framework,
        license=license_,
        description=description,
        containers=containers,
        envvars=envvars,
        inputs=inputs,
        outputs=outputs,
        source=source,
        references=references,
        preprocessing_script=doc.get("pre-processing"),
        postprocessing_script=doc.get("post-processing"),
        attributes=attributes,
        unknown_keys=unknown,
    )


def _flatten_attr(value) -> str:
    if isinstance(value, (str, int, float, bool)):
        return str(value)
    if value is None:
        return ""
    return yaml.safe_dump(value, default_flow_style=True).strip()


def _parse_containers(block) -> ContainerMap:
    if block is None:
        return {}
    block = _want(block, dict, "container")
    out: ContainerMap = {}
    for arch, entry in block.items():
        path = f"container.{arch}"
        if isinstance(entry, str):
            out[str(arch)] = entry
        elif isinstance(entry, dict):
            sub = {}
            for accel, image in entry.items():
                sub[str(accel)] = _want(image, str, f"{path}.{accel}")
            out[str(arch)] = sub
        else:
            raise SchemaError(path, f"expected image string or cpu/gpu map, got {type(entry).__name__}")
    return out


def _parse_envvars(block) -> tuple[tuple[str, str], ...]:
    if block is None:
        return ()
    block = _want(block, list, "envvars")
    out = []
    for i, item in enumerate(block):
        path = f"envvars[{i}]"
        if isinstance(item, dict) and len(item) == 1:
            ((k, v),) = item.items()
            out.append((str(k), _scalar_str(v if v is not None else "", path)))
        else:
            raise SchemaError(path, "expected a single NAME: value entry")
    return tuple(out)


def _parse_iospecs(block, path, allow_steps) -> tuple[IOSpec, ...]:
    if block is None:
        return ()
    block = _want(block, list, path)
    out = []
    for i, item in enumerate(block):
        p = f"{path}[{i}]"
        item = _want(item, dict, p)
        modality = _scalar_str(item.get("type", ""), f"{p}.type")
        layer_name = item.get("layer_name")
        if layer_name is not None and not isinstance(layer_name, (str, int)):
            raise SchemaError(f"{p}.layer_name", "expected string or integer index")
        element_type = None
        if "element_type" in item:
            element_type = _scalar_str(item["element_type"], f"{p}.element_type")
        layout = None
        if "layout" in item:
            layout = _normalize_layout(_scalar_str(item["layout"], f"{p}.layout"))
        color_layout = None
        if "color_layout" in item:
            color_layout = _scalar_str(item["color_layout"], f"{p}.color_layout")
        features_url = None
        if "features_url" in item:
            features_url = _scalar_str(item["features_url"], f"{p}.features_url")
        steps: tuple[PipelineStep, ...] = ()
        if "steps" in item and item["steps"] is not None:
            steps = parse_steps(item["steps"], f"{p}.steps")
        out.append(IOSpec(
            modality=modality, layer_name=layer_name, element_type=element_type,
            layout=layout, color_layout=color_layout, features_url=features_url,
            steps=steps,
        ))
    return tuple(out)


def _normalize_layout(value: str) -> str:
    return _LAYOUT_ALIASES.get(value.upper(), value)


def parse_steps(block, path="steps") -> tuple[PipelineStep, ...]:
    """Parse a steps block: a mapping in manifest order, or a list of
    single-key mappings when one step kind repeats."""
    if isinstance(block, dict):
        entries = list(block.items())
    elif isinstance(block, list):
        entries = []
        for i, item in enumerate(block):
            if not isinstance(item, dict) or len(item) != 1:
                raise SchemaError(f"{path}[{i}]", "expected a single-step mapping")
            entries.append(next(iter(item.items())))
    else:
        raise SchemaError(path, f"expected mapping or list, got {type(block).__name__}")
    return tuple(_parse_step(kind, body, f"{path}.{kind}") for kind, body in entries)


def _parse_step(kind, body, path) -> PipelineStep:
    if kind == "decode":
        body = _want(body or {}, dict, path)
        element_type = str(body.get("element_type", UINT8))
        if element_type == "int8":
            element_type = UINT8  # decoded pixel data is byte-valued
        return DecodeStep(
            element_type=element_type,
            data_layout=_normalize_layout(str(body.get("data_layout", NHWC))),
            color_layout=str(body.get("color_layout", "RGB")),
        )
    if kind == "crop":
        body = _want(body or {}, dict, path)
        pct = body.get("percentage")
        if not isinstance(pct, (int, float)) or isinstance(pct, bool):
            raise SchemaError(f"{path}.percentage", "expected a number")
        return CropStep(percentage=float(pct), method=str(body.get("method", "center")))
    if kind == "resize":
        body = _want(body or {}, dict, path)
        dims = body.get("dimensions")
        if (not isinstance(dims, list) or len(dims) != 3
                or not all(isinstance(d, int) and not isinstance(d, bool) for d in dims)):
            raise SchemaError(f"{path}.dimensions", "expected [C, H, W] integers")
        return ResizeStep(
            dimensions=tuple(dims),
            method=str(body.get("method", "bilinear")),
            keep_aspect_ratio=bool(body.get("keep_aspect_ratio", False)),
        )
    if kind == "mean":
        if isinstance(body, (int, float)) and not isinstance(body, bool):
            return MeanStep(values=(float(body),))
        if isinstance(body, list) and body and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in body):
            return MeanStep(values=tuple(float(v) for v in body))
        raise SchemaError(path, "expected a number or list of numbers")
    if kind == "rescale":
        if isinstance(body, (int, float)) and not isinstance(body, bool):
            return RescaleStep(value=float(body))
        raise SchemaError(path, "expected a number")
    if kind == "layout_convert":
        if isinstance(body, str):
            return LayoutConvertStep(target=_normalize_layout(body))
        body = _want(body or {}, dict, path)
        return LayoutConvertStep(target=_normalize_layout(str(body.get("target", ""))))
    if kind == "cast_float":
        return CastFloatStep()
    if kind == "cast_byte":
        return CastByteStep()
    raise SchemaError(path, f"unknown pipeline step {kind!r}")


def _parse_source(block) -> Source:
    if block is None:
        return Source()
    block = _want(block, dict, "source")
    fields = {}
    for key in ("graph_path", "weights_path", "base_url", "graph_checksum", "weights_checksum"):
        if key in block and block[key] is not None:
            fields[key] = _scalar_str(block[key], f"source.{key}")
    return Source(**fields)


# --- validation --------------------------------------------------------------

def validate_manifest(m: Manifest) -> ValidationReport:
    """Collect every invariant violation; empty report means valid."""
    report = ValidationReport()
    err = lambda path, msg: report.append(ValidationIssue("ERROR", path, msg))
    warn = lambda path, msg: report.append(ValidationIssue("WARNING", path, msg))

    if not m.name:
        err("name", "mandatory field is missing or empty")
    if m.version is None:
        err("version", "mandatory field is missing")
    if not m.task:
        err("task", "mandatory field is missing or empty")
    if not m.framework.name:
        err("framework.name", "mandatory field is missing or empty")
    if m.framework.constraint is None:
        err("framework.version", "mandatory version constraint is missing")

    for arch, entry in m.containers.items():
        if arch not in ARCHITECTURES:
            warn(f"container.{arch}", f"unknown architecture (expected one of {ARCHITECTURES})")
        images = [(f"container.{arch}", entry)] if isinstance(entry, str) else [
            (f"container.{arch}.{accel}", image) for accel, image in entry.items()]
        for path, image in images:
            repo, sep, tag = image.partition(":")
            if not (repo and sep and tag):
                err(path, f"image reference {image!r} is not of the form repository:tag")

    for i, (name, _) in enumerate(m.envvars):
        if not name:
            err(f"envvars[{i}]", "environment variable name is empty")

    for prefix, specs in (("inputs", m.inputs), ("outputs", m.outputs)):
        for i, spec in enumerate(specs):
            path = f"{prefix}[{i}]"
            if spec.modality not in MODALITIES:
                err(f"{path}.type", f"unknown modality {spec.modality!r}")
            if spec.element_type is not None and spec.element_type not in (UINT8, FLOAT32):
                err(f"{path}.element_type", f"unsupported element type {spec.element_type!r}")
            if spec.layout is not None and spec.layout not in (NCHW, NHWC):
                err(f"{path}.layout", f"unknown layout {spec.layout!r}")
            if spec.color_layout is not None and spec.color_layout not in COLOR_LAYOUTS:
                err(f"{path}.color_layout", f"unknown color layout {spec.color_layout!r}")
            if prefix == "outputs":
                if spec.element_type is None:
                    err(f"{path}.element_type", "outputs must declare an element type")
                if spec.steps:
                    err(f"{path}.steps", "steps are only allowed on inputs")
            _validate_steps(spec.steps, f"{path}.steps", err)

    required = {
        "classification": {"probability"},
        "object_detection": {"box", "probability", "class"},
        "instance_segmentation": {"box", "probability", "class", "mask"},
    }.get(m.task)
    if required:
        present = {o.modality for o in m.outputs}
        for modality in sorted(required - present):
            err("outputs", f"task {m.task!r} requires a {modality!r} output")

    for key in m.unknown_keys:
        warn(key, "unknown top-level key preserved in attributes")

    return report


def _validate_steps(steps, path, err):
    for step in steps:
        if isinstance(step, CropStep):
            if not (0.0 < step.percentage <= 100.0):
                err(f"{path}.crop.percentage",
                    f"percentage must be in (0, 100], got {step.percentage}")
            if step.method != "center":
                err(f"{path}.crop.method", f"unsupported crop method {step.method!r}")
        elif isinstance(step, ResizeStep):
            if any(d < 1 for d in step.dimensions):
                err(f"{path}.resize.dimensions", "dimensions must be positive")
            if step.method != "bilinear":
                err(f"{path}.resize.method", f"unsupported resize method {step.method!r}")
        elif isinstance(step, DecodeStep):
            if step.element_type != UINT8:
                err(f"{path}.decode.element_type", "decoded data must be uint8")
            if step.data_layout not in (NCHW, NHWC):
                err(f"{path}.decode.data_layout", f"unknown layout {step.data_layout!r}")
            if step.color_layout not in COLOR_LAYOUTS:
                err(f"{path}.decode.color_layout",
                    f"unknown color layout {step.color_layout!r}")
        elif isinstance(step, LayoutConvertStep):
            if step.target not in (NCHW, NHWC):
                err(f"{path}.layout_convert.target", f"unknown layout {step.target!r}")
        elif isinstance(step, MeanStep):
            if len(step.values) not in (1, 3):
                err(f"{path}.mean", "mean must be a scalar or one value per channel")


# --- container selection & identity -------------------------------------------

def select_container(containers: ContainerMap, arch: str, accel: str) -> str:
    """Pick the image for (arch, accel); a bare per-arch image ignores accel."""
    if arch not in containers:
        raise NoContainerForArch(f"no container declared for architecture {arch!r}")
    entry = containers[arch]
    if isinstance(entry, str):
        return entry
    if accel not in entry:
        raise NoContainerForArch(
            f"no container declared for ({arch!r}, {accel!r})")
    return entry[accel]


def manifest_key(m: Manifest) -> str:
    """Canonical registry key: framework/name/version, case-normalized."""
    version = str(m.version) if m.version else "0.0.0"
    return f"{m.framework.name}/{m.name}/{version}".lower()


# --- rendering ---------------------------------------------------------------

def render_manifest(m: Manifest) -> str:
    """Render back to the document form; parse(render(parse(t))) == parse(t)."""
    doc: dict = {}
    if m.name:
        doc["name"] = m.name
    if m.version is not None:
        doc["version"] = str(m.version)
    if m.task:
        doc["task"] = m.task
    if m.license:
        doc["license"] = m.license
    if m.description:
        doc["description"] = m.description
    if m.framework.name or m.framework.constraint:
        fw: dict = {}
        if m.framework.name:
            fw["name"] = m.framework.name
        if m.framework.constraint is not None:
            fw["version"] = m.framework.constraint.raw
        doc["framework"] = fw
    if m.containers:
        doc["container"] = m.containers
    if m.envvars:
        doc["envvars"] = [{k: v} for k, v in m.envvars]
    if m.inputs:
        doc["inputs"] = [_render_iospec(s) for s in m.inputs]
    if m.preprocessing_script is not None:
        doc["pre-processing"] = m.preprocessing_script
    if m.outputs:
        doc["outputs"] = [_render_iospec(s) for s in m.outputs]
    if m.postprocessing_script is not None:
        doc["post-processing"] = m.postprocessing_script
    if m.source != Source():
        src = {}
        for key in ("base_url", "graph_path", "weights_path", "graph_checksum", "weights_checksum"):
            value = getattr(m.source, key)
            if value is not None:
                src[key] = value
        doc["source"] = src
    if m.references:
        doc["references"] = list(m.references)
    if m.attributes:
        doc["attributes"] = dict(m.attributes)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def _render_iospec(spec: IOSpec) -> dict:
    out: dict = {"type": spec.modality}
    if spec.layer_name is not None:
        out["layer_name"] = spec.layer_name
    if spec.element_type is not None:
        out["element_type"] = spec.element_type
    if spec.layout is not None:
        out["layout"] = spec.layout
    if spec.color_layout is not None:
        out["color_layout"] = spec.color_layout
    if spec.features_url is not None:
        out["features_url"] = spec.features_url
    if spec.steps:
        out["steps"] = render_steps(spec.steps)
    return out


def render_steps(steps: tuple[PipelineStep, ...]):
    entries = [(step.kind, _render_step(step)) for step in steps]
    kinds = [k for k, _ in entries]
    if len(set(kinds)) == len(kinds):
        return {k: body for k, body in entries}
    return [{k: body} for k, body in entries]


def _render_step(step: PipelineStep):
    if isinstance(step, DecodeStep):
        return {"element_type": step.element_type, "data_layout": step.data_layout,
                "color_layout": step.color_layout}
    if isinstance(step, CropStep):
        return {"method": step.method, "percentage": step.percentage}
    if isinstance(step, ResizeStep):
        return {"dimensions": list(step.dimensions), "method": step.method,
                "keep_aspect_ratio": step.keep_aspect_ratio}
    if isinstance(step, MeanStep):
        return step.values[0] if len(step.values) == 1 else list(step.values)
    if isinstance(step, RescaleStep):
        return step.value
    if isinstance(step, LayoutConvertStep):
        return {"target": step.target}
    return None  # cast steps carry no body
