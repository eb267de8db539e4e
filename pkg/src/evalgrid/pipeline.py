"""Preprocessing pipeline: decode, crop, resize, normalize, and fold steps.

All image-space operations work on 8-bit HWC pixel buffers with exactly three
channels; grayscale sources are replicated on decode so every downstream step
sees the same shape. Numeric rules that downstream consumers depend on:

- bilinear resize samples at half-pixel centers, blends the four neighbors in
  float64, and rounds half-up back to bytes;
- keep_aspect_ratio resizes scale the image to cover the target box, then take
  a centered crop;
- center crop uses floor(dim * pct / 100) with a floor((in - out) / 2) offset;
- mean subtraction on byte tensors widens to float32 without rescaling the
  values to [0, 1]; an explicit cast_float step divides by 255 first.

Only losslessly-coded inputs are accepted (PPM/PGM and PNG); a lossy codec
would make results depend on the decoder build.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image as _PILImage

from .errors import (
    ChannelMismatch, CorruptImage, EmptyOutput, InvalidDims,
    InvalidPercentage, PipelineError, RankError, ShapeMismatch, StepError,
    UnsupportedFormat,
)
from .manifest import (
    CastByteStep, CastFloatStep, CropStep, DecodeStep, LayoutConvertStep,
    MeanStep, PipelineStep, RescaleStep, ResizeStep,
)
from .tensor import (
    FLOAT32, NCHW, NHWC, UINT8, Tensor, cast_to_byte, cast_to_float,
    convert_layout,
)
from .tracer import TraceLevel


@dataclass
class Image:
    """Decoded raster: uint8 pixels in HWC order, three channels."""

    pixels: np.ndarray
    color_layout: str = "RGB"

    def __post_init__(self):
        if self.pixels.dtype != np.uint8:
            raise InvalidDims(f"image pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise InvalidDims(f"image pixels must be HWC with 3 channels, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Prediction:
    index: int
    probability: float
    label: Optional[str] = None


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    index: Optional[int] = None
    probability: Optional[float] = None
    label: Optional[str] = None


# --- decoding ----------------------------------------------------------------

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_LOSSY_MAGICS = ((b"\xff\xd8\xff", "JPEG"), (b"GIF8", "GIF"), (b"RIFF", "WebP"))


def decode_image(data: bytes) -> Image:
    """Decode PPM/PGM (P2/P3/P5/P6, maxval 255) or PNG into RGB pixels."""
    if len(data) < 2:
        raise UnsupportedFormat("payload too short to carry an image")
    if data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        return _decode_pnm(data)
    if data.startswith(_PNG_MAGIC):
        return _decode_png(data)
    for magic, name in _LOSSY_MAGICS:
        if data.startswith(magic):
            raise UnsupportedFormat(
                f"{name} is lossy; decoded values would depend on the codec build")
    raise UnsupportedFormat("unrecognized image payload")


def _pnm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == 0x23:  # '#' comment runs to end of line
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise CorruptImage("truncated header")
    end = pos
    while end < n and data[end] not in b" \t\r\n":
        end += 1
    return data[pos:end], end


def _pnm_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _pnm_token(data, pos)
    if not token.isdigit():
        raise CorruptImage(f"bad {what} field {token!r}")
    return int(token), pos


def _decode_pnm(data: bytes) -> Image:
    magic = data[:2]
    width, pos = _pnm_int(data, 2, "width")
    height, pos = _pnm_int(data, pos, "height")
    maxval, pos = _pnm_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise CorruptImage(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit samples supported, maxval={maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels

    if magic in (b"P5", b"P6"):
        pos += 1  # exactly one whitespace byte separates header and raster
        raster = data[pos:pos + count]
        if len(raster) < count:
            raise CorruptImage(f"raster has {len(raster)} bytes, expected {count}")
        arr = np.frombuffer(raster, dtype=np.uint8, count=count)
    else:
        values = []
        while len(values) < count:
            value, pos = _pnm_int(data, pos, "sample")
            if value > maxval:
                raise CorruptImage(f"sample {value} exceeds maxval {maxval}")
            values.append(value)
        arr = np.array(values, dtype=np.uint8)

    arr = arr.reshape(height, width, channels)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return Image(np.ascontiguousarray(arr), "RGB")


def _decode_png(data: bytes) -> Image:
    try:
        with _PILImage.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except Exception as exc:
        raise CorruptImage(f"cannot decode PNG payload: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise CorruptImage(f"unexpected decoded shape {arr.shape}")
    return Image(np.ascontiguousarray(arr), "RGB")


def convert_color(image: Image, target: str) -> Image:
    """RGB <-> BGR by reversing the channel axis; applying twice round-trips."""
    if target not in ("RGB", "BGR"):
        raise PipelineError(f"unknown color layout {target!r}")
    if image.color_layout == target:
        return image
    return Image(np.ascontiguousarray(image.pixels[:, :, ::-1]), target)


# --- geometry ----------------------------------------------------------------

def center_crop(image: Image, percentage: float) -> Image:
    if not 0.0 < percentage <= 100.0:
        raise InvalidPercentage(f"percentage must be in (0, 100], got {percentage}")
    out_h = math.floor(image.height * percentage / 100.0)
    out_w = math.floor(image.width * percentage / 100.0)
    if out_h < 1 or out_w < 1:
        raise InvalidDims(f"crop of {percentage}% leaves no pixels")
    return _crop_box(image, out_h, out_w)


def _crop_box(image: Image, out_h: int, out_w: int) -> Image:
    top = (image.height - out_h) // 2
    left = (image.width - out_w) // 2
    pixels = image.pixels[top:top + out_h, left:left + out_w]
    return Image(np.ascontiguousarray(pixels), image.color_layout)


def _sample_coords(in_size: int, out_size: int):
    dst = np.arange(out_size, dtype=np.float64)
    src = (dst + 0.5) * (in_size / out_size) - 0.5
    lo = np.floor(src)
    frac = src - lo
    i0 = np.clip(lo, 0, in_size - 1).astype(np.intp)
    i1 = np.clip(lo + 1, 0, in_size - 1).astype(np.intp)
    return i0, i1, frac


def resize_bilinear(image: Image, out_h: int, out_w: int) -> Image:
    """Half-pixel-center bilinear resample, float64 blend, round half-up."""
    if out_h < 1 or out_w < 1:
        raise InvalidDims(f"resize target {out_h}x{out_w} is empty")
    if out_h == image.height and out_w == image.width:
        return image
    px = image.pixels.astype(np.float64)
    y0, y1, fy = _sample_coords(image.height, out_h)
    x0, x1, fx = _sample_coords(image.width, out_w)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    row0 = px[y0]
    row1 = px[y1]
    top = row0[:, x0] * (1.0 - fx) + row0[:, x1] * fx
    bottom = row1[:, x0] * (1.0 - fx) + row1[:, x1] * fx
    blended = top * (1.0 - fy) + bottom * fy
    out = np.floor(blended + 0.5)
    out = np.clip(out, 0.0, 255.0).astype(np.uint8)
    return Image(np.ascontiguousarray(out), image.color_layout)


def resize_cover(image: Image, out_h: int, out_w: int) -> Image:
    """Scale to cover the target box preserving aspect, then center-crop."""
    if out_h < 1 or out_w < 1:
        raise InvalidDims(f"resize target {out_h}x{out_w} is empty")
    scale = max(out_h / image.height, out_w / image.width)
    scaled_h = max(out_h, math.floor(image.height * scale + 0.5))
    scaled_w = max(out_w, math.floor(image.width * scale + 0.5))
    resized = resize_bilinear(image, scaled_h, scaled_w)
    return _crop_box(resized, out_h, out_w)


# --- normalization -----------------------------------------------------------

def _per_channel(values: Sequence[float], tensor: Tensor, what: str) -> np.ndarray:
    axis = tensor.channel_axis
    channels = tensor.shape[axis]
    values = tuple(float(v) for v in values)
    if len(values) == 1:
        values = values * channels
    if len(values) != channels:
        raise ChannelMismatch(
            f"{what} has {len(values)} values for {channels} channels")
    shape = [1] * len(tensor.shape)
    shape[axis] = channels
    return np.asarray(values, dtype=np.float32).reshape(shape)


def normalize(tensor: Tensor, means: Sequence[float], stddevs: Sequence[float],
              domain: str = "byte") -> Tensor:
    """(x - mean) / stddev per channel, widened to float32.

    domain="byte" applies the statistics to raw byte values; domain="float"
    divides by 255 first, for statistics quoted in [0, 1].
    """
    if domain not in ("byte", "float"):
        raise PipelineError(f"unknown normalize domain {domain!r}")
    if domain == "byte":
        if tensor.element_type != UINT8:
            raise PipelineError("byte-domain normalize requires a uint8 tensor")
        x = tensor.data.astype(np.float32)
    else:
        x = cast_to_float(tensor).data if tensor.element_type == UINT8 else tensor.data
    m = _per_channel(means, tensor, "means")
    s = _per_channel(stddevs, tensor, "stddevs")
    if np.any(s == 0.0):
        raise PipelineError("stddev must be nonzero")
    return Tensor((x - m) / s, tensor.layout)


def _tensorize(image: Image, layout: str) -> Tensor:
    arr = image.pixels
    if layout == NCHW:
        arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    return Tensor(arr, layout)


# --- step folding ------------------------------------------------------------

class _PipelineState:
    __slots__ = ("payload", "image", "tensor", "layout")

    def __init__(self, payload):
        self.payload = payload
        self.image: Optional[Image] = None
        self.tensor: Optional[Tensor] = None
        self.layout = NHWC

    def need_image(self) -> Image:
        if self.image is None:
            raise PipelineError("step requires a decoded image")
        return self.image

    def need_tensor(self) -> Tensor:
        if self.tensor is None:
            self.tensor = _tensorize(self.need_image(), self.layout)
            self.image = None
        return self.tensor


def _apply_step(state: _PipelineState, step: PipelineStep) -> None:
    if isinstance(step, DecodeStep):
        if state.image is not None or state.tensor is not None:
            raise PipelineError("decode must be the first step")
        if not isinstance(state.payload, (bytes, bytearray)):
            raise PipelineError("decode requires a raw byte payload")
        image = decode_image(bytes(state.payload))
        state.image = convert_color(image, step.color_layout)
        state.layout = step.data_layout
    elif isinstance(step, CropStep):
        if step.method != "center":
            raise PipelineError(f"unsupported crop method {step.method!r}")
        state.image = center_crop(state.need_image(), step.percentage)
    elif isinstance(step, ResizeStep):
        if step.method != "bilinear":
            raise PipelineError(f"unsupported resize method {step.method!r}")
        channels, out_h, out_w = step.dimensions
        if channels != 3:
            raise ChannelMismatch(f"resize declares {channels} channels, images have 3")
        image = state.need_image()
        if step.keep_aspect_ratio:
            state.image = resize_cover(image, out_h, out_w)
        else:
            state.image = resize_bilinear(image, out_h, out_w)
    elif isinstance(step, MeanStep):
        tensor = state.need_tensor()
        x = tensor.data.astype(np.float32) if tensor.element_type == UINT8 else tensor.data
        state.tensor = Tensor(x - _per_channel(step.values, tensor, "mean"), tensor.layout)
    elif isinstance(step, RescaleStep):
        if step.value == 0:
            raise PipelineError("rescale divisor must be nonzero")
        tensor = state.need_tensor()
        x = tensor.data.astype(np.float32) if tensor.element_type == UINT8 else tensor.data
        state.tensor = Tensor(x / np.float32(step.value), tensor.layout)
    elif isinstance(step, LayoutConvertStep):
        state.tensor = convert_layout(state.need_tensor(), step.target)
    elif isinstance(step, CastFloatStep):
        tensor = state.need_tensor()
        if tensor.element_type == UINT8:
            state.tensor = cast_to_float(tensor)
    elif isinstance(step, CastByteStep):
        tensor = state.need_tensor()
        if tensor.element_type == FLOAT32:
            state.tensor = cast_to_byte(tensor)
    else:
        raise PipelineError(f"unknown step {step!r}")


def run_pipeline(steps: Sequence[PipelineStep],
                 payload: Union[bytes, bytearray, Image],
                 tracer=None, parent_span: Optional[str] = None) -> Tensor:
    """Fold the steps over one input payload and return the final tensor.

    A failure in step i surfaces as StepError(i, cause) with the original
    error chained. When a tracer is supplied, each step runs under its own
    span so per-step timing lands in the trace.
    """
    state = _PipelineState(payload if not isinstance(payload, Image) else None)
    if isinstance(payload, Image):
        state.image = payload
    for index, step in enumerate(steps):
        span_id = None
        if tracer is not None:
            span_id = tracer.begin_span(
                f"pipeline/{step.kind}", TraceLevel.MODEL, parent_id=parent_span)
        try:
            _apply_step(state, step)
        except StepError:
            raise
        except Exception as exc:
            raise StepError(index, exc) from exc
        finally:
            if tracer is not None:
                tracer.end_span(span_id)
    if state.tensor is None and state.image is None:
        raise PipelineError("pipeline produced no data (missing decode step?)")
    return state.need_tensor()


def stack_batch(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally-shaped 3-D tensors into one batched 4-D tensor."""
    if not tensors:
        raise EmptyOutput("cannot batch zero tensors")
    first = tensors[0]
    for t in tensors[1:]:
        if t.shape != first.shape or t.layout != first.layout \
                or t.element_type != first.element_type:
            raise ShapeMismatch(
                f"cannot batch {t.element_type}{t.shape}/{t.layout} with "
                f"{first.element_type}{first.shape}/{first.layout}")
    if len(first.shape) != 3:
        raise RankError(f"batch members must be rank 3, got {len(first.shape)}")
    return Tensor(np.stack([t.data for t in tensors]), first.layout)


# --- output interpretation ----------------------------------------------------

def top_k(probs, k: int, labels: Optional[Sequence[str]] = None):
    """Highest-probability classes, ties broken by ascending index."""
    if k < 1:
        raise InvalidDims(f"k must be positive, got {k}")
    arr = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    if arr.ndim == 2:
        return [top_k(row, k, labels) for row in arr]
    if arr.ndim != 1:
        raise RankError(f"probabilities must be rank 1 or 2, got rank {arr.ndim}")
    if arr.size == 0:
        raise EmptyOutput("no class probabilities to rank")
    order = np.argsort(-arr, kind="stable")[:k]
    return [
        Prediction(int(i), float(arr[i]), labels[i] if labels is not None else None)
        for i in order
    ]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; degenerate or disjoint boxes give 0."""
    ix = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    iy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    inter = max(0.0, ix) * max(0.0, iy)
    area_a = max(0.0, a.xmax - a.xmin) * max(0.0, a.ymax - a.ymin)
    area_b = max(0.0, b.xmax - b.xmin) * max(0.0, b.ymax - b.ymin)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union
