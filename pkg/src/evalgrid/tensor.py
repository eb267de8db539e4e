"""N-dimensional numeric payloads exchanged between pipeline stages and predictors.

A Tensor is an immutable wrapper over a contiguous row-major numpy array plus
the declared data layout (NCHW or NHWC; 3-D tensors are the batchless CHW/HWC
forms). Element types are restricted to uint8 and float32, the only types
that cross the wire.

Numeric conventions, preserved deliberately because they are where silent
evaluation errors come from:

  byte -> float   x / 255.0                      (exact at both endpoints)
  float -> byte   floor(255 * clamp(x, 0, 1))    (floor, not round)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import RankError

NCHW = "NCHW"
NHWC = "NHWC"
LAYOUTS = (NCHW, NHWC)

UINT8 = "uint8"
FLOAT32 = "float32"

_DTYPES = {UINT8: np.uint8, FLOAT32: np.float32}


@dataclass(frozen=True)
class Tensor:
    data: np.ndarray
    layout: str = NHWC

    def __post_init__(self):
        if self.data.dtype not in (np.uint8, np.float32):
            raise TypeError(f"unsupported element type {self.data.dtype}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        arr = np.ascontiguousarray(self.data)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def element_type(self) -> str:
        return UINT8 if self.data.dtype == np.uint8 else FLOAT32

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def channel_axis(self) -> int:
        """Position of the C axis given the declared layout, never guessed."""
        if self.data.ndim == 4:
            return 1 if self.layout == NCHW else 3
        if self.data.ndim == 3:
            return 0 if self.layout == NCHW else 2
        raise RankError(f"no channel axis on rank-{self.data.ndim} tensor")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Tensor)
                and self.layout == other.layout
                and self.data.dtype == other.data.dtype
                and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data))

    def __repr__(self) -> str:
        return f"Tensor({self.element_type}, shape={self.shape}, layout={self.layout})"


def convert_layout(t: Tensor, target: str) -> Tensor:
    """Permute between NCHW and NHWC; an involution with no numeric change."""
    if target not in LAYOUTS:
        raise ValueError(f"unknown layout {target!r}")
    if t.data.ndim not in (3, 4):
        raise RankError(f"layout conversion needs a 3-D or 4-D tensor, got rank {t.data.ndim}")
    if target == t.layout:
        return t
    if t.data.ndim == 4:
        axes = (0, 2, 3, 1) if target == NHWC else (0, 3, 1, 2)
    else:
        axes = (1, 2, 0) if target == NHWC else (2, 0, 1)
    return Tensor(np.ascontiguousarray(t.data.transpose(axes)), layout=target)


def cast_to_float(t: Tensor) -> Tensor:
    """byte -> float: x / 255.0 per element, shape and layout preserved."""
    if t.element_type != UINT8:
        raise TypeError(f"cast_to_float expects uint8, got {t.element_type}")
    return Tensor(t.data.astype(np.float32) / np.float32(255.0), layout=t.layout)


def cast_to_byte(t: Tensor) -> Tensor:
    """float -> byte: floor(255 * clamp(x, 0, 1)).

    Floor, not round: the quantization bias is part of the documented
    conversion semantics and is observable in composed pipelines.
    """
    if t.element_type != FLOAT32:
        raise TypeError(f"cast_to_byte expects float32, got {t.element_type}")
    clamped = np.clip(t.data, np.float32(0.0), np.float32(1.0))
    return Tensor(np.floor(clamped * np.float32(255.0)).astype(np.uint8), layout=t.layout)


_MAGIC = b"EGTN"
_DTYPE_CODES = {UINT8: 1, FLOAT32: 2}
_DTYPE_NAMES = {v: k for k, v in _DTYPE_CODES.items()}
_LAYOUT_CODES = {NCHW: 1, NHWC: 2}
_LAYOUT_NAMES = {v: k for k, v in _LAYOUT_CODES.items()}


def dump_tensor(t: Tensor) -> bytes:
    """Serialize bit-exactly: magic, dtype, layout, rank, dims, then raw
    little-endian values. Stable across platforms for golden-file tests."""
    header = struct.pack(
        "<4sBBB", _MAGIC, _DTYPE_CODES[t.element_type], _LAYOUT_CODES[t.layout],
        t.data.ndim,
    )
    dims = struct.pack(f"<{t.data.ndim}I", *t.data.shape)
    payload = t.data.astype(t.data.dtype.newbyteorder("<"), copy=False).tobytes()
    return header + dims + payload


def load_tensor(blob: bytes) -> Tensor:
    magic, dtype_code, layout_code, rank = struct.unpack_from("<4sBBB", blob, 0)
    if magic != _MAGIC:
        raise ValueError("not a tensor dump")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    dtype = np.dtype(_DTYPES[_DTYPE_NAMES[dtype_code]]).newbyteorder("<")
    data = np.frombuffer(blob, dtype=dtype, offset=7 + 4 * rank)
    arr = data.reshape(dims).astype(_DTYPES[_DTYPE_NAMES[dtype_code]])
    return Tensor(arr, layout=_LAYOUT_NAMES[layout_code])


def tensor_to_wire(t: Tensor) -> dict:
    """JSON-safe encoding used by the wire protocol and REST bodies."""
    import base64

    return {
        "element_type": t.element_type,
        "shape": list(t.shape),
        "layout": t.layout,
        "data_b64": base64.b64encode(
            t.data.astype(t.data.dtype.newbyteorder("<"), copy=False).tobytes()
        ).decode("ascii"),
    }


def tensor_from_wire(obj: dict) -> Tensor:
    import base64

    dtype = np.dtype(_DTYPES[obj["element_type"]]).newbyteorder("<")
    raw = base64.b64decode(obj["data_b64"])
    arr = np.frombuffer(raw, dtype=dtype).reshape(obj["shape"])
    return Tensor(arr.astype(_DTYPES[obj["element_type"]]), layout=obj["layout"])
