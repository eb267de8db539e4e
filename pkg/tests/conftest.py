from __future__ import annotations

import random

import numpy as np
import pytest

CANONICAL_MANIFEST = """\
name: Inception-v3
version: 1.0.0
task: classification
license: Apache-2.0
description: reference classification manifest
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
      decode:
        element_type: uint8
        data_layout: NHWC
        color_layout: RGB
      crop:
        method: center
        percentage: 87.5
      resize:
        dimensions: [3, 299, 299]
        method: bilinear
        keep_aspect_ratio: true
      mean: [127.5, 127.5, 127.5]
      rescale: 127.5
outputs:
  - type: probability
    layer_name: prob
    element_type: float32
source:
  graph_path: https://models.example.com/inception_v3.pb
attributes:
  manifest_author: model-team
training_dataset:
  name: ILSVRC 2012
  version: 1.0.0
"""


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Binary P6 encoding of an HWC uint8 RGB array."""
    h, w, c = pixels.shape
    assert c == 3 and pixels.dtype == np.uint8
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Binary P5 encoding of an HW uint8 grayscale array."""
    h, w = pixels.shape
    assert pixels.dtype == np.uint8
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def random_pixels(rng: random.Random, h: int, w: int) -> np.ndarray:
    arr = np.array([rng.randrange(256) for _ in range(h * w * 3)], dtype=np.uint8)
    return arr.reshape(h, w, 3)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xE7A1)


@pytest.fixture
def canonical_manifest_text() -> str:
    return CANONICAL_MANIFEST
