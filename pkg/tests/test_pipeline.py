from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image as PILImage

from evalgrid.errors import (
    ChannelMismatch, CorruptImage, EmptyOutput, InvalidDims,
    InvalidPercentage, PipelineError, StepError, UnsupportedFormat,
)
from evalgrid.manifest import parse_manifest, parse_steps
from evalgrid.pipeline import (
    BoundingBox, Image, center_crop, convert_color, decode_image, iou,
    normalize, resize_bilinear, resize_cover, run_pipeline, stack_batch, top_k,
)
from evalgrid.tensor import NCHW, NHWC, Tensor
from evalgrid.tracer import Tracer, TraceLevel, VirtualClock

from .conftest import encode_pgm, encode_ppm, random_pixels
from .oracles import (
    oracle_center_crop, oracle_mean_rescale, oracle_normalize,
    oracle_resize_bilinear, oracle_resize_cover, oracle_top_k,
)


# --- decoding ---------------------------------------------------------------

def test_decode_p6_binary(rng):
    px = random_pixels(rng, 5, 7)
    img = decode_image(encode_ppm(px))
    assert img.color_layout == "RGB"
    np.testing.assert_array_equal(img.pixels, px)


def test_decode_p5_grayscale_replicates(rng):
    gray = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    img = decode_image(encode_pgm(gray))
    assert img.pixels.shape == (2, 2, 3)
    for c in range(3):
        np.testing.assert_array_equal(img.pixels[:, :, c], gray)


def test_decode_p3_ascii():
    text = b"P3\n# a comment\n2 1\n255\n1 2 3  4 5 6\n"
    img = decode_image(text)
    np.testing.assert_array_equal(img.pixels, [[[1, 2, 3], [4, 5, 6]]])


def test_decode_p2_ascii():
    img = decode_image(b"P2\n2 2\n255\n0 64\n128 255\n")
    np.testing.assert_array_equal(img.pixels[:, :, 0], [[0, 64], [128, 255]])
    np.testing.assert_array_equal(img.pixels[:, :, 0], img.pixels[:, :, 2])


def test_decode_header_comments():
    img = decode_image(b"P6 # binary\n# size next\n1 1 # wh\n255\n\xAA\xBB\xCC")
    np.testing.assert_array_equal(img.pixels, [[[0xAA, 0xBB, 0xCC]]])


def test_decode_png_roundtrip(rng):
    px = random_pixels(rng, 9, 4)
    buf = io.BytesIO()
    PILImage.fromarray(px, "RGB").save(buf, format="PNG")
    img = decode_image(buf.getvalue())
    np.testing.assert_array_equal(img.pixels, px)


def test_decode_png_grayscale_replicates():
    gray = np.array([[10, 200], [30, 90]], dtype=np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(gray, "L").save(buf, format="PNG")
    img = decode_image(buf.getvalue())
    for c in range(3):
        np.testing.assert_array_equal(img.pixels[:, :, c], gray)


def test_decode_png_palette(rng):
    px = random_pixels(rng, 6, 6)
    buf = io.BytesIO()
    PILImage.fromarray(px, "RGB").convert(
        "P", palette=PILImage.Palette.ADAPTIVE).save(buf, format="PNG")
    img = decode_image(buf.getvalue())  # palette decodes; values palette-mapped
    assert img.pixels.shape == (6, 6, 3)


@pytest.mark.parametrize("payload,exc", [
    (b"", UnsupportedFormat),
    (b"\xff\xd8\xff\xe0JFIF", UnsupportedFormat),   # JPEG magic
    (b"GIF89a", UnsupportedFormat),
    (b"BM0000", UnsupportedFormat),
    (b"P6\n2 2\n65535\n" + b"\0" * 24, UnsupportedFormat),  # 16-bit samples
    (b"P6\n2 2\n255\n\0\0\0", CorruptImage),        # truncated raster
    (b"P6\n0 2\n255\n", CorruptImage),              # zero dimension
    (b"P6\nx 2\n255\n", CorruptImage),              # non-numeric header
    (b"P3\n2 1\n255\n1 2\n", CorruptImage),         # not enough samples
    (b"P3\n1 1\n255\n999 0 0\n", CorruptImage),     # sample exceeds maxval
    (b"\x89PNG\r\n\x1a\n" + b"garbage", CorruptImage),
])
def test_decode_rejects(payload, exc):
    with pytest.raises(exc):
        decode_image(payload)


def test_decode_is_deterministic(rng):
    data = encode_ppm(random_pixels(rng, 8, 8))
    a = decode_image(data)
    b = decode_image(data)
    np.testing.assert_array_equal(a.pixels, b.pixels)


# --- color ------------------------------------------------------------------

def test_convert_color_reverses_channels(rng):
    img = Image(random_pixels(rng, 3, 3))
    bgr = convert_color(img, "BGR")
    np.testing.assert_array_equal(bgr.pixels[:, :, 0], img.pixels[:, :, 2])
    np.testing.assert_array_equal(bgr.pixels[:, :, 1], img.pixels[:, :, 1])
    np.testing.assert_array_equal(bgr.pixels[:, :, 2], img.pixels[:, :, 0])


def test_convert_color_is_involution(rng):
    img = Image(random_pixels(rng, 4, 5))
    back = convert_color(convert_color(img, "BGR"), "RGB")
    np.testing.assert_array_equal(back.pixels, img.pixels)
    assert back.color_layout == "RGB"


def test_convert_color_same_layout_is_noop(rng):
    img = Image(random_pixels(rng, 2, 2))
    assert convert_color(img, "RGB") is img


def test_convert_color_rejects_unknown():
    with pytest.raises(PipelineError):
        convert_color(Image(np.zeros((1, 1, 3), np.uint8)), "CMYK")


# --- crop -------------------------------------------------------------------

@pytest.mark.parametrize("h,w,pct", [
    (8, 6, 87.5), (10, 10, 100.0), (299, 299, 87.5), (7, 5, 50.0),
    (64, 64, 87.5), (3, 3, 34.0), (17, 23, 99.9),
])
def test_center_crop_matches_oracle(rng, h, w, pct):
    px = random_pixels(rng, h, w)
    got = center_crop(Image(px), pct)
    want = oracle_center_crop(px, pct)
    assert got.pixels.shape == want.shape
    np.testing.assert_array_equal(got.pixels, want)


def test_center_crop_full_is_identity(rng):
    px = random_pixels(rng, 5, 5)
    np.testing.assert_array_equal(center_crop(Image(px), 100.0).pixels, px)


@pytest.mark.parametrize("pct", [0.0, -5.0, 100.1, 150.0])
def test_center_crop_rejects_bad_percentage(pct):
    with pytest.raises(InvalidPercentage):
        center_crop(Image(np.zeros((4, 4, 3), np.uint8)), pct)


def test_center_crop_empty_result():
    with pytest.raises(InvalidDims):
        center_crop(Image(np.zeros((10, 10, 3), np.uint8)), 5.0)


# --- resize -----------------------------------------------------------------

@pytest.mark.parametrize("in_h,in_w,out_h,out_w", [
    (4, 4, 8, 8),       # upsample 2x
    (8, 8, 4, 4),       # downsample 2x
    (7, 5, 299, 299),   # large upsample, odd source
    (31, 17, 10, 24),   # mixed directions
    (1, 1, 4, 4),       # single-pixel source
    (5, 5, 1, 1),       # collapse
    (6, 6, 6, 6),       # identity
])
def test_resize_bilinear_matches_oracle(rng, in_h, in_w, out_h, out_w):
    px = random_pixels(rng, in_h, in_w)
    got = resize_bilinear(Image(px), out_h, out_w)
    want = oracle_resize_bilinear(px, out_h, out_w)
    assert got.pixels.shape == (out_h, out_w, 3)
    np.testing.assert_array_equal(got.pixels, want)


def test_resize_identity_returns_same_pixels(rng):
    px = random_pixels(rng, 5, 9)
    out = resize_bilinear(Image(px), 5, 9)
    np.testing.assert_array_equal(out.pixels, px)


def test_resize_constant_image_stays_constant():
    px = np.full((3, 7, 3), 77, np.uint8)
    out = resize_bilinear(Image(px), 13, 4)
    assert (out.pixels == 77).all()


@pytest.mark.parametrize("in_h,in_w,out_h,out_w", [
    (10, 20, 8, 8), (20, 10, 8, 8), (7, 5, 299, 299), (64, 48, 32, 32),
])
def test_resize_cover_matches_oracle(rng, in_h, in_w, out_h, out_w):
    px = random_pixels(rng, in_h, in_w)
    got = resize_cover(Image(px), out_h, out_w)
    want = oracle_resize_cover(px, out_h, out_w)
    assert got.pixels.shape == (out_h, out_w, 3)
    np.testing.assert_array_equal(got.pixels, want)


def test_resize_rejects_empty_target():
    with pytest.raises(InvalidDims):
        resize_bilinear(Image(np.zeros((4, 4, 3), np.uint8)), 0, 5)


# --- normalize --------------------------------------------------------------

def test_normalize_byte_domain_matches_oracle(rng):
    px = random_pixels(rng, 6, 5)
    t = Tensor(px, NHWC)
    got = normalize(t, [127.5, 127.5, 127.5], [127.5], domain="byte")
    want = oracle_normalize(px, 2, [127.5] * 3, [127.5], "byte")
    assert got.element_type == "float32"
    np.testing.assert_array_equal(got.data, want)


def test_normalize_float_domain_matches_oracle(rng):
    px = random_pixels(rng, 4, 4)
    t = Tensor(np.ascontiguousarray(px.transpose(2, 0, 1)), NCHW)
    means = [0.485, 0.456, 0.406]
    stds = [0.229, 0.224, 0.225]
    got = normalize(t, means, stds, domain="float")
    want = oracle_normalize(np.asarray(t.data), 0, means, stds, "float")
    np.testing.assert_array_equal(got.data, want)


def test_normalize_respects_declared_layout(rng):
    px = random_pixels(rng, 4, 4)
    nhwc = Tensor(px, NHWC)
    nchw = Tensor(np.ascontiguousarray(px.transpose(2, 0, 1)), NCHW)
    means, stds = [10.0, 20.0, 30.0], [1.0, 2.0, 4.0]
    a = normalize(nhwc, means, stds, "byte")
    b = normalize(nchw, means, stds, "byte")
    np.testing.assert_array_equal(a.data, b.data.transpose(1, 2, 0))


def test_normalize_channel_mismatch():
    t = Tensor(np.zeros((4, 4, 3), np.uint8), NHWC)
    with pytest.raises(ChannelMismatch):
        normalize(t, [1.0, 2.0], [1.0], "byte")


def test_normalize_zero_stddev_rejected():
    t = Tensor(np.zeros((4, 4, 3), np.uint8), NHWC)
    with pytest.raises(PipelineError):
        normalize(t, [0.0], [0.0], "byte")


# --- pipeline folding ---------------------------------------------------------

CANONICAL_STEPS = parse_steps({
    "decode": {"element_type": "uint8", "data_layout": "NHWC", "color_layout": "RGB"},
    "crop": {"method": "center", "percentage": 87.5},
    "resize": {"dimensions": [3, 299, 299], "method": "bilinear",
               "keep_aspect_ratio": True},
    "mean": [127.5, 127.5, 127.5],
    "rescale": 127.5,
})


def test_run_pipeline_composes_the_documented_ops(rng):
    px = random_pixels(rng, 64, 48)
    got = run_pipeline(CANONICAL_STEPS, encode_ppm(px))

    cropped = oracle_center_crop(px, 87.5)
    resized = oracle_resize_cover(cropped, 299, 299)
    want = oracle_mean_rescale(resized, 2, [127.5, 127.5, 127.5], 127.5)

    assert got.layout == NHWC
    assert got.element_type == "float32"
    np.testing.assert_array_equal(got.data, want)
    assert float(got.data.min()) >= -1.0 and float(got.data.max()) <= 1.0


def test_run_pipeline_nchw_decode_layout(rng):
    px = random_pixels(rng, 8, 8)
    steps = parse_steps({"decode": {"data_layout": "NCHW"}, "mean": 5.0})
    got = run_pipeline(steps, encode_ppm(px))
    assert got.layout == NCHW
    assert got.shape == (3, 8, 8)
    want = oracle_mean_rescale(px.transpose(2, 0, 1), 0, [5.0], None)
    np.testing.assert_array_equal(got.data, want)


def test_run_pipeline_decode_only_gives_bytes(rng):
    px = random_pixels(rng, 4, 6)
    got = run_pipeline(parse_steps({"decode": {}}), encode_ppm(px))
    assert got.element_type == "uint8"
    np.testing.assert_array_equal(got.data, px)


def test_run_pipeline_bgr_decode_reverses(rng):
    px = random_pixels(rng, 3, 3)
    rgb = run_pipeline(parse_steps({"decode": {"color_layout": "RGB"}}), encode_ppm(px))
    bgr = run_pipeline(parse_steps({"decode": {"color_layout": "BGR"}}), encode_ppm(px))
    np.testing.assert_array_equal(np.asarray(bgr.data)[..., ::-1], rgb.data)


def test_mean_before_cast_differs_from_cast_before_mean(rng):
    # order of mean vs cast_float changes the arithmetic domain
    px = random_pixels(rng, 4, 4)
    a = run_pipeline(parse_steps([{"decode": {}}, {"mean": 127.5},
                                  {"cast_float": None}]), encode_ppm(px))
    b = run_pipeline(parse_steps([{"decode": {}}, {"cast_float": None},
                                  {"mean": 127.5}]), encode_ppm(px))
    assert a.shape == b.shape
    assert not np.array_equal(a.data, b.data)
    np.testing.assert_array_equal(
        np.asarray(a.data), px.astype(np.float32) - np.float32(127.5))


def test_cast_float_is_idempotent(rng):
    px = random_pixels(rng, 4, 4)
    once = run_pipeline(parse_steps([{"decode": {}}, {"cast_float": None}]),
                        encode_ppm(px))
    twice = run_pipeline(parse_steps([{"decode": {}}, {"cast_float": None},
                                      {"cast_float": None}]), encode_ppm(px))
    assert once == twice


def test_layout_convert_step(rng):
    px = random_pixels(rng, 5, 7)
    steps = parse_steps({"decode": {"data_layout": "NHWC"},
                         "layout_convert": "NCHW"})
    got = run_pipeline(steps, encode_ppm(px))
    assert got.layout == NCHW
    np.testing.assert_array_equal(got.data, px.transpose(2, 0, 1))


def test_step_error_carries_index_and_cause(rng):
    px = random_pixels(rng, 4, 4)
    steps = parse_steps([{"decode": {}}, {"crop": {"percentage": 150.0}}])
    with pytest.raises(StepError) as info:
        run_pipeline(steps, encode_ppm(px))
    assert info.value.index == 1
    assert isinstance(info.value.cause, InvalidPercentage)


def test_crop_without_decode_fails_as_step_zero():
    steps = parse_steps({"crop": {"percentage": 50.0}})
    with pytest.raises(StepError) as info:
        run_pipeline(steps, b"P6\n1 1\n255\n\0\0\0")
    assert info.value.index == 0


def test_resize_channel_guard(rng):
    steps = parse_steps({"decode": {},
                         "resize": {"dimensions": [1, 8, 8]}})
    with pytest.raises(StepError) as info:
        run_pipeline(steps, encode_ppm(random_pixels(rng, 4, 4)))
    assert isinstance(info.value.cause, ChannelMismatch)


def test_empty_pipeline_rejected():
    with pytest.raises(PipelineError):
        run_pipeline((), b"\x00")


def test_pipeline_accepts_predecoded_image(rng):
    px = random_pixels(rng, 10, 10)
    steps = parse_steps({"crop": {"percentage": 50.0}})
    got = run_pipeline(steps, Image(px))
    np.testing.assert_array_equal(got.data, oracle_center_crop(px, 50.0))


def test_pipeline_emits_one_span_per_step(rng):
    clock = VirtualClock()
    tracer = Tracer(granularity=TraceLevel.MODEL, clock=clock)
    tid = tracer.new_trace()
    root = tracer.begin_span("preprocess", TraceLevel.MODEL, trace_id=tid)
    run_pipeline(CANONICAL_STEPS, encode_ppm(random_pixels(rng, 16, 16)),
                 tracer=tracer, parent_span=root)
    tracer.end_span(root)
    (tree,) = tracer.export_trace(tid)
    names = [n.span.name for n in tree.children]
    assert names == ["pipeline/decode", "pipeline/crop", "pipeline/resize",
                     "pipeline/mean", "pipeline/rescale"]
    tracer.shutdown()


# --- batching, top-k, iou -----------------------------------------------------

def test_stack_batch(rng):
    tensors = [Tensor(random_pixels(rng, 4, 4)) for _ in range(3)]
    batch = stack_batch(tensors)
    assert batch.shape == (3, 4, 4, 3)
    for i, t in enumerate(tensors):
        np.testing.assert_array_equal(batch.data[i], t.data)


def test_stack_batch_rejects_mixed_shapes(rng):
    with pytest.raises(Exception):
        stack_batch([Tensor(random_pixels(rng, 4, 4)),
                     Tensor(random_pixels(rng, 5, 4))])


def test_stack_batch_rejects_empty():
    with pytest.raises(EmptyOutput):
        stack_batch([])


def test_top_k_basic():
    preds = top_k([0.1, 0.7, 0.2], 2)
    assert [(p.index, p.probability) for p in preds] == [(1, 0.7), (2, 0.2)]


def test_top_k_ties_break_by_index():
    preds = top_k([0.25, 0.5, 0.25, 0.5], 4)
    assert [p.index for p in preds] == [1, 3, 0, 2]


def test_top_k_matches_oracle(rng):
    probs = [rng.random() for _ in range(50)]
    got = [(p.index, p.probability) for p in top_k(probs, 10)]
    assert got == oracle_top_k(probs, 10)


def test_top_k_k_larger_than_classes():
    assert len(top_k([0.5, 0.5], 10)) == 2


def test_top_k_labels():
    preds = top_k([0.9, 0.1], 1, labels=["cat", "dog"])
    assert preds[0].label == "cat"


def test_top_k_rejects_empty():
    with pytest.raises(EmptyOutput):
        top_k([], 1)
    with pytest.raises(InvalidDims):
        top_k([0.5], 0)


def test_top_k_batched():
    rows = np.array([[0.2, 0.8], [0.9, 0.1]], dtype=np.float32)
    out = top_k(rows, 1)
    assert [p[0].index for p in out] == [1, 0]


@pytest.mark.parametrize("a,b,expected", [
    ((0, 0, 2, 2), (0, 0, 2, 2), 1.0),
    ((0, 0, 2, 2), (1, 1, 3, 3), 1.0 / 7.0),
    ((0, 0, 1, 1), (2, 2, 3, 3), 0.0),
    ((0, 0, 1, 1), (1, 0, 2, 1), 0.0),      # touching edges
    ((0, 0, 0, 0), (0, 0, 0, 0), 0.0),      # degenerate
    ((0, 0, 4, 4), (1, 1, 3, 3), 4.0 / 16.0),
])
def test_iou(a, b, expected):
    box_a, box_b = BoundingBox(*a), BoundingBox(*b)
    assert iou(box_a, box_b) == pytest.approx(expected)
    assert iou(box_b, box_a) == pytest.approx(expected)


def test_iou_bounded(rng):
    for _ in range(100):
        a = BoundingBox(rng.random(), rng.random(), rng.random() + 1, rng.random() + 1)
        b = BoundingBox(rng.random(), rng.random(), rng.random() + 1, rng.random() + 1)
        assert 0.0 <= iou(a, b) <= 1.0


# manifest-embedded steps drive the same code path
def test_manifest_steps_fold(canonical_manifest_text, rng):
    m = parse_manifest(canonical_manifest_text)
    out = run_pipeline(m.inputs[0].steps, encode_ppm(random_pixels(rng, 40, 40)))
    assert out.shape == (299, 299, 3)
    assert out.element_type == "float32"
