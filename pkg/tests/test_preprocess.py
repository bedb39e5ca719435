"""Preprocessing ops, shape algebra, and pipeline composition."""

import json

import numpy as np
import pytest

from vidpipe.errors import ConfigurationError, NotFoundError, ShapeError
from vidpipe.preprocess import (
    PreprocessFn,
    compose,
    load_pipeline_file,
    lookup,
    op_names,
    pipeline_names,
    register_op,
)


def run_op(op_name, clip, params=None, out_shape=None, name=None, **apply_kwargs):
    """Register a one-step throwaway pipeline and apply it once."""
    clip = np.asarray(clip)
    if out_shape is None:
        out_shape = clip.shape
    fn = compose(name or f"tmp_{op_name}_{id(params)}", [(op_name, params or {})], out_shape)
    return fn.apply(clip, **apply_kwargs)


def bilinear_reference(frame, out_h, out_w):
    """Scalar half-pixel bilinear resize, written loop by loop."""
    h, w = frame.shape[:2]
    out = np.zeros((out_h, out_w) + frame.shape[2:], dtype=np.float64)
    for dy in range(out_h):
        sy = min(max((dy + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for dx in range(out_w):
            sx = min(max((dx + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            top = frame[y0, x0] * (1 - fx) + frame[y0, x1] * fx
            bottom = frame[y1, x0] * (1 - fx) + frame[y1, x1] * fx
            out[dy, dx] = top * (1 - fy) + bottom * fy
    return out


# ------------------------------------------------------------------- resize


def test_resize_upscale_golden():
    clip = np.array([[[0.0], [0.0]], [[1.0], [1.0]]]).reshape(1, 2, 2, 1)
    (out,) = run_op("resize_bilinear", clip, {"out_h": 4, "out_w": 4}, out_shape=(1, 4, 4, 1))
    expected_rows = [0.0, 0.25, 0.75, 1.0]
    for r, val in enumerate(expected_rows):
        np.testing.assert_allclose(out[0, r, :, 0], val, atol=1e-12)


def test_resize_matches_scalar_reference():
    rng = np.random.default_rng(0)
    clip = rng.uniform(0, 255, size=(2, 7, 5, 3))
    for out_h, out_w in [(3, 3), (7, 5), (14, 10), (4, 9), (1, 1)]:
        (out,) = run_op(
            "resize_bilinear",
            clip,
            {"out_h": out_h, "out_w": out_w},
            out_shape=(2, out_h, out_w, 3),
            name=f"ref_resize_{out_h}x{out_w}",
        )
        expected = np.stack([bilinear_reference(clip[t], out_h, out_w) for t in range(2)])
        np.testing.assert_allclose(out, expected, atol=1e-9)


def test_resize_identity_is_exact():
    rng = np.random.default_rng(1)
    clip = rng.uniform(0, 255, size=(3, 6, 6, 3))
    (out,) = run_op("resize_bilinear", clip, {"out_h": 6, "out_w": 6})
    np.testing.assert_array_equal(out, clip)


# --------------------------------------------------------------------- crop


def _marked_clip():
    """8x8 frame with a distinct value in each corner 2x2 block and center."""
    frame = np.zeros((8, 8, 1))
    frame[0:2, 0:2] = 1  # top-left
    frame[0:2, 6:8] = 2  # top-right
    frame[6:8, 0:2] = 3  # bottom-left
    frame[6:8, 6:8] = 4  # bottom-right
    frame[3:5, 3:5] = 5  # center
    return frame[None]


@pytest.mark.parametrize(
    "kind, marker",
    [("corner0", 1), ("corner1", 2), ("corner2", 3), ("corner3", 4), ("center", 5)],
)
def test_crop_kinds_land_on_markers(kind, marker):
    (out,) = run_op(
        "crop",
        _marked_clip(),
        {"out_h": 2, "out_w": 2, "kind": kind},
        out_shape=(1, 2, 2, 1),
        name=f"crop_{kind}",
    )
    assert (out == marker).all()


def test_center_crop_floors_odd_margin():
    clip = np.arange(5 * 5, dtype=np.float64).reshape(1, 5, 5, 1)
    (out,) = run_op("crop", clip, {"out_h": 2, "out_w": 2}, out_shape=(1, 2, 2, 1))
    # Margin (5-2)//2 = 1: rows/cols 1..2.
    np.testing.assert_array_equal(out[0, :, :, 0], clip[0, 1:3, 1:3, 0])


def test_random_crop_stays_in_bounds_and_is_seeded():
    clip = np.arange(6 * 6, dtype=np.float64).reshape(1, 6, 6, 1)
    fn = compose("crop_rand", [("crop", {"out_h": 3, "out_w": 3, "kind": "random"})], (1, 3, 3, 1))
    seen = set()
    for k in range(40):
        (out,) = fn.apply(clip, clip_index=k)
        top_left = out[0, 0, 0, 0]
        top, left = divmod(int(top_left), 6)
        assert 0 <= top <= 3 and 0 <= left <= 3
        np.testing.assert_array_equal(out[0, :, :, 0], clip[0, top : top + 3, left : left + 3, 0])
        seen.add((top, left))
    assert len(seen) > 3  # draws vary across clips
    (again,) = fn.apply(clip, clip_index=7)
    (first,) = fn.apply(clip, clip_index=7)
    np.testing.assert_array_equal(again, first)


def test_crop_too_large_fails_at_compose_when_shape_known():
    with pytest.raises(ConfigurationError, match="crop"):
        compose(
            "crop_big",
            [("resize_bilinear", {"out_h": 4, "out_w": 4}), ("crop", {"out_h": 8, "out_w": 8})],
            (1, 8, 8, 1),
        )


def test_crop_too_large_fails_at_apply_when_shape_unknown():
    fn = compose("crop_late", [("crop", {"out_h": 8, "out_w": 8})], (1, 8, 8, 1))
    with pytest.raises(ShapeError, match="larger than frame"):
        fn.apply(np.zeros((1, 4, 4, 1)))


def test_unknown_crop_kind_rejected():
    with pytest.raises(ConfigurationError, match="kind"):
        compose("crop_bad", [("crop", {"out_h": 2, "out_w": 2, "kind": "corner9"})], (1, 2, 2, 1))


# --------------------------------------------------------------------- flip


def test_flip_p1_reverses_width():
    clip = np.arange(2 * 3 * 4 * 1, dtype=np.float64).reshape(2, 3, 4, 1)
    (out,) = run_op("flip_horizontal", clip, {"p": 1.0})
    np.testing.assert_array_equal(out, clip[:, :, ::-1, :])


def test_flip_p0_is_identity():
    clip = np.arange(2 * 3 * 4 * 1, dtype=np.float64).reshape(2, 3, 4, 1)
    (out,) = run_op("flip_horizontal", clip, {"p": 0.0})
    np.testing.assert_array_equal(out, clip)


def test_flip_probability_monte_carlo():
    clip = np.zeros((2, 2, 2, 1))
    clip[:, :, 0, 0] = 1.0  # asymmetric: flip moves the ones to column 1
    fn = compose("flip_mc", [("flip_horizontal", {"p": 0.3})], (2, 2, 2, 1))
    flips = 0
    trials = 4000
    for k in range(trials):
        (out,) = fn.apply(clip, clip_index=k)
        flipped = out[0, 0, 1, 0] == 1.0
        # Whole-clip decision: both frames agree.
        assert (out[:, :, 1, 0] == 1.0).all() == flipped
        flips += flipped
    assert abs(flips / trials - 0.3) < 0.03


def test_flip_bad_probability_rejected():
    with pytest.raises(ConfigurationError, match="probability"):
        compose("flip_bad", [("flip_horizontal", {"p": 1.5})], (1, 2, 2, 1))


# ---------------------------------------------------------------- normalize


def test_normalize_scalar_and_per_channel():
    clip = np.full((1, 2, 2, 3), 130.0)
    clip[..., 1] = 120.0
    (out,) = run_op("normalize", clip, {"mean": [128.0, 128.0, 128.0], "scale": 1 / 128})
    np.testing.assert_allclose(out[..., 0], 2 / 128)
    np.testing.assert_allclose(out[..., 1], -8 / 128)
    (out2,) = run_op("normalize", clip, {"mean": 100.0, "scale": 2.0}, name="norm_scalar")
    np.testing.assert_allclose(out2[..., 0], 60.0)


def test_normalize_inverts():
    rng = np.random.default_rng(4)
    clip = rng.uniform(0, 255, size=(2, 3, 3, 3))
    (out,) = run_op("normalize", clip, {"mean": [10.0, 20.0, 30.0], "scale": 0.25})
    restored = out / 0.25 + np.array([10.0, 20.0, 30.0])
    np.testing.assert_allclose(restored, clip, atol=1e-12)


def test_normalize_channel_mismatch_caught_at_apply():
    fn = compose("norm_bad", [("normalize", {"mean": [1.0, 2.0]})], (1, 2, 2, 3))
    with pytest.raises(ShapeError, match="channels"):
        fn.apply(np.zeros((1, 2, 2, 3)))


def test_normalize_rejects_non_positive_scale():
    with pytest.raises(ConfigurationError, match="scale"):
        compose("norm_scale", [("normalize", {"scale": 0.0})], (1, 2, 2, 3))


# ----------------------------------------------------------------- resample


def test_resample_loop_golden():
    clip = np.arange(3, dtype=np.float64).reshape(3, 1, 1, 1)
    (out,) = run_op("resample_temporal", clip, {"out_t": 7}, out_shape=(7, 1, 1, 1))
    np.testing.assert_array_equal(out[:, 0, 0, 0], [0, 1, 2, 0, 1, 2, 0])


def test_resample_stride_golden():
    clip = np.arange(3, dtype=np.float64).reshape(3, 1, 1, 1)
    (out,) = run_op(
        "resample_temporal",
        clip,
        {"out_t": 4, "mode": "stride", "stride": 2},
        out_shape=(4, 1, 1, 1),
    )
    # Kept frames 0, 2; cycled to length 4.
    np.testing.assert_array_equal(out[:, 0, 0, 0], [0, 2, 0, 2])


def test_resample_matches_enumerated_oracle():
    for t in (1, 2, 3, 5, 8):
        clip = np.arange(t, dtype=np.float64).reshape(t, 1, 1, 1)
        for out_t in (1, 2, 5, 9):
            for stride in (1, 2, 3):
                kept = [i for i in range(t) if i % stride == 0]
                expected = [kept[i % len(kept)] for i in range(out_t)]
                (out,) = run_op(
                    "resample_temporal",
                    clip,
                    {"out_t": out_t, "mode": "stride", "stride": stride},
                    out_shape=(out_t, 1, 1, 1),
                    name=f"rs_{t}_{out_t}_{stride}",
                )
                assert out[:, 0, 0, 0].tolist() == expected


def test_resample_shape_rule_updates_t():
    fn = compose(
        "rs_shape",
        [("resample_temporal", {"out_t": 5}), ("resize_bilinear", {"out_h": 2, "out_w": 2})],
        (5, 2, 2, 3),
    )
    assert fn.output_shape == (5, 2, 2, 3)


# ------------------------------------------------------------------ shuffle


def test_shuffle_is_a_seeded_permutation():
    clip = np.arange(6, dtype=np.float64).reshape(6, 1, 1, 1)
    fn = compose("shuf", [("shuffle_frames", {})], (6, 1, 1, 1))
    (out,) = fn.apply(clip, clip_index=0)
    assert sorted(out[:, 0, 0, 0].tolist()) == [0, 1, 2, 3, 4, 5]
    (again,) = fn.apply(clip, clip_index=0)
    np.testing.assert_array_equal(out, again)
    orders = {tuple(fn.apply(clip, clip_index=k)[0][:, 0, 0, 0]) for k in range(10)}
    assert len(orders) > 1


def test_shuffle_forbidden_in_eval_pipelines():
    with pytest.raises(ConfigurationError, match="randomized"):
        compose("shuf_eval", [("shuffle_frames", {})], (4, 1, 1, 1), is_training=False)


# --------------------------------------------------------------- oversample


def test_oversample_layout():
    clip = _marked_clip()
    fn = compose("ovr", [("oversample", {"out_h": 2, "out_w": 2})], (1, 2, 2, 1))
    assert fn.fan_out == 10
    outs = fn.apply(clip)
    assert len(outs) == 10
    # First five: center, then the four corners in reading order.
    for i, marker in enumerate([5, 1, 2, 3, 4]):
        assert (outs[i] == marker).all(), f"crop {i}"
    for i in range(5):
        np.testing.assert_array_equal(outs[5 + i], outs[i][:, :, ::-1, :])


def test_oversample_allowed_in_eval():
    fn = compose("ovr_eval", [("oversample", {"out_h": 2, "out_w": 2})], (1, 2, 2, 1), is_training=False)
    assert len(fn.apply(_marked_clip())) == 10


# ------------------------------------------------- composition and registry


def test_compose_rejects_unknown_op():
    with pytest.raises(NotFoundError, match="no_such_op"):
        compose("bad_op", [("no_such_op", {})], (1, 2, 2, 3))


def test_compose_rejects_shape_mismatch():
    with pytest.raises(ConfigurationError, match="output_shape"):
        compose("bad_shape", [("resize_bilinear", {"out_h": 4, "out_w": 4})], (1, 8, 8, 3))


def test_compose_rejects_bad_output_shape():
    with pytest.raises(ConfigurationError, match="output_shape"):
        compose("bad_decl", [], (0, 2, 2, 3))


def test_compose_names_failing_step():
    with pytest.raises(ConfigurationError, match=r"step 1 \(resize_bilinear\)"):
        compose(
            "bad_step",
            [("normalize", {}), ("resize_bilinear", {"out_h": 0, "out_w": 2})],
            (1, 2, 2, 3),
        )


def test_duplicate_pipeline_name_rejected():
    compose("dup_pipe", [], (1, 2, 2, 3))
    with pytest.raises(ConfigurationError, match="already registered"):
        compose("dup_pipe", [], (1, 2, 2, 3))


def test_duplicate_op_name_rejected():
    with pytest.raises(ConfigurationError, match="already registered"):
        register_op("crop", lambda clip, rng: clip)


def test_custom_op_with_fan_out():
    register_op("twin", lambda clip, rng: [clip, clip + 1.0], fan_out=2)
    assert "twin" in op_names()
    fn = compose("twin_pipe", [("twin", {})], (1, 2, 2, 1))
    assert fn.fan_out == 2
    outs = fn.apply(np.zeros((1, 2, 2, 1)))
    assert len(outs) == 2
    np.testing.assert_array_equal(outs[1], outs[0] + 1.0)


def test_lookup_and_names():
    fn = compose("look_me_up", [], (1, 2, 2, 3))
    assert lookup("look_me_up") is fn
    assert "look_me_up" in pipeline_names()
    with pytest.raises(NotFoundError, match="look_me_up_not"):
        lookup("look_me_up_not")


def test_builtin_pipelines_registered_on_import():
    names = pipeline_names()
    for expected in ("meanframe_train", "meanframe_eval", "lastframe_train", "lastframe_eval"):
        assert expected in names


# ---------------------------------------------------------------- apply API


def test_apply_upconverts_to_contiguous_float64():
    clip = np.arange(2 * 2 * 2 * 1, dtype=np.uint8).reshape(2, 2, 2, 1)
    fn = compose("passthrough", [], (2, 2, 2, 1))
    (out,) = fn.apply(clip)
    assert out.dtype == np.float64
    assert out.flags["C_CONTIGUOUS"]
    np.testing.assert_array_equal(out, clip.astype(np.float64))


def test_apply_rejects_non_4d():
    fn = compose("dims", [], (2, 2, 2, 1))
    with pytest.raises(ShapeError, match="T, H, W, C"):
        fn.apply(np.zeros((2, 2, 2)))


def test_apply_enforces_declared_output_shape():
    fn = compose("shape_guard", [("normalize", {"mean": 0.0})], (2, 4, 4, 3))
    with pytest.raises(ShapeError, match="declared output_shape"):
        fn.apply(np.zeros((2, 3, 3, 3)))


def test_apply_randomness_keyed_by_video_and_clip():
    clip = np.arange(8, dtype=np.float64).reshape(8, 1, 1, 1)
    fn = compose("keyed", [("shuffle_frames", {})], (8, 1, 1, 1), seed=3)
    a = fn.apply(clip, stream_seed=1, video_name="v0", clip_index=0)[0]
    b = fn.apply(clip, stream_seed=1, video_name="v0", clip_index=0)[0]
    np.testing.assert_array_equal(a, b)
    c = fn.apply(clip, stream_seed=1, video_name="v1", clip_index=0)[0]
    d = fn.apply(clip, stream_seed=2, video_name="v0", clip_index=0)[0]
    assert not np.array_equal(a, c) or not np.array_equal(a, d)


def test_eval_pipeline_is_deterministic_end_to_end():
    rng = np.random.default_rng(9)
    clip = rng.uniform(0, 255, size=(12, 20, 20, 3)).astype(np.uint8)
    fn = lookup("meanframe_eval")
    a = fn.apply(clip, stream_seed=5, video_name="x", clip_index=2)[0]
    b = fn.apply(clip, stream_seed=99, video_name="y", clip_index=7)[0]
    np.testing.assert_array_equal(a, b)
    assert a.shape == fn.output_shape == (8, 16, 16, 3)


# ------------------------------------------------------------ pipeline files


def test_load_pipeline_file_round_trip(tmp_path):
    doc = {
        "name": "from_file",
        "steps": [
            {"op": "resize_bilinear", "params": {"out_h": 4, "out_w": 4}},
            {"op": "normalize", "params": {"mean": 128.0, "scale": 0.5}},
        ],
        "output_shape": [2, 4, 4, 3],
        "is_training": False,
    }
    path = tmp_path / "pipe.json"
    path.write_text(json.dumps(doc))
    fn = load_pipeline_file(path)
    assert fn.name == "from_file"
    assert not fn.is_training
    assert lookup("from_file") is fn
    (out,) = fn.apply(np.full((2, 8, 8, 3), 130, dtype=np.uint8))
    np.testing.assert_allclose(out, 1.0)


def test_load_pipeline_file_rejects_missing_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"steps": []}))
    with pytest.raises(ConfigurationError, match="invalid pipeline description"):
        load_pipeline_file(path)
