"""Composable clip preprocessing pipelines.

A pipeline is an ordered list of named ops applied to a whole clip, a
``(T, H, W, C)`` array. Pipelines are registered under a name, declare a
fixed output shape, and are validated at registration time by propagating a
symbolic shape (entries may be unknown) through every step, so a
shape-incompatible composition fails before any data flows.

Randomized steps (random crop, probabilistic flip) draw from a per-clip
``random.Random`` seeded from (pipeline seed, stream seed, video name,
clip index). That makes augmentation reproducible regardless of which
worker thread processes the clip, and constant across frames within one
clip. Evaluation-mode pipelines refuse randomized steps at registration.

Ops normally map one clip to one clip; ``oversample`` fans out to 10. New
ops can be added with :func:`register_op`, and pipelines can be described
declaratively in JSON for command-line use.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NotFoundError, ShapeError
from .seeding import derive_seed

__all__ = [
    "PreprocessFn",
    "compose",
    "lookup",
    "pipeline_names",
    "register_op",
    "op_names",
    "load_pipeline_file",
]

# Symbolic clip shape: (T, H, W, C), entries int or None for unknown.
Shape = tuple


def _identity_shape(shape: Shape, params: dict) -> Shape:
    return shape


@dataclass(frozen=True)
class _OpDef:
    name: str
    apply: Callable
    infer_shape: Callable
    randomized: Callable
    fan_out: int = 1


_OPS: dict[str, _OpDef] = {}
_PIPELINES: dict[str, "PreprocessFn"] = {}
_LOCK = threading.Lock()


def register_op(name, apply, infer_shape=None, randomized=False, fan_out=1):
    """Add an op to the registry.

    ``apply(clip, rng, **params)`` receives a float64 clip and returns a clip
    (or a list of clips when ``fan_out`` > 1). ``infer_shape(shape, params)``
    maps a symbolic input shape to the output shape and is also where
    parameters are validated; it defaults to identity. ``randomized`` is a
    bool or a ``params -> bool`` predicate marking steps whose output depends
    on the per-clip random state.
    """
    if not callable(randomized):
        flag = bool(randomized)
        randomized = lambda params, _flag=flag: _flag
    op = _OpDef(
        name=name,
        apply=apply,
        infer_shape=infer_shape or _identity_shape,
        randomized=randomized,
        fan_out=fan_out,
    )
    with _LOCK:
        if name in _OPS:
            raise ConfigurationError(f"preprocessing op {name!r} already registered")
        _OPS[name] = op
    return op


def op_names() -> list[str]:
    return sorted(_OPS)


# ---------------------------------------------------------------- built-in ops


def _resize_shape(shape, params):
    out_h, out_w = int(params["out_h"]), int(params["out_w"])
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"resize target {out_h}x{out_w} must be >= 1x1")
    t, h, w, c = shape
    return (t, out_h, out_w, c)


def _apply_resize(clip, rng, out_h, out_w):
    t, h, w, c = clip.shape
    out_h, out_w = int(out_h), int(out_w)
    if (h, w) == (out_h, out_w):
        return clip
    # Half-pixel source mapping: src = (dst + 0.5) * in/out - 0.5, clamped.
    # Interpolation is separable, rows first then columns.
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[None, :, None, None]
    wx = (sx - x0)[None, None, :, None]
    rows = clip[:, y0] * (1.0 - wy) + clip[:, y1] * wy
    return rows[:, :, x0] * (1.0 - wx) + rows[:, :, x1] * wx


_CROP_KINDS = ("center", "random", "corner0", "corner1", "corner2", "corner3")


def _crop_shape(shape, params):
    kind = params.get("kind", "center")
    if kind not in _CROP_KINDS:
        raise ConfigurationError(f"unknown crop kind {kind!r}; one of {_CROP_KINDS}")
    out_h, out_w = int(params["out_h"]), int(params["out_w"])
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"crop target {out_h}x{out_w} must be >= 1x1")
    t, h, w, c = shape
    if h is not None and out_h > h:
        raise ShapeError(f"crop height {out_h} exceeds frame height {h}")
    if w is not None and out_w > w:
        raise ShapeError(f"crop width {out_w} exceeds frame width {w}")
    return (t, out_h, out_w, c)


def _crop_origin(h, w, out_h, out_w, kind, rng):
    if out_h > h or out_w > w:
        raise ShapeError(f"crop {out_h}x{out_w} larger than frame {h}x{w}")
    if kind == "center":
        return (h - out_h) // 2, (w - out_w) // 2
    if kind == "random":
        return rng.randint(0, h - out_h), rng.randint(0, w - out_w)
    corner = int(kind[-1])
    top = 0 if corner < 2 else h - out_h
    left = 0 if corner % 2 == 0 else w - out_w
    return top, left


def _apply_crop(clip, rng, out_h, out_w, kind="center"):
    t, h, w, c = clip.shape
    out_h, out_w = int(out_h), int(out_w)
    top, left = _crop_origin(h, w, out_h, out_w, kind, rng)
    return clip[:, top : top + out_h, left : left + out_w, :]


def _flip_shape(shape, params):
    p = float(params.get("p", 0.5))
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"flip probability {p} outside [0, 1]")
    return shape


def _apply_flip(clip, rng, p=0.5):
    p = float(p)
    if p <= 0.0:
        return clip
    if p < 1.0 and rng.random() >= p:
        return clip
    return clip[:, :, ::-1, :]


def _normalize_shape(shape, params):
    scale = float(params.get("scale", 1.0))
    if scale <= 0.0:
        raise ConfigurationError(f"normalize scale must be > 0, got {scale}")
    mean = params.get("mean", 0.0)
    c = shape[3]
    if not np.isscalar(mean) and c is not None and len(mean) != c:
        raise ConfigurationError(f"normalize mean has {len(mean)} entries for {c} channels")
    return shape


def _apply_normalize(clip, rng, mean=0.0, scale=1.0):
    mean = np.asarray(mean, dtype=np.float64)
    if mean.ndim > 0:
        if mean.shape[0] != clip.shape[3]:
            raise ShapeError(f"normalize mean has {mean.shape[0]} entries for {clip.shape[3]} channels")
        mean = mean.reshape(1, 1, 1, -1)
    return (clip - mean) * float(scale)


def _resample_shape(shape, params):
    out_t = int(params["out_t"])
    if out_t < 1:
        raise ConfigurationError(f"resample target length must be >= 1, got {out_t}")
    mode = params.get("mode", "loop")
    if mode not in ("loop", "stride"):
        raise ConfigurationError(f"unknown resample mode {mode!r}; one of ('loop', 'stride')")
    if mode == "stride" and int(params.get("stride", 1)) < 1:
        raise ConfigurationError(f"resample stride must be >= 1, got {params.get('stride')}")
    return (out_t,) + tuple(shape[1:])


def _apply_resample(clip, rng, out_t, mode="loop", stride=1):
    t = clip.shape[0]
    out_t = int(out_t)
    if mode == "loop":
        idx = [i % t for i in range(out_t)]
    else:
        kept = list(range(0, t, int(stride)))
        idx = [kept[i % len(kept)] for i in range(out_t)]
    return clip[np.asarray(idx, dtype=np.intp)]


def _apply_shuffle(clip, rng):
    order = list(range(clip.shape[0]))
    rng.shuffle(order)
    return clip[np.asarray(order, dtype=np.intp)]


def _apply_oversample(clip, rng, out_h, out_w):
    out_h, out_w = int(out_h), int(out_w)
    t, h, w, c = clip.shape
    crops = []
    for kind in ("center", "corner0", "corner1", "corner2", "corner3"):
        top, left = _crop_origin(h, w, out_h, out_w, kind, rng)
        crops.append(clip[:, top : top + out_h, left : left + out_w, :])
    return crops + [crop[:, :, ::-1, :] for crop in crops]


register_op("resize_bilinear", _apply_resize, _resize_shape)
register_op("crop", _apply_crop, _crop_shape, randomized=lambda p: p.get("kind", "center") == "random")
register_op("flip_horizontal", _apply_flip, _flip_shape, randomized=lambda p: 0.0 < float(p.get("p", 0.5)) < 1.0)
register_op("normalize", _apply_normalize, _normalize_shape)
register_op("resample_temporal", _apply_resample, _resample_shape)
register_op("shuffle_frames", _apply_shuffle, randomized=True)
register_op("oversample", _apply_oversample, _crop_shape, fan_out=10)


# ------------------------------------------------------------------ pipelines


@dataclass(frozen=True)
class PreprocessFn:
    """A registered, immutable preprocessing pipeline.

    ``steps`` is a tuple of (op name, params) pairs; ``output_shape`` is the
    concrete (T, H, W, C) every application must produce. Application
    returns a list of float64 clips: length 1 unless a fan-out step such as
    oversample is present.
    """

    name: str
    steps: tuple
    output_shape: tuple
    is_training: bool = True
    seed: int = 0

    @property
    def fan_out(self) -> int:
        n = 1
        for op_name, _ in self.steps:
            n *= _OPS[op_name].fan_out
        return n

    def apply(self, clip, stream_seed=0, video_name="", clip_index=0) -> list[np.ndarray]:
        clip = np.asarray(clip)
        if clip.ndim != 4:
            raise ShapeError(f"expected a (T, H, W, C) clip, got shape {clip.shape}")
        rng = random.Random(derive_seed(self.seed, stream_seed, video_name, clip_index))
        clips = [clip.astype(np.float64)]
        for op_name, params in self.steps:
            op = _OPS[op_name]
            produced = []
            for current in clips:
                out = op.apply(current, rng, **params)
                if isinstance(out, list):
                    produced.extend(out)
                else:
                    produced.append(out)
            clips = produced
        for out in clips:
            if tuple(out.shape) != self.output_shape:
                raise ShapeError(
                    f"pipeline {self.name!r} produced shape {tuple(out.shape)}, "
                    f"declared output_shape is {self.output_shape}"
                )
        return [np.ascontiguousarray(out) for out in clips]


def compose(name, steps, output_shape, is_training=True, seed=0) -> PreprocessFn:
    """Validate, register, and return a named pipeline.

    Each step is an (op name, params) pair. The symbolic input shape starts
    fully unknown and is pushed through every step's shape rule; known
    entries must end up matching ``output_shape`` exactly, and any step
    rejecting its parameters fails the whole composition with the step named.
    """
    output_shape = tuple(int(x) for x in output_shape)
    if len(output_shape) != 4 or any(x < 1 for x in output_shape):
        raise ConfigurationError(f"output_shape must be 4 positive entries (T, H, W, C), got {output_shape}")

    normalized = []
    shape: Shape = (None, None, None, None)
    for i, (op_name, params) in enumerate(steps):
        if op_name not in _OPS:
            raise NotFoundError(f"{name!r} step {i}: unknown op {op_name!r}; registered ops: {op_names()}")
        op = _OPS[op_name]
        params = dict(params)
        try:
            shape = tuple(op.infer_shape(shape, params))
        except (ConfigurationError, ShapeError) as exc:
            raise ConfigurationError(f"{name!r} step {i} ({op_name}): {exc}") from exc
        if not is_training and op.randomized(params):
            raise ConfigurationError(
                f"{name!r} step {i} ({op_name}) is randomized; evaluation-mode pipelines must be deterministic"
            )
        normalized.append((op_name, params))

    for got, want in zip(shape, output_shape):
        if got is not None and got != want:
            raise ConfigurationError(
                f"{name!r}: steps produce shape {shape}, declared output_shape is {output_shape}"
            )

    fn = PreprocessFn(
        name=name,
        steps=tuple(normalized),
        output_shape=output_shape,
        is_training=is_training,
        seed=seed,
    )
    with _LOCK:
        if name in _PIPELINES:
            raise ConfigurationError(f"preprocessing pipeline {name!r} already registered")
        _PIPELINES[name] = fn
    return fn


def lookup(name: str) -> PreprocessFn:
    with _LOCK:
        fn = _PIPELINES.get(name)
    if fn is None:
        raise NotFoundError(f"no preprocessing pipeline named {name!r}; registered: {pipeline_names()}")
    return fn


def pipeline_names() -> list[str]:
    with _LOCK:
        return sorted(_PIPELINES)


def load_pipeline_file(path) -> PreprocessFn:
    """Register a pipeline from a declarative JSON file.

    Expected document: ``{"name": ..., "steps": [{"op": ..., "params": {...}},
    ...], "output_shape": [T, H, W, C], "is_training": bool, "seed": int}``
    with the last two optional.
    """
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        steps = [(s["op"], s.get("params", {})) for s in doc["steps"]]
        return compose(
            doc["name"],
            steps,
            doc["output_shape"],
            is_training=bool(doc.get("is_training", True)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{path}: invalid pipeline description: {exc!r}") from exc
