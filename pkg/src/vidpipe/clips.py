"""Clip window planning and extraction.

A clip is a run of ``clip_length`` frame indices taken from a video of
``num_frames`` frames. Windows are placed at

    start_k = offset + k * (clip_length + stride)

and the j-th frame of window k is ``(start_k + j) % num_frames``: indices
past the end loop back to the start of the video, so every planned window is
fully populated. A negative stride overlaps consecutive windows; it must
stay smaller in magnitude than the clip length so the start sequence still
advances.

Special cases:

* ``clip_length=None`` selects the whole video as one window.
* ``num_clips=None`` selects every wrap-free window: k is included while
  ``start_k + clip_length <= num_frames``. Short videos can yield zero
  windows in this mode.
* ``random_select=True`` draws ``num_clips`` starts uniformly from
  ``[0, max(num_frames - clip_length, 0)]`` and sorts them ascending, so
  successive clips still move forward through the video.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["ClipSpec", "plan_clips", "extract_clip"]


@dataclass(frozen=True)
class ClipSpec:
    """How to cut one video into clips.

    ``clip_length=None`` means the whole video; ``num_clips=None`` means as
    many wrap-free windows as fit. ``seed`` feeds the random start picker and
    is only consulted when ``random_select`` is on.
    """

    clip_length: int | None = None
    num_clips: int | None = 1
    offset: int = 0
    stride: int = 0
    random_select: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.clip_length is not None and self.clip_length < 1:
            raise ConfigurationError(f"clip_length must be >= 1, got {self.clip_length}")
        if self.num_clips is not None and self.num_clips < 1:
            raise ConfigurationError(f"num_clips must be >= 1, got {self.num_clips}")
        if self.offset < 0:
            raise ConfigurationError(f"offset must be >= 0, got {self.offset}")
        if self.stride < 0:
            if self.clip_length is None:
                raise ConfigurationError("negative stride requires an explicit clip_length")
            if -self.stride >= self.clip_length:
                raise ConfigurationError(
                    f"negative stride magnitude {-self.stride} must be < clip_length {self.clip_length}"
                )
        if self.random_select and (self.clip_length is None or self.num_clips is None):
            raise ConfigurationError("random_select requires explicit clip_length and num_clips")


def plan_clips(num_frames: int, spec: ClipSpec, seed: int | None = None) -> list[list[int]]:
    """Return the frame-index windows ``spec`` selects from a video.

    Returns a list of index lists, one per clip, in start order. ``seed``
    overrides ``spec.seed`` for random selection so callers can mix in
    per-video entropy.
    """
    if num_frames < 1:
        raise ConfigurationError(f"num_frames must be >= 1, got {num_frames}")

    if spec.clip_length is None:
        return [list(range(num_frames))]

    length = spec.clip_length
    if spec.random_select:
        rng = random.Random(spec.seed if seed is None else seed)
        hi = max(num_frames - length, 0)
        starts = sorted(rng.randint(0, hi) for _ in range(spec.num_clips))
    else:
        step = length + spec.stride
        if spec.num_clips is None:
            starts = list(range(spec.offset, num_frames - length + 1, step))
        else:
            starts = [spec.offset + k * step for k in range(spec.num_clips)]

    if num_frames == 1:
        return [[0] * length for _ in starts]
    windows = []
    for start in starts:
        if start + length <= num_frames:
            windows.append(list(range(start, start + length)))
        else:
            windows.append([(start + j) % num_frames for j in range(length)])
    return windows


def extract_clip(data: np.ndarray, frame_indices: list[int]) -> np.ndarray:
    """Gather ``frame_indices`` from a ``(T, H, W, C)`` array into a new clip."""
    num_frames = data.shape[0]
    for idx in frame_indices:
        if not 0 <= idx < num_frames:
            raise ConfigurationError(f"frame index {idx} out of range for {num_frames} frames")
    return data[np.asarray(frame_indices, dtype=np.intp)]
