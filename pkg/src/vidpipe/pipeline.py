"""Two-queue streaming mini-batch pipeline.

A stream is built from a dataset index, a clip plan, a preprocessing
pipeline, and a pipeline config. Worker threads pull video paths from a
file queue, read each record, plan and extract its clips, preprocess them,
and push the results into a bounded clips queue. A single consumer
assembles mini-batches from that queue:

* train mode: the file list is reshuffled with a seeded draw on every pass
  and re-enqueued indefinitely; every batch has exactly ``batch_size``
  clips. When a video's clips do not fill a batch, the surplus simply stays
  in the queue and leads the next batch (spill-over).
* test mode: every video is visited exactly once in index order; full
  batches are followed by one final partial batch, then end-of-stream.

Ordering: a video is owned by exactly one worker at a time, and a new visit
of a video (train mode re-enqueue) cannot begin until the previous visit
has pushed all its clips, so each video's clips enter the stream in
strictly increasing clip_index order within every visit. Interleaving
across videos is nondeterministic with several workers; with one worker and
fixed seeds the whole stream is deterministic.

Failures reading or preprocessing a video never kill the stream: the video
is skipped and recorded in the diagnostics summary.
"""

from __future__ import annotations

import logging
import math
import queue
import random
import threading
from dataclasses import dataclass

import numpy as np

from .clips import ClipSpec, extract_clip, plan_clips
from .errors import ConfigurationError
from .preprocess import PreprocessFn
from .records import DatasetIndex, read_record
from .seeding import derive_seed

logger = logging.getLogger(__name__)

__all__ = ["ClipTensor", "Batch", "PipelineConfig", "BatchStream", "build_stream", "iterations_per_epoch"]

_DONE = object()
_POLL_S = 0.05


@dataclass
class ClipTensor:
    """One preprocessed clip with its provenance.

    ``copy`` distinguishes fan-out copies (oversample) that share a
    clip_index; it is 0 for ordinary clips.
    """

    values: np.ndarray
    label: int
    video_name: str
    clip_index: int
    copy: int = 0


@dataclass
class Batch:
    """A fixed group of preprocessed clips handed to the model."""

    clips: np.ndarray  # (B, T, H, W, C) float64
    labels: np.ndarray  # (B,) int64
    provenance: list  # B (video_name, clip_index) pairs
    iteration: int

    @property
    def size(self) -> int:
        return int(self.clips.shape[0])


@dataclass
class PipelineConfig:
    batch_size: int
    num_workers: int = 1
    clips_queue_capacity: int = 0  # 0 means 2 * batch_size
    shuffle_seed: int = 0
    mode: str = "train"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.num_workers < 1:
            raise ConfigurationError(f"num_workers must be >= 1, got {self.num_workers}")
        if self.clips_queue_capacity == 0:
            self.clips_queue_capacity = 2 * self.batch_size
        if self.clips_queue_capacity < self.batch_size:
            raise ConfigurationError(
                f"clips_queue_capacity {self.clips_queue_capacity} < batch_size {self.batch_size}; "
                "a batch could never assemble"
            )
        if self.mode not in ("train", "test"):
            raise ConfigurationError(f"mode must be 'train' or 'test', got {self.mode!r}")


class BatchStream:
    """See module docstring. Create via :func:`build_stream`."""

    def __init__(self, index: DatasetIndex, split: str, spec: ClipSpec, preprocess: PreprocessFn, cfg: PipelineConfig):
        if split not in index.splits:
            raise ConfigurationError(f"split {split!r} not in index; available: {sorted(index.splits)}")
        entries = index.entries(split)
        if not entries:
            raise ConfigurationError(f"split {split!r} is empty")
        self._index = index
        self._entries = entries
        self._spec = spec
        self._preprocess = preprocess
        self._cfg = cfg

        # File queue state: pending entry positions, guarded by _cond. A
        # video is moved to _in_flight while a worker owns it so two visits
        # can never overlap.
        self._cond = threading.Condition()
        self._pending: list[int] = []
        self._in_flight: set[int] = set()
        self._pass_index = 0
        self._refill()

        self._clips_queue: queue.Queue = queue.Queue(maxsize=cfg.clips_queue_capacity)
        self._stop = threading.Event()
        self._done_seen = 0
        self._leftover: list[ClipTensor] = []
        self._iteration = 0
        self._ended = False

        self._diag_lock = threading.Lock()
        self._diag = {
            "videos_read": 0,
            "clips_emitted": 0,
            "batches_emitted": 0,
            "skipped": [],
            "clips_queue_size": 0,
            "clips_queue_peak": 0,
        }

        self._workers = [
            threading.Thread(target=self._worker_loop, name=f"vidpipe-worker-{i}", daemon=True)
            for i in range(cfg.num_workers)
        ]
        for t in self._workers:
            t.start()

    # ------------------------------------------------------------- file queue

    def _refill(self):
        order = list(range(len(self._entries)))
        if self._cfg.mode == "train":
            rng = random.Random(derive_seed(self._cfg.shuffle_seed, "pass", self._pass_index))
            rng.shuffle(order)
        self._pending = order
        self._pass_index += 1

    def _next_task(self):
        """Pop the next entry position not currently owned by another worker."""
        with self._cond:
            while not self._stop.is_set():
                for i, pos in enumerate(self._pending):
                    if pos not in self._in_flight:
                        del self._pending[i]
                        self._in_flight.add(pos)
                        return pos
                if not self._pending and not self._in_flight:
                    if self._cfg.mode == "train":
                        self._refill()
                        continue
                    return None
                if not self._pending and self._cfg.mode == "train":
                    # Everything is owned by other workers; start the next
                    # pass rather than idling.
                    self._refill()
                    continue
                # Remaining videos are all in flight; wait for one to finish.
                self._cond.wait(timeout=_POLL_S)
            return None

    def _release_task(self, pos):
        with self._cond:
            self._in_flight.discard(pos)
            self._cond.notify_all()

    # ---------------------------------------------------------------- workers

    def _skip(self, video, reason):
        logger.warning("skipping video %s: %s", video, reason)
        with self._diag_lock:
            self._diag["skipped"].append({"video": video, "reason": reason})

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._clips_queue.put(item, timeout=_POLL_S)
            except queue.Full:
                continue
            if isinstance(item, ClipTensor):
                with self._diag_lock:
                    self._diag["clips_emitted"] += 1
                    self._diag["clips_queue_size"] += 1
                    peak = self._diag["clips_queue_peak"]
                    self._diag["clips_queue_peak"] = max(peak, self._diag["clips_queue_size"])
            return True
        return False

    def _process_video(self, entry) -> bool:
        path = self._index.root / entry.path
        try:
            record = read_record(path)
            plan_seed = derive_seed(self._cfg.shuffle_seed, "clips", record.name)
            windows = plan_clips(record.num_frames, self._spec, seed=plan_seed)
        except Exception as exc:
            self._skip(entry.path, f"read_error: {exc}")
            return True
        with self._diag_lock:
            self._diag["videos_read"] += 1
        if not windows:
            self._skip(record.name, "no_clips")
            return True
        for k, window in enumerate(windows):
            try:
                raw = extract_clip(record.data, window)
                outputs = self._preprocess.apply(
                    raw, stream_seed=self._cfg.shuffle_seed, video_name=record.name, clip_index=k
                )
            except Exception as exc:
                self._skip(record.name, f"preprocess_error: {exc}")
                return True
            for copy, values in enumerate(outputs):
                clip = ClipTensor(
                    values=values, label=record.label, video_name=record.name, clip_index=k, copy=copy
                )
                if not self._put(clip):
                    return False
        return True

    def _worker_loop(self):
        while not self._stop.is_set():
            pos = self._next_task()
            if pos is None:
                break
            try:
                if not self._process_video(self._entries[pos]):
                    break
            finally:
                self._release_task(pos)
        self._put_done()

    def _put_done(self):
        # Sentinels must get through even when the stream is stopping, but
        # never block forever; the consumer also checks worker liveness.
        try:
            self._clips_queue.put(_DONE, timeout=1.0)
        except queue.Full:
            pass

    # --------------------------------------------------------------- consumer

    def _take_clip(self):
        """Blocking get; returns a ClipTensor, or None when no clip can come."""
        while True:
            try:
                item = self._clips_queue.get(timeout=_POLL_S)
            except queue.Empty:
                if self._stop.is_set():
                    return None
                if self._done_seen >= len(self._workers):
                    return None
                if not any(t.is_alive() for t in self._workers) and self._clips_queue.empty():
                    return None
                continue
            if item is _DONE:
                self._done_seen += 1
                if self._done_seen >= len(self._workers):
                    return None
                continue
            with self._diag_lock:
                self._diag["clips_queue_size"] -= 1
            return item

    def _assemble(self, clips) -> Batch:
        batch = Batch(
            clips=np.stack([c.values for c in clips]),
            labels=np.asarray([c.label for c in clips], dtype=np.int64),
            provenance=[(c.video_name, c.clip_index) for c in clips],
            iteration=self._iteration,
        )
        self._iteration += 1
        with self._diag_lock:
            self._diag["batches_emitted"] += 1
        return batch

    def next_batch(self) -> Batch | None:
        """Return the next Batch, or None at end-of-stream (test mode only)."""
        if self._ended:
            return None
        want = self._cfg.batch_size
        while len(self._leftover) < want:
            clip = self._take_clip()
            if clip is None:
                if self._cfg.mode == "train":
                    if not self._stop.is_set():
                        raise ConfigurationError("train stream ended unexpectedly: all workers exited")
                    self._ended = True
                    return None
                break
            self._leftover.append(clip)
        if len(self._leftover) >= want:
            batch_clips, self._leftover = self._leftover[:want], self._leftover[want:]
            return self._assemble(batch_clips)
        if self._leftover:
            batch_clips, self._leftover = self._leftover, []
            self._ended = True
            return self._assemble(batch_clips)
        self._ended = True
        return None

    def __iter__(self):
        while True:
            batch = self.next_batch()
            if batch is None:
                return
            yield batch

    # ------------------------------------------------------------- lifecycle

    def diagnostics(self) -> dict:
        """JSON-ready snapshot of stream counters."""
        with self._diag_lock:
            snap = dict(self._diag)
            snap["skipped"] = list(self._diag["skipped"])
        snap.pop("clips_queue_size")
        return snap

    def close(self):
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        # Unblock producers stuck on a full queue.
        deadline = 50
        while any(t.is_alive() for t in self._workers) and deadline > 0:
            try:
                while True:
                    self._clips_queue.get_nowait()
            except queue.Empty:
                pass
            for t in self._workers:
                t.join(timeout=0.1)
            deadline -= 1

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def build_stream(index: DatasetIndex, split: str, spec: ClipSpec, preprocess: PreprocessFn, cfg: PipelineConfig) -> BatchStream:
    """Start workers and return a ready stream. Close it when done."""
    return BatchStream(index, split, spec, preprocess, cfg)


def iterations_per_epoch(index: DatasetIndex, split: str, spec: ClipSpec, batch_size: int, fan_out: int = 1) -> int:
    """Number of full batches covering one pass over a split.

    With a fixed clip count per video this is ceil(videos * clips / B); in
    ALL mode the count comes from planning each video against its stored
    frame count. ``fan_out`` scales for preprocessing that multiplies clips.
    """
    entries = index.entries(split)
    if spec.clip_length is None:
        total = len(entries)
    elif spec.num_clips is not None:
        total = len(entries) * spec.num_clips
    else:
        total = sum(len(plan_clips(e.num_frames, spec)) for e in entries)
    return math.ceil(total * fan_out / batch_size)
