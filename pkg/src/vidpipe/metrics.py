"""Video-level consensus, accuracy computation, and scalar event logging.

Models emit per-clip score vectors; accuracy is reported per video. The two
consensus methods are:

* ``avg_pooling``: softmax each clip's scores, then arithmetic-mean them
  over the video's clips.
* ``last_frame``: softmax the scores of the clip with the highest
  clip_index; entries tied at that index (oversample copies) are averaged
  so the result does not depend on entry order.

Scores enter raw (pre-softmax); softmax is applied here exactly once.
Prediction sets that already carry one entry per video (``per_video``
granularity) pass through aggregation unchanged.

The scalar log is a JSON-lines file, one ``{"step", "tag", "value",
"wall_time"}`` object per line, append-only.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConsistencyError

__all__ = [
    "PredictionSet",
    "MetricReport",
    "softmax",
    "aggregate",
    "top1_accuracy",
    "ScalarLogger",
    "read_scalar_log",
    "METHODS",
]

METHODS = ("avg_pooling", "last_frame")


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PredictionSet:
    """Raw model scores with provenance.

    ``entries`` is a list of (video_name, clip_index, scores) triples with
    raw (pre-softmax) score vectors of length ``num_classes``. With
    ``per_video`` granularity each video has exactly one entry.
    """

    entries: list
    num_classes: int
    granularity: str = "per_clip"

    def __post_init__(self):
        if self.granularity not in ("per_clip", "per_video"):
            raise ConfigurationError(f"unknown granularity {self.granularity!r}")
        seen = set()
        for video, clip_index, scores in self.entries:
            if len(scores) != self.num_classes:
                raise ConsistencyError(
                    f"video {video!r} clip {clip_index}: {len(scores)} scores for {self.num_classes} classes"
                )
            if self.granularity == "per_video":
                if video in seen:
                    raise ConsistencyError(f"per_video set has multiple entries for {video!r}")
                seen.add(video)


@dataclass
class MetricReport:
    """Per-video predictions plus the derived summary numbers."""

    video_names: list
    predicted: list
    true_labels: list
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted class
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "accuracy": self.accuracy,
            "num_videos": len(self.video_names),
            "confusion": self.confusion.tolist(),
            "videos": [
                {"video": v, "predicted": int(p), "label": int(t)}
                for v, p, t in zip(self.video_names, self.predicted, self.true_labels)
            ],
        }


def aggregate(preds: PredictionSet, method: str) -> dict[str, np.ndarray]:
    """Collapse per-clip scores into one score vector per video."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown consensus method {method!r}; one of {METHODS}")
    if preds.granularity == "per_video":
        return {video: np.asarray(scores, dtype=np.float64) for video, _, scores in preds.entries}

    by_video: dict[str, list] = {}
    for video, clip_index, scores in preds.entries:
        by_video.setdefault(video, []).append((clip_index, np.asarray(scores, dtype=np.float64)))

    out = {}
    for video, rows in by_video.items():
        if method == "avg_pooling":
            stacked = np.stack([softmax(scores) for _, scores in rows])
        else:
            last = max(clip_index for clip_index, _ in rows)
            stacked = np.stack([softmax(scores) for clip_index, scores in rows if clip_index == last])
        out[video] = stacked.mean(axis=0)
    return out


def top1_accuracy(video_scores: dict[str, np.ndarray], true_labels: dict[str, int], method: str = "avg_pooling") -> MetricReport:
    """Score per-video predictions against true labels.

    Prediction is argmax with ties broken to the lowest class index. The
    confusion matrix is (num_classes, num_classes) with rows indexed by true
    class, and accuracy equals its trace over its total.
    """
    if set(video_scores) != set(true_labels):
        missing = set(video_scores) ^ set(true_labels)
        raise ConsistencyError(f"scores and labels cover different videos: {sorted(missing)[:5]}")
    if not video_scores:
        raise ConfigurationError("no videos to score")

    names = sorted(video_scores)
    num_classes = len(next(iter(video_scores.values())))
    predicted = []
    for video in names:
        label = true_labels[video]
        if not 0 <= label < num_classes:
            raise ConfigurationError(f"video {video!r} label {label} outside [0, {num_classes})")
        predicted.append(int(np.argmax(video_scores[video])))

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for video, pred in zip(names, predicted):
        confusion[true_labels[video], pred] += 1
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return MetricReport(
        video_names=names,
        predicted=predicted,
        true_labels=[true_labels[v] for v in names],
        accuracy=accuracy,
        confusion=confusion,
        method=method,
    )


class ScalarLogger:
    """Append-only JSON-lines log of named scalars.

    Each event is written as one line in a single write call on a
    line-buffered handle, so a crash never leaves a partial line followed by
    more output. Reopening an existing log appends.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", buffering=1, encoding="utf-8")

    def log_scalar(self, step: int, tag: str, value: float) -> None:
        line = json.dumps(
            {"step": int(step), "tag": tag, "value": float(value), "wall_time": time.time()}
        )
        self._fh.write(line + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_scalar_log(path) -> list[dict]:
    """Parse a scalar log back into event dicts, in file order."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events
