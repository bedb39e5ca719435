"""Consensus metrics and scalar logging."""

import math
import random

import numpy as np
import pytest

from vidpipe.errors import ConfigurationError, ConsistencyError
from vidpipe.metrics import (
    MetricReport,
    PredictionSet,
    ScalarLogger,
    aggregate,
    read_scalar_log,
    softmax,
    top1_accuracy,
)


def softmax_reference(scores):
    """Plain-definition softmax, one exponent at a time."""
    exps = [math.exp(s) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def test_softmax_matches_definition():
    scores = np.array([[0.5, -1.2, 3.0], [0.0, 0.0, 0.0]])
    out = softmax(scores)
    for row, ref in zip(out, [softmax_reference([0.5, -1.2, 3.0]), [1 / 3] * 3]):
        np.testing.assert_allclose(row, ref, atol=1e-12)


def test_softmax_is_shift_stable():
    scores = np.array([[1000.0, 1001.0, 999.0]])
    out = softmax(scores)
    np.testing.assert_allclose(out, softmax(scores - 1000.0), atol=1e-15)
    assert np.isfinite(out).all()


def _random_prediction_set(rng, num_videos, num_classes=4, max_clips=7):
    entries = []
    labels = {}
    for v in range(num_videos):
        name = f"vid{v:04d}"
        labels[name] = rng.randrange(num_classes)
        for k in range(rng.randint(1, max_clips)):
            scores = [rng.uniform(-3, 3) for _ in range(num_classes)]
            entries.append((name, k, np.array(scores)))
    return PredictionSet(entries=entries, num_classes=num_classes), labels


def test_avg_pooling_matches_brute_force():
    rng = random.Random(17)
    preds, _ = _random_prediction_set(rng, 60)
    got = aggregate(preds, "avg_pooling")
    by_video = {}
    for video, _, scores in preds.entries:
        by_video.setdefault(video, []).append(softmax_reference(scores))
    for video, rows in by_video.items():
        expected = [sum(col) / len(rows) for col in zip(*rows)]
        np.testing.assert_allclose(got[video], expected, atol=1e-9)


def test_last_frame_uses_only_max_clip_index():
    entries = [
        ("v", 0, np.array([10.0, 0.0])),  # would dominate if averaged in
        ("v", 1, np.array([0.0, 1.0])),
        ("v", 2, np.array([0.0, 2.0])),
    ]
    preds = PredictionSet(entries=entries, num_classes=2)
    got = aggregate(preds, "last_frame")
    np.testing.assert_allclose(got["v"], softmax_reference([0.0, 2.0]), atol=1e-12)


def test_last_frame_averages_ties_at_max_index_order_free():
    base = [
        ("v", 3, np.array([1.0, 0.0])),
        ("v", 3, np.array([0.0, 1.0])),
        ("v", 1, np.array([9.0, 9.0])),
    ]
    expected = np.mean([softmax_reference([1.0, 0.0]), softmax_reference([0.0, 1.0])], axis=0)
    for _ in range(5):
        random.Random(_).shuffle(base)
        got = aggregate(PredictionSet(entries=list(base), num_classes=2), "last_frame")
        np.testing.assert_allclose(got["v"], expected, atol=1e-12)


def test_per_video_granularity_passes_scores_through():
    entries = [("a", 0, np.array([0.2, 0.8])), ("b", 0, np.array([5.0, -5.0]))]
    preds = PredictionSet(entries=entries, num_classes=2, granularity="per_video")
    got = aggregate(preds, "avg_pooling")
    np.testing.assert_array_equal(got["a"], [0.2, 0.8])  # no softmax applied
    np.testing.assert_array_equal(got["b"], [5.0, -5.0])


def test_aggregate_rejects_unknown_method():
    preds = PredictionSet(entries=[("a", 0, np.zeros(2))], num_classes=2)
    with pytest.raises(ConfigurationError, match="consensus method"):
        aggregate(preds, "majority")


def test_prediction_set_validates_score_length():
    with pytest.raises(ConsistencyError, match="3 scores for 2 classes"):
        PredictionSet(entries=[("a", 0, np.zeros(3))], num_classes=2)


def test_prediction_set_rejects_duplicate_per_video_entries():
    entries = [("a", 0, np.zeros(2)), ("a", 1, np.zeros(2))]
    with pytest.raises(ConsistencyError, match="multiple entries"):
        PredictionSet(entries=entries, num_classes=2, granularity="per_video")


def test_top1_accuracy_counts_match_recount():
    rng = random.Random(23)
    preds, labels = _random_prediction_set(rng, 80, num_classes=3)
    report = top1_accuracy(aggregate(preds, "avg_pooling"), labels)
    # Recount independently.
    correct = sum(int(p == t) for p, t in zip(report.predicted, report.true_labels))
    assert report.accuracy == pytest.approx(correct / 80)
    assert report.confusion.sum() == 80
    for i in range(3):
        for j in range(3):
            expected = sum(
                1
                for name, p in zip(report.video_names, report.predicted)
                if labels[name] == i and p == j
            )
            assert report.confusion[i, j] == expected
    assert report.video_names == sorted(labels)


def test_tie_breaks_to_lowest_class_index():
    scores = {"v0": np.array([0.5, 0.5, 0.0]), "v1": np.array([0.1, 0.3, 0.3])}
    report = top1_accuracy(scores, {"v0": 1, "v1": 2})
    assert report.predicted == [0, 1]


def test_top1_rejects_mismatched_video_sets():
    with pytest.raises(ConsistencyError, match="different videos"):
        top1_accuracy({"a": np.zeros(2)}, {"b": 0})


def test_top1_rejects_out_of_range_label():
    with pytest.raises(ConfigurationError, match="label 5"):
        top1_accuracy({"a": np.zeros(2)}, {"a": 5})


def test_top1_rejects_empty():
    with pytest.raises(ConfigurationError, match="no videos"):
        top1_accuracy({}, {})


def test_report_to_dict_is_json_shaped():
    report = MetricReport(
        video_names=["a", "b"],
        predicted=[0, 1],
        true_labels=[0, 0],
        accuracy=0.5,
        confusion=np.array([[1, 1], [0, 0]]),
        method="avg_pooling",
    )
    doc = report.to_dict()
    assert doc["accuracy"] == 0.5
    assert doc["num_videos"] == 2
    assert doc["confusion"] == [[1, 1], [0, 0]]
    assert doc["videos"][1] == {"video": "b", "predicted": 1, "label": 0}


# ------------------------------------------------------------ scalar logging


def test_scalar_log_round_trip(tmp_path):
    path = tmp_path / "scalars.jsonl"
    with ScalarLogger(path) as log:
        log.log_scalar(0, "train/loss", 1.5)
        log.log_scalar(1, "train/loss", 1.25)
        log.log_scalar(1, "train/lr", 0.01)
    events = read_scalar_log(path)
    assert [(e["step"], e["tag"], e["value"]) for e in events] == [
        (0, "train/loss", 1.5),
        (1, "train/loss", 1.25),
        (1, "train/lr", 0.01),
    ]
    assert all(e["wall_time"] > 0 for e in events)


def test_scalar_log_reopen_appends(tmp_path):
    path = tmp_path / "scalars.jsonl"
    with ScalarLogger(path) as log:
        log.log_scalar(0, "a", 1.0)
    with ScalarLogger(path) as log:
        log.log_scalar(1, "a", 2.0)
    assert [e["step"] for e in read_scalar_log(path)] == [0, 1]


def test_scalar_log_large_volume_parses_back_exactly(tmp_path):
    path = tmp_path / "big.jsonl"
    n = 100_000
    with ScalarLogger(path) as log:
        for i in range(n):
            log.log_scalar(i, "loss", i * 0.5)
    events = read_scalar_log(path)
    assert len(events) == n
    assert events[0]["value"] == 0.0
    assert events[-1] == {**events[-1], "step": n - 1, "value": (n - 1) * 0.5}
    steps = [e["step"] for e in events]
    assert steps == list(range(n))
