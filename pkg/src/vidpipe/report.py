"""Render run results to files: delimited traces plus matplotlib figures.

Everything lands in the run's experiment directory next to the scalar log
and checkpoints, so one directory holds the complete story of a run. The
Agg backend is forced; nothing here ever opens a window.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .executor import TrainReport
from .metrics import MetricReport

__all__ = ["write_train_report", "write_metric_report"]


def write_train_report(report: TrainReport) -> list[Path]:
    """Write training_trace.csv, loss_curve.png, and lr_trace.png."""
    out_dir = Path(report.experiment_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    trace_path = out_dir / "training_trace.csv"
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "learning_rate"])
        for i, (loss, lr) in enumerate(zip(report.loss_trace, report.lr_trace), start=1):
            writer.writerow([i, f"{loss:.10g}", f"{lr:.10g}"])
    written.append(trace_path)

    steps = np.arange(1, len(report.loss_trace) + 1)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, report.loss_trace, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    loss_path = out_dir / "loss_curve.png"
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)
    written.append(loss_path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(steps, report.lr_trace, where="post", linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("learning rate")
    ax.set_yscale("log")
    ax.set_title("Learning rate schedule")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    lr_path = out_dir / "lr_trace.png"
    fig.savefig(lr_path, dpi=120)
    plt.close(fig)
    written.append(lr_path)

    return written


def write_metric_report(report: MetricReport, out_dir, class_names=None) -> list[Path]:
    """Write per_video_predictions.csv, confusion_matrix.csv, and
    confusion_matrix.png for a finished evaluation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    num_classes = report.confusion.shape[0]
    if class_names is None:
        class_names = [str(i) for i in range(num_classes)]
    written = []

    pred_path = out_dir / "per_video_predictions.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video", "true_label", "predicted_label", "correct"])
        for video, pred, true in zip(report.video_names, report.predicted, report.true_labels):
            writer.writerow([video, true, pred, int(pred == true)])
    written.append(pred_path)

    conf_path = out_dir / "confusion_matrix.csv"
    with open(conf_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted"] + list(class_names))
        for i, row in enumerate(report.confusion):
            writer.writerow([class_names[i]] + [int(x) for x in row])
    written.append(conf_path)

    fig, ax = plt.subplots(figsize=(5.5, 5))
    image = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_title(f"Confusion ({report.method}, acc {report.accuracy:.3f})")
    ticks = np.arange(num_classes)
    ax.set_xticks(ticks, labels=class_names, rotation=90 if num_classes > 6 else 0)
    ax.set_yticks(ticks, labels=class_names)
    if num_classes <= 12:
        for i in range(num_classes):
            for j in range(num_classes):
                ax.text(j, i, int(report.confusion[i, j]), ha="center", va="center", fontsize=8)
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    png_path = out_dir / "confusion_matrix.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    written.append(png_path)

    return written
