"""Training and testing drivers.

``train`` runs a fixed number of epochs over a streaming train split with
momentum SGD (v <- mu*v - lr*g, p <- p + v) and plateau-triggered learning
rate decay, checkpointing the full optimizer state so a resumed run is
bit-identical to an uninterrupted one. ``test`` loads the latest checkpoint
and folds per-clip predictions into per-video accuracy via the metrics
module. ``extract_features`` taps any declared activation point and writes
one vector per clip to a container file.

Reproducibility rests on two rules: the stream for epoch e is built from a
seed derived from (master seed, "stream", e), so resumption does not depend
on any live RNG state; and checkpoints carry the velocity, loss history,
learning rate, and decay bookkeeping along with the weights.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import metrics as metrics_mod
from . import preprocess as preprocess_mod
from .clips import ClipSpec
from .errors import ConfigurationError, VidpipeError
from .models import build_model
from .pipeline import BatchStream, PipelineConfig, iterations_per_epoch
from .records import load_index
from .seeding import derive_seed

logger = logging.getLogger(__name__)

__all__ = ["RunConfig", "TrainReport", "plateau_step", "train", "test", "extract_features", "experiment_dir"]


@dataclass
class RunConfig:
    """Everything one experiment run depends on."""

    model: str
    dataset: str
    split: str = "train"
    preprocess: str | None = None  # None: "<model>_train" when training, "<model>_eval" when testing
    loss_type: str = "cross_entropy"
    clip: ClipSpec = field(default_factory=ClipSpec)
    batch_size: int = 4
    num_workers: int = 1
    clips_queue_capacity: int = 0
    epochs: int = 1
    learning_rate: float = 0.01
    momentum: float = 0.9
    plateau_window: int = 10
    plateau_tolerance: float = 0.01
    decay_factor: float = 0.1
    cooldown: int = 1
    save_freq: int = 1
    experiment: str = "exp1"
    metric: str = "avg_pooling"
    seed: int = 0
    init: dict | str = field(default_factory=lambda: {"kind": "uniform", "a": 0.01, "seed": 0})
    results_root: str = "results"
    resume: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.plateau_window < 1:
            raise ConfigurationError(f"plateau_window must be >= 1, got {self.plateau_window}")
        if self.plateau_tolerance < 0:
            raise ConfigurationError(f"plateau_tolerance must be >= 0, got {self.plateau_tolerance}")
        if not 0.0 < self.decay_factor < 1.0:
            raise ConfigurationError(f"decay_factor must be in (0, 1), got {self.decay_factor}")
        if self.cooldown < 0:
            raise ConfigurationError(f"cooldown must be >= 0, got {self.cooldown}")
        if self.save_freq < 1:
            raise ConfigurationError(f"save_freq must be >= 1, got {self.save_freq}")
        if self.metric not in metrics_mod.METHODS:
            raise ConfigurationError(f"metric must be one of {metrics_mod.METHODS}, got {self.metric!r}")


@dataclass
class TrainReport:
    loss_trace: list
    lr_trace: list
    checkpoint_paths: list
    epoch_seconds: list
    experiment_dir: Path
    diagnostics: list  # one stream summary per epoch


def plateau_step(loss_history, lr, cfg: RunConfig, last_event: int = 0):
    """Apply the decay rule after the latest loss was appended.

    Compares the mean of the last ``plateau_window`` losses against the mean
    of the window before it; if the drop is below ``plateau_tolerance``
    relative to the earlier mean, the rate is multiplied by
    ``decay_factor``. No decision is taken before two full windows exist,
    and after a decay the comparison restarts: the next decision waits
    ``max(2, cooldown)`` windows past the event so both windows are
    post-decay.

    Returns (new lr, new last_event), where last_event is the 1-based
    iteration at which the most recent decay fired (0 if none).
    """
    i = len(loss_history)
    window = cfg.plateau_window
    need = 2 * window if last_event == 0 else max(2, cfg.cooldown) * window
    if i - last_event < need:
        return lr, last_event
    last = sum(loss_history[i - window : i]) / window
    prev = sum(loss_history[i - 2 * window : i - window]) / window
    if (prev - last) < cfg.plateau_tolerance * abs(prev):
        return lr * cfg.decay_factor, i
    return lr, last_event


def _preprocess_name(cfg: RunConfig, training: bool) -> str:
    if cfg.preprocess:
        return cfg.preprocess
    return f"{cfg.model}_{'train' if training else 'eval'}"


def _dir_components(cfg: RunConfig):
    dataset = Path(cfg.dataset).name
    # The preprocessing path component must be shared between a train run and
    # its matching test run, whose default pipeline names differ; explicit
    # names are used as-is, model defaults collapse to "default".
    preprocessing = cfg.preprocess if cfg.preprocess else "default"
    return dataset, preprocessing


def experiment_dir(cfg: RunConfig) -> Path:
    """Directory holding everything one experiment writes."""
    dataset, preprocessing = _dir_components(cfg)
    return ckpt.checkpoint_dir(
        cfg.model, dataset, preprocessing, cfg.experiment, cfg.metric, root=cfg.results_root
    ).parent


def _checkpoint_dir(cfg: RunConfig) -> Path:
    return experiment_dir(cfg) / "checkpoints"


def _stream(cfg: RunConfig, index, split, fn, mode, stream_seed) -> BatchStream:
    pipe_cfg = PipelineConfig(
        batch_size=cfg.batch_size,
        num_workers=cfg.num_workers,
        clips_queue_capacity=cfg.clips_queue_capacity,
        shuffle_seed=stream_seed,
        mode=mode,
    )
    return BatchStream(index, split, cfg.clip, fn, pipe_cfg)


def _save_state(cfg, ckpt_dir, state, velocity, loss_history, lr, last_event, epoch, global_step):
    dataset, preprocessing = _dir_components(cfg)
    tensors = {f"model/{name}": arr for name, arr in state.params.items()}
    tensors.update({f"optimizer/velocity/{name}": arr for name, arr in velocity.items()})
    tensors["optimizer/loss_history"] = np.asarray(loss_history, dtype=np.float64)
    bundle = ckpt.CheckpointBundle(
        tensors=tensors,
        meta={
            "epoch": epoch,
            "global_step": global_step,
            "learning_rate": lr,
            "last_decay_event": last_event,
            "model": cfg.model,
            "dataset": dataset,
            "preprocessing": preprocessing,
            "experiment": cfg.experiment,
            "metric": cfg.metric,
            "loss_type": cfg.loss_type,
        },
    )
    return ckpt.save(bundle, ckpt_dir)


def train(cfg: RunConfig) -> TrainReport:
    """Run the training loop and return its traces and checkpoint paths."""
    index = load_index(cfg.dataset)
    fn = preprocess_mod.lookup(_preprocess_name(cfg, training=True))
    model = build_model(cfg.model, fn.output_shape, index.num_classes)
    if cfg.loss_type not in model.spec.loss_types:
        raise ConfigurationError(
            f"model {cfg.model!r} does not support loss {cfg.loss_type!r}; "
            f"supported: {list(model.spec.loss_types)}"
        )
    ckpt_dir = _checkpoint_dir(cfg)
    exp_dir = ckpt_dir.parent

    start_epoch = 0
    velocity = {name: np.zeros(shape, dtype=np.float64) for name, shape in model.spec.params.items()}
    loss_history: list[float] = []
    lr = cfg.learning_rate
    last_event = 0
    global_step = 0
    if cfg.resume:
        path = ckpt.latest(ckpt_dir)
        bundle = ckpt.load(path)
        state = model.load_default_weights(str(path))
        for name in velocity:
            velocity[name] = bundle.tensors[f"optimizer/velocity/{name}"].astype(np.float64)
        loss_history = [float(x) for x in bundle.tensors["optimizer/loss_history"]]
        lr = float(bundle.meta["learning_rate"])
        last_event = int(bundle.meta["last_decay_event"])
        start_epoch = int(bundle.meta["epoch"])
        global_step = int(bundle.meta["global_step"])
        logger.info("resuming from %s at epoch %d", path, start_epoch)
    else:
        state = model.load_default_weights(cfg.init)
    state.step = global_step

    iterations = iterations_per_epoch(index, cfg.split, cfg.clip, cfg.batch_size, fan_out=fn.fan_out)
    report = TrainReport(
        loss_trace=[],
        lr_trace=[],
        checkpoint_paths=[],
        epoch_seconds=[],
        experiment_dir=exp_dir,
        diagnostics=[],
    )
    scalar_log = metrics_mod.ScalarLogger(exp_dir / "scalars.jsonl")
    try:
        for epoch in range(start_epoch, cfg.epochs):
            t0 = time.monotonic()
            stream = _stream(cfg, index, cfg.split, fn, "train", derive_seed(cfg.seed, "stream", epoch))
            try:
                for _ in range(iterations):
                    batch = stream.next_batch()
                    logits, _ = model.forward(state, batch.clips)
                    value, dlogits = model.loss(logits, batch.labels, cfg.loss_type)
                    loss_history.append(value)
                    lr, last_event = plateau_step(loss_history, lr, cfg, last_event)
                    grads = model.backward(state, batch.clips, dlogits)
                    for name, grad in grads.items():
                        velocity[name] = cfg.momentum * velocity[name] - lr * grad
                        state.params[name] = state.params[name] + velocity[name]
                    global_step += 1
                    state.step = global_step
                    report.loss_trace.append(value)
                    report.lr_trace.append(lr)
                    scalar_log.log_scalar(global_step, "train/loss", value)
                    scalar_log.log_scalar(global_step, "train/lr", lr)
            finally:
                stream.close()
            report.diagnostics.append(stream.diagnostics())
            report.epoch_seconds.append(time.monotonic() - t0)
            if (epoch + 1) % cfg.save_freq == 0 or (epoch + 1) == cfg.epochs:
                try:
                    path = _save_state(
                        cfg, ckpt_dir, state, velocity, loss_history, lr, last_event, epoch + 1, global_step
                    )
                except Exception as exc:
                    err = VidpipeError(f"checkpoint save failed after epoch {epoch + 1}: {exc}")
                    err.report = report
                    raise err from exc
                report.checkpoint_paths.append(path)
            logger.info(
                "epoch %d/%d: mean loss %.6f, lr %.3g",
                epoch + 1,
                cfg.epochs,
                float(np.mean(report.loss_trace[-iterations:])) if iterations else float("nan"),
                lr,
            )
    finally:
        scalar_log.close()
    return report


def _load_for_eval(cfg: RunConfig):
    index = load_index(cfg.dataset)
    fn = preprocess_mod.lookup(_preprocess_name(cfg, training=False))
    model = build_model(cfg.model, fn.output_shape, index.num_classes)
    ckpt_path = ckpt.latest(_checkpoint_dir(cfg))
    state = model.load_default_weights(str(ckpt_path))
    return index, fn, model, state, ckpt_path


def test(cfg: RunConfig) -> metrics_mod.MetricReport:
    """Evaluate the latest checkpoint on a split, one pass, video-level."""
    index, fn, model, state, ckpt_path = _load_for_eval(cfg)
    logger.info("testing %s against %s", cfg.model, ckpt_path)
    entries = []
    labels: dict[str, int] = {}
    stream = _stream(cfg, index, cfg.split, fn, "test", derive_seed(cfg.seed, "stream", "test"))
    try:
        for batch in stream:
            logits, _ = model.forward(state, batch.clips)
            for row, (video, clip_index), label in zip(logits, batch.provenance, batch.labels):
                entries.append((video, clip_index, row))
                labels[video] = int(label)
    finally:
        stream.close()
    preds = metrics_mod.PredictionSet(entries=entries, num_classes=model.spec.num_classes)
    scores = metrics_mod.aggregate(preds, cfg.metric)
    report = metrics_mod.top1_accuracy(scores, labels, method=cfg.metric)

    exp_dir = experiment_dir(cfg)
    exp_dir.mkdir(parents=True, exist_ok=True)
    out = dict(report.to_dict(), diagnostics=stream.diagnostics(), checkpoint=str(ckpt_path))
    (exp_dir / "metric_report.json").write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    return report


def extract_features(cfg: RunConfig, layer_name: str) -> Path:
    """Write one feature vector per clip from a declared activation point."""
    index, fn, model, state, ckpt_path = _load_for_eval(cfg)
    if layer_name not in model.spec.activations:
        raise ConfigurationError(
            f"model {cfg.model!r} has no activation {layer_name!r}; available: {list(model.spec.activations)}"
        )
    rows = []
    provenance = []
    labels = []
    stream = _stream(cfg, index, cfg.split, fn, "test", derive_seed(cfg.seed, "stream", "test"))
    try:
        for batch in stream:
            _, activations = model.forward(state, batch.clips)
            feats = np.asarray(activations[layer_name], dtype=np.float64)
            feats = feats.reshape(batch.size, -1)
            for row, (video, clip_index), label in zip(feats, batch.provenance, batch.labels):
                rows.append(row)
                provenance.append([video, int(clip_index)])
                labels.append(int(label))
    finally:
        stream.close()
    bundle = ckpt.CheckpointBundle(
        tensors={"features": np.stack(rows) if rows else np.zeros((0, 0))},
        meta={
            "layer": layer_name,
            "model": cfg.model,
            "checkpoint": str(ckpt_path),
            "provenance": provenance,
            "labels": labels,
        },
    )
    out_path = experiment_dir(cfg) / f"features-{layer_name}.mpck"
    return ckpt.write_container(bundle, out_path)
