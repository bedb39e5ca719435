"""Command-line front end.

Subcommands bind the modules into the full workflow:

    convert       raw dataset tree -> binary record store + index
    train         stream the train split and fit a model, with checkpoints
    test          evaluate the latest checkpoint at video level
    extract       dump activation features for every clip of a split
    create-model  scaffold a new model directory
    inspect       print a record header, container manifest, or index summary

All machine-readable output is JSON on stdout; logs go to stderr. Exit
codes: 0 success, 1 runtime error, 2 usage error. Every run flag can also
be supplied through a JSON config file (``--config``); explicit flags win
over config values, which win over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint as ckpt
from . import executor
from . import preprocess as preprocess_mod
from .clips import ClipSpec
from .errors import ConfigurationError
from .models import create_model_template, load_model_dir
from .records import convert_dataset, load_index, read_record_header

logger = logging.getLogger(__name__)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


# Built-in defaults, applied after config-file merging. Argparse defaults
# are all None so "flag not given" is distinguishable from any real value.
_COMMON_DEFAULTS = {
    "dataset": None,
    "split": "train",
    "model": None,
    "preprocess": None,
    "preprocess_file": None,
    "model_dir": None,
    "loss": "cross_entropy",
    "batch_size": 4,
    "clip_length": 0,
    "num_clips": 1,
    "clip_offset": 0,
    "clip_stride": 0,
    "random_extract": False,
    "workers": 1,
    "metric": "avg_pooling",
    "exp_name": "exp1",
    "seed": 0,
    "queue_capacity": 0,
    "results_root": "results",
    "config": None,
}
_TRAIN_DEFAULTS = dict(
    _COMMON_DEFAULTS,
    epochs=1,
    lr=0.01,
    momentum=0.9,
    save_freq=1,
    plateau_window=10,
    plateau_tolerance=0.01,
    decay_factor=0.1,
    cooldown=1,
    init="uniform",
    init_scale=0.01,
    resume=False,
)
_TEST_DEFAULTS = dict(_COMMON_DEFAULTS, split="test")
_EXTRACT_DEFAULTS = dict(_COMMON_DEFAULTS, split="test", layer=None)


def _add_data_flags(p, defaults):
    p.add_argument("--dataset", required=True, help="record store root produced by convert (required)")
    p.add_argument("--split", help=f"dataset split to stream (default: {defaults['split']})")
    p.add_argument("--seed", type=_nonneg_int, help="master seed for shuffling, clip picks, and augmentation (default: 0)")
    p.add_argument("--config", help="JSON config file; explicit flags override its values (default: none)")
    p.add_argument("--workers", type=_positive_int, help="pipeline worker threads (default: 1)")
    p.add_argument("--batch-size", type=_positive_int, help="clips per mini-batch (default: 4)")
    p.add_argument("--queue-capacity", type=_nonneg_int, help="clips queue bound; 0 means 2x batch size (default: 0)")
    p.add_argument("--results-root", help="root directory for experiment results (default: results)")


def _add_clip_flags(p):
    p.add_argument("--clip-length", type=_nonneg_int, help="frames per clip; 0 means the whole video (default: 0)")
    p.add_argument("--num-clips", type=_nonneg_int, help="clips per video; 0 means every wrap-free window (default: 1)")
    p.add_argument("--clip-offset", type=_nonneg_int, help="first-clip start frame (default: 0)")
    p.add_argument("--clip-stride", type=int, help="gap between clips; negative overlaps (default: 0)")
    p.add_argument("--random-extract", action="store_true", default=None, help="draw clip starts at random (default: off)")


def _add_model_flags(p):
    p.add_argument("--model", required=True, help="registered model name (required)")
    p.add_argument("--preprocess", help="preprocessing pipeline name (default: the model's own)")
    p.add_argument("--preprocess-file", help="JSON pipeline description to register first (default: none)")
    p.add_argument("--model-dir", help="external model directory to load first (default: none)")
    p.add_argument("--loss", help="loss type (default: cross_entropy)")
    p.add_argument("--metric", help="video consensus: avg_pooling or last_frame (default: avg_pooling)")
    p.add_argument("--exp-name", help="experiment name, one results directory per name (default: exp1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidpipe",
        description="Repeatable video activity-classification experiments: "
        "convert datasets, stream clip batches, train, test, extract features.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("convert", help="convert a raw dataset tree into a record store")
    p.add_argument("src", help="dataset root: one subdirectory per class")
    p.add_argument("--dataset", required=True, help="output record store root (required)")
    p.add_argument("--splits", help="JSON file mapping split names to video name lists (default: everything to train)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a model on a converted dataset")
    _add_data_flags(p, _TRAIN_DEFAULTS)
    _add_clip_flags(p)
    _add_model_flags(p)
    p.add_argument("--epochs", type=_positive_int, help="training epochs (default: 1)")
    p.add_argument("--lr", type=_nonneg_float, help="initial learning rate (default: 0.01)")
    p.add_argument("--momentum", type=_nonneg_float, help="momentum coefficient in [0,1) (default: 0.9)")
    p.add_argument("--save-freq", type=_positive_int, help="checkpoint every this many epochs (default: 1)")
    p.add_argument("--plateau-window", type=_positive_int, help="iterations per plateau window (default: 10)")
    p.add_argument("--plateau-tolerance", type=_nonneg_float, help="relative improvement below which loss has plateaued (default: 0.01)")
    p.add_argument("--decay-factor", type=float, help="learning-rate multiplier on plateau (default: 0.1)")
    p.add_argument("--cooldown", type=_nonneg_int, help="windows to wait after a decay (default: 1)")
    p.add_argument("--init", help="initial weights: zeros, uniform, or a checkpoint path (default: uniform)")
    p.add_argument("--init-scale", type=_nonneg_float, help="half-width of the uniform initializer (default: 0.01)")
    p.add_argument("--resume", action="store_true", default=None, help="continue from the latest checkpoint (default: off)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="evaluate the latest checkpoint on a split")
    _add_data_flags(p, _TEST_DEFAULTS)
    _add_clip_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("extract", help="write per-clip features from a model activation")
    _add_data_flags(p, _EXTRACT_DEFAULTS)
    _add_clip_flags(p)
    _add_model_flags(p)
    p.add_argument("--layer", required=True, help="activation point to extract (required)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("create-model", help="scaffold a new model directory")
    p.add_argument("name", help="model name; must be a plain identifier")
    p.add_argument("--models-dir", default="models", help="where to create the directory (default: models)")
    p.set_defaults(func=cmd_create_model)

    p = sub.add_parser("inspect", help="print a record header, container manifest, or index summary")
    p.add_argument("path", help="a .mprv record, .mpck container, or record store directory")
    p.set_defaults(func=cmd_inspect)

    return parser


def _collect(args, defaults) -> dict:
    """Merge built-in defaults, config-file values, and explicit flags."""
    opts = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{config_path}: config must be a JSON object")
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key not in defaults:
                raise ConfigurationError(f"{config_path}: unknown config key {key!r}")
            opts[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def _load_extensions(opts):
    if opts.get("model_dir"):
        name = load_model_dir(opts["model_dir"])
        logger.info("loaded external model %r", name)
    if opts.get("preprocess_file"):
        fn = preprocess_mod.load_pipeline_file(opts["preprocess_file"])
        logger.info("registered pipeline %r", fn.name)


def _clip_spec(opts) -> ClipSpec:
    length = int(opts["clip_length"])
    count = int(opts["num_clips"])
    return ClipSpec(
        clip_length=None if length == 0 else length,
        num_clips=None if count == 0 else count,
        offset=int(opts["clip_offset"]),
        stride=int(opts["clip_stride"]),
        random_select=bool(opts["random_extract"]),
        seed=int(opts["seed"]),
    )


def _init_spec(opts):
    init = opts.get("init", "uniform")
    if init == "zeros":
        return {"kind": "zeros"}
    if init == "uniform":
        return {"kind": "uniform", "a": float(opts.get("init_scale", 0.01)), "seed": int(opts["seed"])}
    return str(init)  # checkpoint path


def _run_config(opts) -> executor.RunConfig:
    return executor.RunConfig(
        model=opts["model"],
        dataset=opts["dataset"],
        split=opts["split"],
        preprocess=opts["preprocess"],
        loss_type=opts["loss"],
        clip=_clip_spec(opts),
        batch_size=int(opts["batch_size"]),
        num_workers=int(opts["workers"]),
        clips_queue_capacity=int(opts["queue_capacity"]),
        epochs=int(opts.get("epochs", 1)),
        learning_rate=float(opts.get("lr", 0.01)),
        momentum=float(opts.get("momentum", 0.9)),
        plateau_window=int(opts.get("plateau_window", 10)),
        plateau_tolerance=float(opts.get("plateau_tolerance", 0.01)),
        decay_factor=float(opts.get("decay_factor", 0.1)),
        cooldown=int(opts.get("cooldown", 1)),
        save_freq=int(opts.get("save_freq", 1)),
        experiment=opts["exp_name"],
        metric=opts["metric"],
        seed=int(opts["seed"]),
        init=_init_spec(opts),
        results_root=opts["results_root"],
        resume=bool(opts.get("resume", False)),
    )


def _emit(payload) -> int:
    print(json.dumps(payload, indent=2))
    return 0


def cmd_convert(args) -> int:
    split_lists = None
    if args.splits:
        doc = json.loads(Path(args.splits).read_text(encoding="utf-8"))
        split_lists = {split: list(names) for split, names in doc.items()}
    index = convert_dataset(args.src, args.dataset, split_lists)
    return _emit(
        {
            "dataset": str(args.dataset),
            "classes": index.classes,
            "splits": {split: len(entries) for split, entries in index.splits.items()},
            "index": str(Path(args.dataset) / "index.json"),
        }
    )


def cmd_train(args) -> int:
    opts = _collect(args, _TRAIN_DEFAULTS)
    _load_extensions(opts)
    cfg = _run_config(opts)
    report = executor.train(cfg)
    from . import report as report_mod

    figures = report_mod.write_train_report(report)
    return _emit(
        {
            "experiment_dir": str(report.experiment_dir),
            "iterations": len(report.loss_trace),
            "final_loss": report.loss_trace[-1] if report.loss_trace else None,
            "final_lr": report.lr_trace[-1] if report.lr_trace else None,
            "checkpoints": [str(p) for p in report.checkpoint_paths],
            "outputs": [str(p) for p in figures],
            "diagnostics": report.diagnostics[-1] if report.diagnostics else {},
        }
    )


def cmd_test(args) -> int:
    opts = _collect(args, _TEST_DEFAULTS)
    _load_extensions(opts)
    cfg = _run_config(opts)
    report = executor.test(cfg)
    exp_dir = executor.experiment_dir(cfg)
    class_names = load_index(cfg.dataset).classes
    from . import report as report_mod

    figures = report_mod.write_metric_report(report, exp_dir, class_names=class_names)
    return _emit(
        {
            "accuracy": report.accuracy,
            "method": report.method,
            "num_videos": len(report.video_names),
            "report": str(exp_dir / "metric_report.json"),
            "outputs": [str(p) for p in figures],
        }
    )


def cmd_extract(args) -> int:
    opts = _collect(args, _EXTRACT_DEFAULTS)
    _load_extensions(opts)
    cfg = _run_config(opts)
    path = executor.extract_features(cfg, opts["layer"])
    bundle = ckpt.load(path)
    return _emit(
        {
            "features": str(path),
            "layer": opts["layer"],
            "count": int(bundle.tensors["features"].shape[0]),
            "dim": int(bundle.tensors["features"].shape[1]) if bundle.tensors["features"].ndim > 1 else 0,
        }
    )


def cmd_create_model(args) -> int:
    target = create_model_template(args.name, root=args.models_dir)
    return _emit({"created": str(target), "files": sorted(p.name for p in target.iterdir())})


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        index = load_index(path)
        return _emit(
            {
                "kind": "dataset_index",
                "classes": index.classes,
                "num_classes": index.num_classes,
                "splits": {split: len(entries) for split, entries in index.splits.items()},
            }
        )
    if path.suffix == ".mprv":
        return _emit(dict({"kind": "video_record"}, **read_record_header(path)))
    if path.suffix == ".mpck":
        bundle = ckpt.load(path)
        return _emit(
            {
                "kind": "container",
                "tensors": {
                    name: {"dtype": str(arr.dtype), "shape": list(arr.shape)}
                    for name, arr in sorted(bundle.tensors.items())
                },
                "meta": bundle.meta,
            }
        )
    raise ConfigurationError(f"{path}: not a record (.mprv), container (.mpck), or record store directory")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # surfaced with module-qualified names, exit 1
        print(f"error: {type(exc).__module__}.{type(exc).__qualname__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
