"""Repeatable video activity-classification experiments.

Datasets are converted into a one-file-per-video binary record store, clip
mini-batches are streamed through a multi-worker two-queue pipeline with
composable preprocessing, and pluggable models are trained and tested by an
executor with momentum SGD, plateau learning-rate decay, portable
checkpoints, and video-level consensus metrics. The ``vidpipe`` command
wraps the whole workflow.
"""

from . import errors, seeding, records, clips, preprocess, metrics, checkpoint, pipeline, models, executor
from .checkpoint import CheckpointBundle
from .clips import ClipSpec
from .errors import VidpipeError
from .executor import RunConfig
from .metrics import MetricReport, PredictionSet
from .pipeline import Batch, BatchStream, PipelineConfig
from .records import DatasetIndex, VideoRecord

__version__ = "0.1.0"

__all__ = [
    "errors",
    "seeding",
    "records",
    "clips",
    "preprocess",
    "metrics",
    "checkpoint",
    "pipeline",
    "models",
    "executor",
    "VideoRecord",
    "DatasetIndex",
    "ClipSpec",
    "Batch",
    "BatchStream",
    "PipelineConfig",
    "PredictionSet",
    "MetricReport",
    "CheckpointBundle",
    "RunConfig",
    "VidpipeError",
    "__version__",
]
