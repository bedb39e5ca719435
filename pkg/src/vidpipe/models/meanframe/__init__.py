from ..registry import register_model
from . import preprocess as _preprocess  # noqa: F401  registers default pipelines
from .model import NAME, MeanFrameSoftmax, build

register_model(NAME, build)

__all__ = ["MeanFrameSoftmax", "build", "NAME"]
