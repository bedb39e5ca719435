"""Trainable models: the shared contract, registry, reference models, and
the scaffold generator for new model directories."""

from .base import LOSS_TYPES, Model, ModelSpec, ModelState
from .registry import build_model, load_model_dir, model_names, register_model
from .template import create_model_template

# Importing the reference models registers them and their pipelines.
from . import meanframe  # noqa: F401
from . import lastframe  # noqa: F401

__all__ = [
    "LOSS_TYPES",
    "Model",
    "ModelSpec",
    "ModelState",
    "register_model",
    "build_model",
    "model_names",
    "load_model_dir",
    "create_model_template",
]
