"""Model registry and dynamic loading of model directories.

Built-in models register a builder at import time. A builder is a callable
``(input_shape, num_classes) -> Model``. External model directories created
by the template generator are loaded by path: the directory must contain a
``model.py`` exposing ``build`` and a ``preprocess.py`` whose import
registers the model's default pipelines.
"""

from __future__ import annotations

import importlib.util
import sys
import threading
from pathlib import Path

from ..errors import ConfigurationError, NotFoundError

__all__ = ["register_model", "build_model", "model_names", "load_model_dir"]

_MODELS: dict[str, object] = {}
_LOCK = threading.Lock()


def register_model(name: str, builder) -> None:
    with _LOCK:
        if name in _MODELS:
            raise ConfigurationError(f"model {name!r} already registered")
        _MODELS[name] = builder


def model_names() -> list[str]:
    with _LOCK:
        return sorted(_MODELS)


def build_model(name: str, input_shape, num_classes: int):
    """Instantiate a registered model for one preprocessed clip shape."""
    with _LOCK:
        builder = _MODELS.get(name)
    if builder is None:
        raise NotFoundError(f"no model named {name!r}; registered: {model_names()}")
    return builder(tuple(input_shape), int(num_classes))


def _import_file(module_name: str, path: Path):
    spec = importlib.util.spec_from_file_location(module_name, path)
    if spec is None or spec.loader is None:
        raise ConfigurationError(f"cannot import {path}")
    module = importlib.util.module_from_spec(spec)
    sys.modules[module_name] = module
    spec.loader.exec_module(module)
    return module


def load_model_dir(path) -> str:
    """Import a model directory and register it under the directory name.

    Returns the registered name. ``preprocess.py`` is imported first so the
    model's default pipelines exist by the time anything builds the model.
    """
    path = Path(path)
    name = path.name
    model_py = path / "model.py"
    preprocess_py = path / "preprocess.py"
    if not model_py.is_file():
        raise NotFoundError(f"{path} has no model.py")
    if preprocess_py.is_file():
        _import_file(f"vidpipe_ext_{name}_preprocess", preprocess_py)
    module = _import_file(f"vidpipe_ext_{name}_model", model_py)
    build = getattr(module, "build", None)
    if not callable(build):
        raise ConfigurationError(f"{model_py} does not define a build(input_shape, num_classes) function")
    register_model(name, build)
    return name
