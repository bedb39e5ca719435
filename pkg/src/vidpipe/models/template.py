"""Scaffold generator for new model directories.

Creates ``<root>/<name>/`` containing a ``model.py`` with the inference and
gradient methods stubbed out and a ``preprocess.py`` registering working
default pipelines, mirroring the layout of the built-in model directories.
The result imports cleanly via ``load_model_dir``; its forward raises
NotImplementedError until the TODO blocks are filled in.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigurationError

__all__ = ["create_model_template"]

_MODEL_TEMPLATE = '''"""{title} model definition.

TODO: describe the architecture here.
"""

from __future__ import annotations

import numpy as np

from vidpipe.models.base import LOSS_TYPES, Model, ModelSpec, ModelState

NAME = "{name}"


class {cls}(Model):
    def __init__(self, input_shape, num_classes):
        t, h, w, c = input_shape
        self.spec = ModelSpec(
            name=NAME,
            input_shape=tuple(input_shape),
            num_classes=int(num_classes),
            # TODO: declare every trainable parameter name and shape.
            params={{}},
            preprocess_names=(f"{{NAME}}_train", f"{{NAME}}_eval"),
            loss_types=LOSS_TYPES,
            # TODO: name every activation tensor forward() will expose.
            activations=("logits",),
        )

    def forward(self, state: ModelState, batch: np.ndarray):
        batch = self.check_batch(batch)
        # TODO: implement inference and return (logits, activations).
        # logits: (batch, num_classes); activations: every name declared above.
        raise NotImplementedError(f"{{NAME}}.forward is not implemented yet")

    def backward(self, state: ModelState, batch: np.ndarray, dlogits: np.ndarray) -> dict:
        batch = self.check_batch(batch)
        # TODO: return one gradient array per declared parameter.
        raise NotImplementedError(f"{{NAME}}.backward is not implemented yet")


def build(input_shape, num_classes) -> {cls}:
    return {cls}(input_shape, num_classes)
'''

_PREPROCESS_TEMPLATE = '''"""Preprocessing pipelines for the {name} model."""

from vidpipe import preprocess

# TODO: set the clip shape your model expects.
OUTPUT_SHAPE = (8, 16, 16, 3)

_BASE = [
    ("resample_temporal", {{"out_t": 8, "mode": "loop"}}),
    ("resize_bilinear", {{"out_h": 16, "out_w": 16}}),
    ("normalize", {{"mean": [128.0, 128.0, 128.0], "scale": 1.0 / 128.0}}),
]


def register_pipelines():
    # TODO: add augmentation steps to the training pipeline.
    preprocess.compose("{name}_train", _BASE, OUTPUT_SHAPE, is_training=True)
    preprocess.compose("{name}_eval", _BASE, OUTPUT_SHAPE, is_training=False)


register_pipelines()
'''


def create_model_template(name: str, root="models") -> Path:
    """Create a stub model directory and return its path."""
    if not name.isidentifier() or name.startswith("_"):
        raise ConfigurationError(f"model name {name!r} must be a plain identifier")
    target = Path(root) / name
    if target.exists():
        raise ConfigurationError(f"{target} already exists; refusing to overwrite")
    cls = "".join(part.capitalize() for part in name.split("_")) or "Net"
    target.mkdir(parents=True)
    (target / "model.py").write_text(
        _MODEL_TEMPLATE.format(name=name, cls=cls, title=name.replace("_", " ")),
        encoding="utf-8",
    )
    (target / "preprocess.py").write_text(_PREPROCESS_TEMPLATE.format(name=name), encoding="utf-8")
    return target
