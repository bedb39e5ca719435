"""Model contract shared by every trainable model.

A model is a stateless object describing its architecture (a ModelSpec) plus
pure functions over an explicit ModelState:

* ``forward(state, batch)`` returns logits and every declared activation.
* ``loss(logits, labels, loss_type)`` returns the scalar loss and its
  gradient with respect to the logits.
* ``backward(state, batch, dlogits)`` turns a logit gradient into named
  parameter gradients mirroring the parameter manifest.
* ``load_default_weights(source)`` builds the initial state from an
  initializer spec or a saved checkpoint.

Gradients are explicit: no autodiff is assumed, which keeps the contract
portable and makes finite-difference verification straightforward. All
parameters and gradients are float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..checkpoint import load as load_checkpoint
from ..errors import ConfigurationError, ShapeError
from ..metrics import softmax

__all__ = ["ModelSpec", "ModelState", "Model", "LOSS_TYPES"]

LOSS_TYPES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class ModelSpec:
    """What a model expects and provides.

    ``params`` maps parameter names to shapes; ``activations`` names the
    tensors available for feature extraction; ``preprocess_names`` lists the
    registered pipelines this model ships with (first entry = training
    default, second = evaluation default).
    """

    name: str
    input_shape: tuple  # (T, H, W, C) of one preprocessed clip
    num_classes: int
    params: dict
    preprocess_names: tuple
    loss_types: tuple = LOSS_TYPES
    activations: tuple = ()


@dataclass
class ModelState:
    """Named parameter arrays plus the global update count."""

    params: dict[str, np.ndarray]
    step: int = 0


def _one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ConfigurationError(f"labels outside [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


class Model:
    """Base class wiring the shared loss and weight-loading logic."""

    spec: ModelSpec

    # -- architecture-specific, provided by subclasses ------------------------

    def forward(self, state: ModelState, batch: np.ndarray):
        raise NotImplementedError

    def backward(self, state: ModelState, batch: np.ndarray, dlogits: np.ndarray) -> dict:
        raise NotImplementedError

    # -- shared ---------------------------------------------------------------

    def check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 5 or tuple(batch.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(
                f"{self.spec.name} expects batches of shape (B,) + {tuple(self.spec.input_shape)}, "
                f"got {tuple(batch.shape)}"
            )
        return batch

    def loss(self, logits: np.ndarray, labels, loss_type: str = "cross_entropy"):
        """Return (scalar loss, gradient with respect to logits)."""
        if loss_type not in self.spec.loss_types:
            raise ConfigurationError(
                f"{self.spec.name} does not support loss {loss_type!r}; supported: {list(self.spec.loss_types)}"
            )
        logits = np.asarray(logits, dtype=np.float64)
        batch_size, num_classes = logits.shape
        onehot = _one_hot(labels, num_classes)
        probs = softmax(logits)
        if loss_type == "cross_entropy":
            # Per-sample -log softmax[label], in logsumexp form for stability.
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            value = float(-(log_probs * onehot).sum() / batch_size) + 0.0
            dlogits = (probs - onehot) / batch_size
        else:
            diff = probs - onehot
            value = float((diff**2).sum() / batch_size)
            # d/dz_k of sum_j (p_j - y_j)^2 through the softmax Jacobian.
            inner = diff - (diff * probs).sum(axis=1, keepdims=True)
            dlogits = 2.0 * probs * inner / batch_size
        return value, dlogits

    def load_default_weights(self, source) -> ModelState:
        """Build an initial ModelState.

        ``source`` is an initializer spec ``{"kind": "zeros"}`` or
        ``{"kind": "uniform", "a": ..., "seed": ...}``, or a path to a
        checkpoint container whose tensors (bare or under a ``model/``
        prefix) must match the parameter manifest exactly.
        """
        manifest = self.spec.params
        if isinstance(source, dict):
            kind = source.get("kind")
            if kind == "zeros":
                params = {name: np.zeros(shape, dtype=np.float64) for name, shape in manifest.items()}
            elif kind == "uniform":
                a = float(source.get("a", 0.01))
                rng = np.random.default_rng(int(source.get("seed", 0)))
                params = {
                    name: rng.uniform(-a, a, size=shape).astype(np.float64)
                    for name, shape in manifest.items()
                }
            else:
                raise ConfigurationError(f"unknown initializer kind {kind!r}; one of ('zeros', 'uniform')")
            return ModelState(params=params, step=0)

        bundle = load_checkpoint(source)
        tensors = bundle.tensors
        if any(name.startswith("model/") for name in tensors):
            tensors = {n[len("model/") :]: t for n, t in tensors.items() if n.startswith("model/")}
        missing = sorted(set(manifest) - set(tensors))
        extra = sorted(set(tensors) - set(manifest))
        mismatched = sorted(
            name
            for name in set(manifest) & set(tensors)
            if tuple(tensors[name].shape) != tuple(manifest[name])
        )
        if missing or extra or mismatched:
            raise ConfigurationError(
                f"checkpoint does not match {self.spec.name} parameters: "
                f"missing={missing} extra={extra} shape-mismatched={mismatched}"
            )
        params = {name: tensors[name].astype(np.float64) for name in manifest}
        return ModelState(params=params, step=int(bundle.meta.get("global_step", 0)))
