"""Temporal-mean linear softmax classifier.

Frames are averaged over time, flattened, and passed through one linear
layer. Small enough to verify against finite differences, yet it exercises
every contract a real architecture would: preprocessing selection, loss
switching, explicit gradients, checkpointing, and feature extraction from
the "pooled" and "logits" activation points.
"""

from __future__ import annotations

import numpy as np

from ..base import LOSS_TYPES, Model, ModelSpec, ModelState

NAME = "meanframe"


class MeanFrameSoftmax(Model):
    def __init__(self, input_shape, num_classes):
        t, h, w, c = input_shape
        features = h * w * c
        self.spec = ModelSpec(
            name=NAME,
            input_shape=tuple(input_shape),
            num_classes=int(num_classes),
            params={"linear/weight": (features, num_classes), "linear/bias": (num_classes,)},
            preprocess_names=(f"{NAME}_train", f"{NAME}_eval"),
            loss_types=LOSS_TYPES,
            activations=("pooled", "logits"),
        )

    def _pooled(self, batch: np.ndarray) -> np.ndarray:
        return batch.mean(axis=1).reshape(batch.shape[0], -1)

    def forward(self, state: ModelState, batch: np.ndarray):
        batch = self.check_batch(batch)
        pooled = self._pooled(batch)
        logits = pooled @ state.params["linear/weight"] + state.params["linear/bias"]
        return logits, {"pooled": pooled, "logits": logits}

    def backward(self, state: ModelState, batch: np.ndarray, dlogits: np.ndarray) -> dict:
        batch = self.check_batch(batch)
        dlogits = np.asarray(dlogits, dtype=np.float64)
        pooled = self._pooled(batch)
        return {
            "linear/weight": pooled.T @ dlogits,
            "linear/bias": dlogits.sum(axis=0),
        }


def build(input_shape, num_classes) -> MeanFrameSoftmax:
    return MeanFrameSoftmax(input_shape, num_classes)
