"""Linear softmax classifier over the final frame only.

Ignores all but the last frame of each clip: that frame is flattened and
passed through one linear layer. Pairs naturally with the last_frame
consensus metric and gives the test suite a second independent gradient
implementation. Activation points: "last_frame" and "logits".
"""

from __future__ import annotations

import numpy as np

from ..base import LOSS_TYPES, Model, ModelSpec, ModelState

NAME = "lastframe"


class LastFrameSoftmax(Model):
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
            activations=("last_frame", "logits"),
        )

    def _last(self, batch: np.ndarray) -> np.ndarray:
        return batch[:, -1].reshape(batch.shape[0], -1)

    def forward(self, state: ModelState, batch: np.ndarray):
        batch = self.check_batch(batch)
        last = self._last(batch)
        logits = last @ state.params["linear/weight"] + state.params["linear/bias"]
        return logits, {"last_frame": last, "logits": logits}

    def backward(self, state: ModelState, batch: np.ndarray, dlogits: np.ndarray) -> dict:
        batch = self.check_batch(batch)
        dlogits = np.asarray(dlogits, dtype=np.float64)
        last = self._last(batch)
        return {
            "linear/weight": last.T @ dlogits,
            "linear/bias": dlogits.sum(axis=0),
        }


def build(input_shape, num_classes) -> LastFrameSoftmax:
    return LastFrameSoftmax(input_shape, num_classes)
