"""Default preprocessing pipelines for the meanframe model.

Both pipelines fix clips to 8 frames of 16x16 RGB and center pixel values
around zero; the training pipeline adds a coin-flip horizontal mirror.
"""

from ... import preprocess

OUTPUT_SHAPE = (8, 16, 16, 3)

_BASE = [
    ("resample_temporal", {"out_t": 8, "mode": "loop"}),
    ("resize_bilinear", {"out_h": 16, "out_w": 16}),
    ("normalize", {"mean": [128.0, 128.0, 128.0], "scale": 1.0 / 128.0}),
]


def register_pipelines():
    preprocess.compose(
        "meanframe_train",
        _BASE[:2] + [("flip_horizontal", {"p": 0.5})] + _BASE[2:],
        OUTPUT_SHAPE,
        is_training=True,
    )
    preprocess.compose("meanframe_eval", _BASE, OUTPUT_SHAPE, is_training=False)


register_pipelines()
