"""Default preprocessing pipelines for the lastframe model.

Same spatial treatment as meanframe; frames are shuffled during training so
the "last" frame the model sees is not always the video's final frame.
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
        "lastframe_train",
        _BASE[:2] + [("shuffle_frames", {})] + _BASE[2:],
        OUTPUT_SHAPE,
        is_training=True,
    )
    preprocess.compose("lastframe_eval", _BASE, OUTPUT_SHAPE, is_training=False)


register_pipelines()
