"""Shared fixtures: synthetic datasets and registry isolation."""

from __future__ import annotations

import numpy as np
import pytest

from vidpipe import preprocess
from vidpipe.models import registry
from vidpipe.records import DatasetIndex, RecordEntry, save_index, write_record


@pytest.fixture(autouse=True)
def _registry_guard():
    """Restore the op/pipeline/model registries after each test.

    Tests register throwaway ops and pipelines; without this, a leaked
    registration would make later tests order-dependent.
    """
    ops = dict(preprocess._OPS)
    pipelines = dict(preprocess._PIPELINES)
    models = dict(registry._MODELS)
    yield
    with preprocess._LOCK:
        preprocess._OPS.clear()
        preprocess._OPS.update(ops)
        preprocess._PIPELINES.clear()
        preprocess._PIPELINES.update(pipelines)
    with registry._LOCK:
        registry._MODELS.clear()
        registry._MODELS.update(models)


def synth_video(rng: np.random.Generator, num_frames=8, height=16, width=16, channels=3, mean=0.5, sigma=0.1):
    """One uint8 video whose pixels cluster around ``mean`` (in [0, 1])."""
    values = rng.normal(mean, sigma, size=(num_frames, height, width, channels))
    return (np.clip(values, 0.0, 1.0) * 255).astype(np.uint8)


def build_store(
    root,
    class_means,
    videos_per_class=4,
    num_frames=8,
    height=16,
    width=16,
    channels=3,
    sigma=0.1,
    seed=0,
    splits=("train",),
    test_fraction=0.5,
):
    """Write a synthetic record store and return its DatasetIndex.

    ``class_means`` maps class name -> pixel mean in [0, 1]; classes are
    stored in lexicographic order so labels match sorted names. With both
    "train" and "test" in ``splits`` the last ``test_fraction`` of each
    class goes to "test".
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    classes = sorted(class_means)
    split_entries: dict[str, list[RecordEntry]] = {s: [] for s in splits}
    n_test = int(round(videos_per_class * test_fraction)) if "test" in splits else 0
    for label, cls in enumerate(classes):
        for i in range(videos_per_class):
            data = synth_video(
                rng,
                num_frames,
                height,
                width,
                channels,
                mean=class_means[cls],
                sigma=sigma,
            )
            name = f"{cls}/vid{i:03d}"
            rec_path = root / cls / f"vid{i:03d}.mprv"
            write_record(data, label, name, cls, rec_path)
            split = "test" if ("test" in splits and i >= videos_per_class - n_test) else "train"
            rel = rec_path.relative_to(root).as_posix()
            split_entries[split].append(RecordEntry(path=rel, label=label, num_frames=num_frames))
    index = DatasetIndex(root=root, classes=classes, splits=split_entries)
    save_index(index, root)
    return index


def build_png_tree(root, class_means, videos_per_class=2, num_frames=4, height=8, width=8, seed=0):
    """Write a class-per-directory PNG frame tree for conversion tests."""
    from PIL import Image

    rng = np.random.default_rng(seed)
    for cls, mean in sorted(class_means.items()):
        for i in range(videos_per_class):
            vid_dir = root / cls / f"vid{i:03d}"
            vid_dir.mkdir(parents=True)
            data = synth_video(rng, num_frames, height, width, 3, mean=mean)
            for j in range(num_frames):
                Image.fromarray(data[j]).save(vid_dir / f"frame_{j}.png")
    return root


@pytest.fixture
def two_class_store(tmp_path):
    """16 train + 8 test videos over classes dark (0.25) and light (0.75)."""
    return build_store(
        tmp_path / "data",
        {"dark": 0.25, "light": 0.75},
        videos_per_class=12,
        splits=("train", "test"),
        test_fraction=1 / 3,
        seed=11,
    )
