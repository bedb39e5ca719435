"""Portable named-array checkpoint container and experiment directory scheme.

Container layout (documented in ``docs/formats.md``), integers little-endian:

    magic         4 bytes   b"MPCK"
    version       u32       currently 1
    manifest_len  u32
    manifest      JSON, UTF-8: {"tensors": [{"name", "dtype", "shape",
                  "offset"}, ...], "meta": {...}}; offsets are relative to
                  the end of the manifest, tensors sorted by name
    payload       concatenated raw little-endian array bytes

Only f32 and f64 tensors are stored; the manifest carries everything needed
to reconstruct them, so the file is readable from any language with a JSON
parser. Writes are atomic (temp file in the target directory, then rename)
and a one-line ``latest`` marker names the newest checkpoint file; a failed
save never disturbs the marker.

Checkpoints live in a per-experiment directory,
``<root>/<model>/<dataset>/<preprocessing>/<experiment>/<metric>/checkpoints``,
so runs differing in any component never collide.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, IntegrityError, NotFoundError

__all__ = [
    "CheckpointBundle",
    "checkpoint_dir",
    "save",
    "load",
    "latest",
    "write_container",
]

CHECKPOINT_MAGIC = b"MPCK"
CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = ".mpck"
LATEST_MARKER = "latest"

_PREFIX = struct.Struct("<4sII")
_DTYPES = {"f32": "<f4", "f64": "<f8"}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}
_SAFE_COMPONENT = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_EPOCH_PATTERN = re.compile(r"^checkpoint-(\d+)\.mpck$")


@dataclass
class CheckpointBundle:
    """Named float arrays plus run metadata, as stored in one container."""

    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def checkpoint_dir(model, dataset, preprocessing, experiment, metric, root="results") -> Path:
    """Resolve the unique checkpoint directory for one experiment identity."""
    parts = {
        "model": model,
        "dataset": dataset,
        "preprocessing": preprocessing,
        "experiment": experiment,
        "metric": metric,
    }
    for what, value in parts.items():
        if not isinstance(value, str) or not _SAFE_COMPONENT.match(value):
            raise ConfigurationError(
                f"{what} component {value!r} is not filesystem-safe "
                "(letters, digits, '.', '_', '-' only, no separators)"
            )
    return Path(root) / model / dataset / preprocessing / experiment / metric / "checkpoints"


def _serialize(bundle: CheckpointBundle) -> bytes:
    rows = []
    payloads = []
    offset = 0
    for name in sorted(bundle.tensors):
        arr = np.asarray(bundle.tensors[name])
        dtype_name = _DTYPE_NAMES.get(arr.dtype)
        if dtype_name is None:
            raise ConfigurationError(f"tensor {name!r} has dtype {arr.dtype}; only f32/f64 are stored")
        payload = np.ascontiguousarray(arr).astype(_DTYPES[dtype_name], copy=False).tobytes()
        rows.append({"name": name, "dtype": dtype_name, "shape": list(arr.shape), "offset": offset})
        payloads.append(payload)
        offset += len(payload)
    manifest = json.dumps({"tensors": rows, "meta": bundle.meta}, sort_keys=True).encode("utf-8")
    return b"".join(
        [_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(manifest)), manifest, *payloads]
    )


def _atomic_write(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(bundle: CheckpointBundle, path) -> Path:
    """Write a bundle to an arbitrary path, atomically, without touching any
    ``latest`` marker. Used for feature files and other standalone containers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, _serialize(bundle))
    return path


def save(bundle: CheckpointBundle, ckpt_dir) -> Path:
    """Write ``checkpoint-<epoch>.mpck`` atomically and update ``latest``.

    The epoch comes from ``bundle.meta["epoch"]``. The marker is rewritten
    only after the container itself is safely in place.
    """
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    epoch = int(bundle.meta.get("epoch", 0))
    path = ckpt_dir / f"checkpoint-{epoch}{CHECKPOINT_SUFFIX}"
    _atomic_write(path, _serialize(bundle))
    _atomic_write(ckpt_dir / LATEST_MARKER, (path.name + "\n").encode("utf-8"))
    return path


def load(path) -> CheckpointBundle:
    """Read a container back, verifying magic, version, and payload lengths."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size:
        raise FormatError(f"{path}: truncated header", offset=len(blob))
    magic, version, manifest_len = _PREFIX.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}", offset=4)
    manifest_end = _PREFIX.size + manifest_len
    if len(blob) < manifest_end:
        raise FormatError(f"{path}: truncated manifest", offset=len(blob))
    try:
        manifest = json.loads(blob[_PREFIX.size : manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest: {exc}", offset=_PREFIX.size) from exc

    tensors = {}
    payload = blob[manifest_end:]
    for row in manifest["tensors"]:
        name = row["name"]
        if name in tensors:
            raise IntegrityError(f"{path}: duplicate tensor name {name!r}")
        if row["dtype"] not in _DTYPES:
            raise IntegrityError(f"{path}: tensor {name!r} has unknown dtype {row['dtype']!r}")
        dtype = np.dtype(_DTYPES[row["dtype"]])
        shape = tuple(int(x) for x in row["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start, end = int(row["offset"]), int(row["offset"]) + count * dtype.itemsize
        if end > len(payload):
            raise IntegrityError(
                f"{path}: tensor {name!r} payload runs to byte {end} but only {len(payload)} are present"
            )
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        tensors[name] = arr.astype(dtype.newbyteorder("="), copy=True).reshape(shape)
    return CheckpointBundle(tensors=tensors, meta=manifest.get("meta", {}))


def latest(ckpt_dir) -> Path:
    """Resolve the newest checkpoint in a directory.

    Prefers the ``latest`` marker; falls back to the highest numeric epoch in
    the filenames when the marker is missing or stale.
    """
    ckpt_dir = Path(ckpt_dir)
    marker = ckpt_dir / LATEST_MARKER
    if marker.is_file():
        name = marker.read_text(encoding="utf-8").strip()
        candidate = ckpt_dir / name
        if candidate.is_file():
            return candidate

    best = None
    if ckpt_dir.is_dir():
        for entry in ckpt_dir.iterdir():
            m = _EPOCH_PATTERN.match(entry.name)
            if m:
                epoch = int(m.group(1))
                if best is None or epoch > best[0]:
                    best = (epoch, entry)
    if best is None:
        raise NotFoundError(f"no checkpoint found in {ckpt_dir}")
    return best[1]
