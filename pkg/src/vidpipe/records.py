"""One-file-per-video binary record store and dataset conversion.

Record file layout, all integers little-endian (documented in
``docs/formats.md``):

    magic     4 bytes   b"MPRV"
    version   u32       currently 1
    num_frames, height, width, channels, label   u32 each
    name_len, class_name_len                     u32 each
    name, class_name                             UTF-8 bytes
    payload   num_frames * height * width * channels bytes of uint8
              pixels, frame-major then row-major

The dataset index is ``index.json`` in the record root:
``{"version": 1, "classes": [...], "splits": {split: [{"path", "label",
"num_frames"}, ...]}}`` with record paths relative to the root. Class order
is the lexicographic order of the class directories; the position of a class
in ``classes`` is its label.
"""

from __future__ import annotations

import json
import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, ShapeError

logger = logging.getLogger(__name__)

RECORD_MAGIC = b"MPRV"
RECORD_VERSION = 1
RECORD_SUFFIX = ".mprv"
INDEX_NAME = "index.json"
INDEX_VERSION = 1

# magic, version, num_frames, height, width, channels, label, name_len, class_name_len
_HEADER = struct.Struct("<4sIIIIIIII")

_FRAME_SUFFIXES = {".png", ".ppm"}


@dataclass
class VideoRecord:
    """One stored video: raw frames plus label and naming metadata.

    ``data`` is a ``(num_frames, height, width, channels)`` uint8 array, so
    the byte length always equals the product of the dimensions.
    """

    data: np.ndarray
    label: int
    name: str
    class_name: str

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def channels(self) -> int:
        return int(self.data.shape[3])


@dataclass
class RecordEntry:
    """One index row: where a record lives and what its header says."""

    path: str
    label: int
    num_frames: int


@dataclass
class DatasetIndex:
    """Converted-dataset manifest: class list plus per-split record entries."""

    root: Path
    classes: list[str]
    splits: dict[str, list[RecordEntry]] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def entries(self, split: str) -> list[RecordEntry]:
        return self.splits[split]


def _stack_frames(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray) and frames.ndim == 4:
        arrays = [frames[i] for i in range(frames.shape[0])]
    else:
        arrays = [np.asarray(f) for f in frames]
    if not arrays:
        raise ShapeError("a record needs at least one frame")
    norm = []
    for i, f in enumerate(arrays):
        if f.ndim == 2:
            f = f[:, :, None]
        if f.ndim != 3:
            raise ShapeError(f"frame {i} has {f.ndim} dimensions, expected 2 or 3")
        if f.dtype != np.uint8:
            raise ShapeError(f"frame {i} dtype is {f.dtype}, records store uint8 pixels")
        norm.append(f)
    shape = norm[0].shape
    for i, f in enumerate(norm):
        if f.shape != shape:
            raise ShapeError(f"frame {i} shape {f.shape} differs from frame 0 shape {shape}")
    if shape[2] not in (1, 3):
        raise ShapeError(f"records support 1 or 3 channels, got {shape[2]}")
    return np.stack(norm)


def write_record(frames, label: int, name: str, class_name: str, out_path: str | Path) -> Path:
    """Write one video as a record file and return its path.

    ``frames`` is a sequence of ``(H, W, C)`` or ``(H, W)`` uint8 arrays (or a
    stacked 4-D array); all frames must share one shape with 1 or 3 channels.
    """
    data = _stack_frames(frames)
    if label < 0:
        raise ShapeError(f"label must be >= 0, got {label}")
    out_path = Path(out_path)
    name_b = name.encode("utf-8")
    class_b = class_name.encode("utf-8")
    t, h, w, c = data.shape
    header = _HEADER.pack(
        RECORD_MAGIC, RECORD_VERSION, t, h, w, c, label, len(name_b), len(class_b)
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "wb") as fh:
        fh.write(header)
        fh.write(name_b)
        fh.write(class_b)
        fh.write(np.ascontiguousarray(data).tobytes())
    return out_path


def _parse_header(buf: bytes, path):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header", offset=len(buf))
    magic, version, t, h, w, c, label, name_len, class_len = _HEADER.unpack_from(buf, 0)
    if magic != RECORD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {RECORD_MAGIC!r}", offset=0)
    if version != RECORD_VERSION:
        raise FormatError(f"{path}: unsupported record version {version}", offset=4)
    if c not in (1, 3):
        raise FormatError(f"{path}: invalid channel count {c}", offset=16)
    return t, h, w, c, label, name_len, class_len


def read_record_header(path: str | Path) -> dict:
    """Read only the fixed header and names of a record file.

    Used for index validation and ``inspect``; never touches the payload.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        buf = fh.read(_HEADER.size)
        t, h, w, c, label, name_len, class_len = _parse_header(buf, path)
        names = fh.read(name_len + class_len)
    if len(names) < name_len + class_len:
        raise FormatError(f"{path}: truncated name block", offset=_HEADER.size + len(names))
    return {
        "num_frames": t,
        "height": h,
        "width": w,
        "channels": c,
        "label": label,
        "name": names[:name_len].decode("utf-8"),
        "class_name": names[name_len:].decode("utf-8"),
    }


def read_record(path: str | Path) -> VideoRecord:
    """Read a record file back into a :class:`VideoRecord`."""
    path = Path(path)
    buf = path.read_bytes()
    t, h, w, c, label, name_len, class_len = _parse_header(buf, path)
    pos = _HEADER.size
    if len(buf) < pos + name_len + class_len:
        raise FormatError(f"{path}: truncated name block", offset=len(buf))
    name = buf[pos : pos + name_len].decode("utf-8")
    class_name = buf[pos + name_len : pos + name_len + class_len].decode("utf-8")
    pos += name_len + class_len
    expected = t * h * w * c
    if len(buf) - pos != expected:
        raise FormatError(
            f"{path}: payload is {len(buf) - pos} bytes, header promises {expected}",
            offset=len(buf),
        )
    data = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=pos).reshape(t, h, w, c)
    return VideoRecord(data=data.copy(), label=label, name=name, class_name=class_name)


def _numeric_key(path: Path):
    m = re.search(r"(\d+)", path.stem)
    return (int(m.group(1)) if m else 0, path.stem)


def _load_frame_image(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)[:, :, None]
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _read_video_source(source: Path) -> np.ndarray:
    """Load one video's frames from a frame-image directory or a record file."""
    if source.is_dir():
        frame_files = sorted(
            (p for p in source.iterdir() if p.suffix.lower() in _FRAME_SUFFIXES),
            key=_numeric_key,
        )
        if not frame_files:
            raise ShapeError(f"{source}: no frame images found")
        return _stack_frames([_load_frame_image(p) for p in frame_files])
    if source.suffix == RECORD_SUFFIX:
        return read_record(source).data
    raise ShapeError(f"{source}: not a frame directory or record file")


def _resolve_split(stem: str, full_name: str, split_lists: dict[str, list[str]]) -> str | None:
    for split, names in split_lists.items():
        if stem in names or full_name in names:
            return split
    return None


def convert_dataset(
    src_root: str | Path,
    out_root: str | Path,
    split_lists: dict[str, list[str]] | None = None,
) -> DatasetIndex:
    """Convert a class-per-subdirectory dataset into a record store.

    Each video under ``src_root/<class>/`` is either a directory of
    numerically ordered PNG/PPM frames or an existing record file. One record
    file per video is written under ``out_root`` and an index file describes
    the result. Unreadable videos are skipped with a warning; they never
    abort the rest of the conversion. When ``split_lists`` maps split names
    to video names, each video lands in the first split listing it and
    unlisted videos are dropped with a warning; without it everything goes to
    the "train" split.
    """
    src_root = Path(src_root)
    out_root = Path(out_root)
    if not src_root.is_dir():
        raise FileNotFoundError(f"dataset root {src_root} does not exist")
    class_dirs = sorted((d for d in src_root.iterdir() if d.is_dir()), key=lambda d: d.name)
    classes = [d.name for d in class_dirs]
    split_names = list(split_lists) if split_lists else ["train"]
    splits: dict[str, list[RecordEntry]] = {s: [] for s in split_names}

    out_root.mkdir(parents=True, exist_ok=True)
    for label, class_dir in enumerate(class_dirs):
        sources = sorted(
            (p for p in class_dir.iterdir() if not p.name.startswith(".")),
            key=lambda p: p.name,
        )
        if not sources:
            logger.warning("class directory %s is empty; class kept with no records", class_dir)
            continue
        for source in sources:
            stem = source.stem if source.is_file() else source.name
            video_name = f"{class_dir.name}/{stem}"
            if split_lists is not None:
                split = _resolve_split(stem, video_name, split_lists)
                if split is None:
                    logger.warning("video %s is in no split list; dropped", video_name)
                    continue
            else:
                split = "train"
            try:
                data = _read_video_source(source)
            except Exception as exc:
                logger.warning("skipping video %s: %s", video_name, exc)
                continue
            rec_path = out_root / class_dir.name / f"{stem}{RECORD_SUFFIX}"
            write_record(data, label, video_name, class_dir.name, rec_path)
            rel = rec_path.relative_to(out_root).as_posix()
            splits[split].append(RecordEntry(path=rel, label=label, num_frames=data.shape[0]))

    index = DatasetIndex(root=out_root, classes=classes, splits=splits)
    save_index(index, out_root)
    return index


def save_index(index: DatasetIndex, out_root: str | Path) -> Path:
    """Write ``index.json`` for a record store."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": INDEX_VERSION,
        "classes": index.classes,
        "splits": {
            split: [
                {"path": e.path, "label": e.label, "num_frames": e.num_frames}
                for e in entries
            ]
            for split, entries in index.splits.items()
        },
    }
    path = out_root / INDEX_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_index(out_root: str | Path) -> DatasetIndex:
    """Load ``index.json`` and validate it against the record files on disk.

    Validation is header-only: every referenced file must exist and its
    header must agree with the index entry. Payloads are not read, so load
    time scales with the entry count, not the stored pixel volume.
    """
    out_root = Path(out_root)
    path = out_root / INDEX_NAME
    if not path.is_file():
        raise IntegrityError(f"no {INDEX_NAME} under {out_root}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("version") != INDEX_VERSION:
        raise IntegrityError(f"{path}: unsupported index version {doc.get('version')}")

    classes = list(doc["classes"])
    splits: dict[str, list[RecordEntry]] = {}
    missing: list[str] = []
    seen_paths: set[str] = set()
    for split, rows in doc["splits"].items():
        entries = []
        for row in rows:
            entry = RecordEntry(path=row["path"], label=int(row["label"]), num_frames=int(row["num_frames"]))
            if entry.path in seen_paths:
                raise IntegrityError(f"record {entry.path} appears in more than one split")
            seen_paths.add(entry.path)
            rec_path = out_root / entry.path
            if not rec_path.is_file():
                missing.append(entry.path)
                continue
            header = read_record_header(rec_path)
            if header["num_frames"] != entry.num_frames or header["label"] != entry.label:
                raise IntegrityError(
                    f"record {entry.path} header (frames={header['num_frames']}, "
                    f"label={header['label']}) disagrees with index entry "
                    f"(frames={entry.num_frames}, label={entry.label})"
                )
            if entry.label >= len(classes):
                raise IntegrityError(f"record {entry.path} label {entry.label} >= num_classes {len(classes)}")
            entries.append(entry)
        splits[split] = entries
    if missing:
        raise IntegrityError("index references missing record files: " + ", ".join(missing))
    return DatasetIndex(root=out_root, classes=classes, splits=splits)
