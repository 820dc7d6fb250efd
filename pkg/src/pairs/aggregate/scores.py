"""Per-image, per-patch class scores and their on-disk formats.

Binary layout (little-endian)::

    b"PSCR" u32 n_images u32 n_patches u32 n_classes
    u32[n_images]   labels
    u8[n_images]    split flags (1 = train, 0 = test)
    float32[n_images][n_patches][n_classes]

The CSV debug format has one row per (image, patch) with columns
``image_id,patch_id,label,split,s0,...``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadMagic, DegenerateSplit, DimensionMismatch, InconsistentCounts, MalformedLine, MissingFile

MAGIC = b"PSCR"
_HEADER = struct.Struct("<4s3I")
SPLITS = ("train", "test", "all")


@dataclass
class ScoreTensor:
    data: np.ndarray      # (n_images, n_patches, n_classes) float32
    labels: np.ndarray    # (n_images,) int
    is_train: np.ndarray  # (n_images,) bool

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.is_train = np.asarray(self.is_train, dtype=bool)
        if self.data.ndim != 3:
            raise DimensionMismatch(f"score data must be 3-D, got shape {self.data.shape}")
        n = self.data.shape[0]
        if self.labels.shape != (n,) or self.is_train.shape != (n,):
            raise DimensionMismatch(f"{n} images but {self.labels.shape[0]} labels / {self.is_train.shape[0]} split flags")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DimensionMismatch(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("scores must be finite")

    @property
    def n_images(self) -> int:
        return self.data.shape[0]

    @property
    def n_patches(self) -> int:
        return self.data.shape[1]

    @property
    def n_classes(self) -> int:
        return self.data.shape[2]

    def mask(self, split: str) -> np.ndarray:
        if split == "train":
            return self.is_train
        if split == "test":
            return ~self.is_train
        if split == "all":
            return np.ones(self.n_images, dtype=bool)
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")

    def split(self, split: str, require: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Float64 scores and labels for one split."""
        m = self.mask(split)
        if require and not m.any():
            raise DegenerateSplit(f"the {split} split has no images")
        return self.data[m].astype(np.float64), self.labels[m]

    def features(self) -> np.ndarray:
        """Concatenated patch scores, one row per image."""
        return self.data.reshape(self.n_images, -1).astype(np.float64)

    def __eq__(self, other):
        return (isinstance(other, ScoreTensor)
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.is_train, other.is_train))


def write_scores(path, st: ScoreTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, st.n_images, st.n_patches, st.n_classes))
        fh.write(st.labels.astype("<u4").tobytes())
        fh.write(st.is_train.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(st.data, dtype="<f4").tobytes())


def read_scores(path) -> ScoreTensor:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"score file not found: {path}")
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise InconsistentCounts(f"{path}: truncated header")
    magic, n, p, c = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    expected = _HEADER.size + 5 * n + 4 * n * p * c
    if len(buf) != expected:
        raise InconsistentCounts(f"{path}: expected {expected} bytes, found {len(buf)}")
    off = _HEADER.size
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
    off += 4 * n
    flags = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)
    off += n
    if np.any(flags > 1):
        raise InconsistentCounts(f"{path}: split flags must be 0 or 1")
    data = np.frombuffer(buf, dtype="<f4", offset=off).reshape(n, p, c)
    try:
        return ScoreTensor(data.copy(), labels.astype(np.int64), flags.astype(bool))
    except (DimensionMismatch, ValueError) as exc:
        raise InconsistentCounts(f"{path}: {exc}") from None


def write_scores_csv(path, st: ScoreTensor) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "patch_id", "label", "split"] + [f"s{k}" for k in range(st.n_classes)])
        for i in range(st.n_images):
            for p in range(st.n_patches):
                w.writerow([i, p, int(st.labels[i]), int(st.is_train[i])]
                           + [repr(float(v)) for v in st.data[i, p]])


def read_scores_csv(path) -> ScoreTensor:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"score file not found: {path}")
    rows = {}
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:4] != ["image_id", "patch_id", "label", "split"]:
            raise MalformedLine(path, 1, "bad header")
        n_classes = len(header) - 4
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise MalformedLine(path, lineno, f"expected {len(header)} fields")
            try:
                i, p, label, split = (int(v) for v in row[:4])
                vals = [float(v) for v in row[4:]]
            except ValueError as exc:
                raise MalformedLine(path, lineno, str(exc)) from None
            if meta.setdefault(i, (label, split)) != (label, split):
                raise MalformedLine(path, lineno, f"image {i} has conflicting label/split")
            rows[(i, p)] = vals
    n = max((i for i, _ in rows), default=-1) + 1
    p = max((q for _, q in rows), default=-1) + 1
    if len(rows) != n * p:
        raise InconsistentCounts(f"{path}: expected {n * p} rows for {n} images x {p} patches, got {len(rows)}")
    data = np.array([[rows[i, q] for q in range(p)] for i in range(n)], dtype=np.float32).reshape(n, p, n_classes)
    labels = [meta[i][0] for i in range(n)]
    flags = [meta[i][1] == 1 for i in range(n)]
    return ScoreTensor(data, labels, flags)


def load_scores(path) -> ScoreTensor:
    """Read either format, chosen by extension (``.csv`` or binary)."""
    if str(path).lower().endswith(".csv"):
        return read_scores_csv(path)
    return read_scores(path)
