"""Decoding multi-channel keypoint heatmaps into image-space keypoints.

Every channel contributes its maximally activated cell; no sub-cell
refinement is applied.  The cell centre is scaled by the ratio between the
source image and the tensor resolution.

Binary layout (little-endian)::

    b"PTNS" u32 n_channels u32 tensor_w u32 tensor_h u32 img_w u32 img_h
    float32[n_channels][tensor_h][tensor_w]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, EmptyTensor, InconsistentCounts, MissingFile

MAGIC = b"PTNS"
_HEADER = struct.Struct("<4s5I")


@dataclass
class PoseTensor:
    channels: np.ndarray  # (n_channels, tensor_h, tensor_w)
    img_w: int
    img_h: int

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.ndim != 3:
            raise ValueError(f"pose tensor must be 3-D (channels, h, w), got shape {ch.shape}")
        if ch.size and (not np.all(np.isfinite(ch)) or np.any(ch < 0)):
            raise ValueError("pose tensor values must be finite and non-negative")
        if self.img_w <= 0 or self.img_h <= 0:
            raise ValueError("image dimensions must be positive")
        self.channels = ch

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def tensor_w(self) -> int:
        return self.channels.shape[2]

    @property
    def tensor_h(self) -> int:
        return self.channels.shape[1]


@dataclass
class DecodedPose:
    xy: np.ndarray          # (n, 2) image coordinates
    confidence: np.ndarray  # (n,)
    visible: np.ndarray     # (n,) bool

    def to_rows(self) -> list[list[float]]:
        return [[float(x), float(y), float(c)] for (x, y), c in zip(self.xy, self.confidence)]


def decode(t: PoseTensor, threshold: float | None = None) -> DecodedPose:
    """Argmax decoding; ties go to the first cell in row-major order.

    With ``threshold`` set, keypoints whose peak falls below it are flagged
    invisible.  By default every keypoint counts as visible.
    """
    n, th, tw = t.channels.shape
    if th == 0 or tw == 0:
        raise EmptyTensor(f"pose tensor channels have zero area ({tw}x{th})")
    flat = t.channels.reshape(n, -1)
    idx = np.argmax(flat, axis=1)
    rows, cols = np.divmod(idx, tw)
    xy = np.column_stack([
        (cols + 0.5) * (t.img_w / tw),
        (rows + 0.5) * (t.img_h / th),
    ])
    conf = flat[np.arange(n), idx].astype(np.float64)
    if threshold is None:
        visible = np.ones(n, dtype=bool)
    else:
        visible = conf >= threshold
    return DecodedPose(xy, conf, visible)


def write_pose_tensor(path, t: PoseTensor) -> None:
    n, th, tw = t.channels.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, tw, th, t.img_w, t.img_h))
        fh.write(np.ascontiguousarray(t.channels, dtype="<f4").tobytes())


def read_pose_tensor(path) -> PoseTensor:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"pose tensor file not found: {path}")
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise InconsistentCounts(f"{path}: truncated header")
    magic, n, tw, th, img_w, img_h = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    expected = _HEADER.size + 4 * n * tw * th
    if len(buf) != expected:
        raise InconsistentCounts(f"{path}: expected {expected} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, th, tw)
    try:
        return PoseTensor(data.astype(np.float32), img_w, img_h)
    except ValueError as exc:
        raise InconsistentCounts(f"{path}: {exc}") from None
