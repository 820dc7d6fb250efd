"""Loading and writing CUB-200-2011 style annotation trees.

Expected files under the dataset root::

    images.txt              <image_id> <relative path>
    image_class_labels.txt  <image_id> <class_id>
    bounding_boxes.txt      <image_id> <x> <y> <w> <h>
    train_test_split.txt    <image_id> <is_train>
    parts/parts.txt         <part_id> <part name>
    parts/part_locs.txt     <image_id> <part_id> <x> <y> <visible>
    sizes.txt               <image_id> <width> <height>     (optional)

Image ids are kept as strings, so NABirds' UUID ids load through the same
reader.  Part ids may start at 0 or 1; they become 0-based keypoint indices.
Image sizes come from ``sizes.txt`` when present, otherwise from the image
file headers under ``images/``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InconsistentCounts, MalformedLine, MissingFile
from .schema import KeypointSchema, load_schema

log = logging.getLogger(__name__)

REQUIRED = (
    "images.txt",
    "image_class_labels.txt",
    "bounding_boxes.txt",
    "train_test_split.txt",
    "parts/parts.txt",
    "parts/part_locs.txt",
)


@dataclass
class ImageRecord:
    id: str
    path: str
    class_id: str
    bbox: tuple[float, float, float, float]
    is_train: bool
    width: int | None = None
    height: int | None = None


@dataclass
class PoseAnnotation:
    xy: np.ndarray       # (n, 2)
    visible: np.ndarray  # (n,) bool

    def __eq__(self, other):
        return (isinstance(other, PoseAnnotation)
                and np.array_equal(self.xy, other.xy)
                and np.array_equal(self.visible, other.visible))


@dataclass
class DatasetIndex:
    records: list[ImageRecord]
    poses: dict[str, PoseAnnotation]
    schema: KeypointSchema
    part_base: int = 1
    root: Path | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.records)

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}

    def class_ids(self) -> list[str]:
        ids = {r.class_id for r in self.records}
        if all(c.lstrip("-").isdigit() for c in ids):
            return sorted(ids, key=int)
        return sorted(ids)

    def labels(self) -> dict[str, int]:
        """0-based class index per image id."""
        index = {c: k for k, c in enumerate(self.class_ids())}
        return {r.id: index[r.class_id] for r in self.records}

    def image_path(self, rec: ImageRecord) -> Path:
        return Path(self.root or ".") / "images" / rec.path


def _rows(path: Path, ncols: int):
    if not path.is_file():
        raise MissingFile(f"missing annotation file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != ncols:
                raise MalformedLine(path, lineno, f"expected {ncols} fields, got {len(parts)}")
            yield lineno, parts


def _keyed(path: Path, ncols: int, convert):
    out = {}
    for lineno, parts in _rows(path, ncols):
        key = parts[0]
        if key in out:
            raise MalformedLine(path, lineno, f"duplicate image id {key}")
        try:
            out[key] = convert(parts[1:])
        except ValueError as exc:
            raise MalformedLine(path, lineno, str(exc)) from None
    return out


def _flag(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"flag must be 0 or 1, got {text!r}")
    return text == "1"


def load_cub(root) -> DatasetIndex:
    root = Path(root)
    for name in REQUIRED:
        if not (root / name).is_file():
            raise MissingFile(f"missing annotation file: {root / name}")

    paths = _keyed(root / "images.txt", 2, lambda p: p[0])
    classes = _keyed(root / "image_class_labels.txt", 2, lambda p: p[0])
    boxes = _keyed(root / "bounding_boxes.txt", 5, lambda p: tuple(float(v) for v in p))
    split = _keyed(root / "train_test_split.txt", 2, lambda p: _flag(p[0]))
    sizes = {}
    if (root / "sizes.txt").is_file():
        sizes = _keyed(root / "sizes.txt", 3, lambda p: (int(p[0]), int(p[1])))

    ids = list(paths)
    for name, table in (("image_class_labels.txt", classes),
                        ("bounding_boxes.txt", boxes),
                        ("train_test_split.txt", split)):
        if set(table) != set(ids):
            raise InconsistentCounts(f"{name} covers {len(table)} images, images.txt lists {len(ids)}")

    schema = load_schema(root / "parts" / "parts.txt")
    part_base = _part_base(root / "parts" / "parts.txt")
    n = schema.n

    xy = {i: np.full((n, 2), np.nan) for i in ids}
    vis = {i: np.zeros(n, dtype=bool) for i in ids}
    seen = {i: np.zeros(n, dtype=bool) for i in ids}
    locs = root / "parts" / "part_locs.txt"
    for lineno, parts in _rows(locs, 5):
        img = parts[0]
        if img not in xy:
            raise MalformedLine(locs, lineno, f"unknown image id {img}")
        try:
            k = int(parts[1]) - part_base
            x, y = float(parts[2]), float(parts[3])
            v = _flag(parts[4])
        except ValueError as exc:
            raise MalformedLine(locs, lineno, str(exc)) from None
        if not 0 <= k < n:
            raise MalformedLine(locs, lineno, f"part id {parts[1]} out of range")
        if seen[img][k]:
            raise MalformedLine(locs, lineno, f"duplicate part {parts[1]} for image {img}")
        seen[img][k] = True
        xy[img][k] = (x, y)
        vis[img][k] = v
    missing = [i for i in ids if not seen[i].all()]
    if missing:
        raise InconsistentCounts(f"part_locs.txt lacks keypoints for {len(missing)} images (first: {missing[0]})")

    records = []
    for i in ids:
        w, h = sizes.get(i) or _image_size(root / "images" / paths[i])
        records.append(ImageRecord(i, paths[i], classes[i], boxes[i], split[i], w, h))
        _check_bounds(records[-1], xy[i], vis[i], schema)

    poses = {i: PoseAnnotation(xy[i], vis[i]) for i in ids}
    return DatasetIndex(records, poses, schema, part_base, root)


load_nabirds = load_cub


def _part_base(path: Path) -> int:
    ids = [int(parts[0]) for _, parts in _rows_loose(path)]
    return min(ids) if ids else 1


def _rows_loose(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line.split(None, 1)


def _image_size(path: Path):
    try:
        with Image.open(path) as im:
            return im.size
    except (OSError, ValueError):
        return None, None


def _check_bounds(rec, xy, vis, schema):
    if rec.width is None:
        return
    for k in np.flatnonzero(vis):
        x, y = xy[k]
        if not (0 <= x <= rec.width and 0 <= y <= rec.height):
            log.warning("image %s: visible keypoint %s at (%g, %g) outside %dx%d",
                        rec.id, schema.names[k], x, y, rec.width, rec.height)


def write_cub(index: DatasetIndex, root) -> None:
    """Write ``index`` as a CUB annotation tree (images are not copied)."""
    root = Path(root)
    (root / "parts").mkdir(parents=True, exist_ok=True)
    recs = index.records

    def dump(name, lines):
        (root / name).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    dump("images.txt", [f"{r.id} {r.path}" for r in recs])
    dump("image_class_labels.txt", [f"{r.id} {r.class_id}" for r in recs])
    dump("bounding_boxes.txt", [f"{r.id} " + " ".join(repr(float(v)) for v in r.bbox) for r in recs])
    dump("train_test_split.txt", [f"{r.id} {int(r.is_train)}" for r in recs])
    if any(r.width is not None for r in recs):
        dump("sizes.txt", [f"{r.id} {r.width} {r.height}" for r in recs if r.width is not None])
    base = index.part_base
    dump("parts/parts.txt", [f"{k + base} {name.replace('-', ' ')}"
                             for k, name in enumerate(index.schema.names)])
    loc_lines = []
    for r in recs:
        pose = index.poses[r.id]
        for k, ((x, y), v) in enumerate(zip(pose.xy, pose.visible)):
            loc_lines.append(f"{r.id} {k + base} {float(x)!r} {float(y)!r} {int(v)}")
    dump("parts/part_locs.txt", loc_lines)
