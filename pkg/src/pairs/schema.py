"""Keypoint vocabularies, symmetric pairs and patch-class enumeration.

A schema with ``n`` keypoints yields ``n*(n-1)/2`` raw patch classes, one per
unordered keypoint pair.  Declaring left/right counterparts collapses each
counterpart pair into one semantic id; raw pairs whose endpoints share the
same pair of semantic ids then fall into a single hybrid class.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidSchema, MalformedLine, MissingFile

CUB_PART_NAMES = (
    "back", "beak", "belly", "breast", "crown", "forehead",
    "left-eye", "left-leg", "left-wing", "nape",
    "right-eye", "right-leg", "right-wing", "tail", "throat",
)


@dataclass(frozen=True)
class KeypointSchema:
    names: tuple[str, ...]
    symmetric_pairs: tuple[tuple[int, int], ...] = ()
    left_prefix: str = "left-"
    right_prefix: str = "right-"

    def __post_init__(self):
        names = tuple(self.names)
        pairs = tuple(tuple(sorted((int(a), int(b)))) for a, b in self.symmetric_pairs)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "symmetric_pairs", pairs)
        if not names:
            raise InvalidSchema("schema has no keypoints")
        if any(not n or n != n.strip() for n in names):
            raise InvalidSchema("keypoint names must be non-empty and unpadded")
        if len(set(names)) != len(names):
            raise InvalidSchema("keypoint names must be unique")
        seen = set()
        for i, j in pairs:
            if i == j:
                raise InvalidSchema(f"symmetric pair ({i}, {j}) pairs a keypoint with itself")
            for k in (i, j):
                if not 0 <= k < len(names):
                    raise InvalidSchema(f"symmetric pair index {k} out of range")
                if k in seen:
                    raise InvalidSchema(f"keypoint {names[k]!r} appears in two symmetric pairs")
                seen.add(k)

    @property
    def n(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def semantic_ids(self) -> tuple[str, ...]:
        """Semantic id of every keypoint, in keypoint order."""
        ids = list(self.names)
        for i, j in self.symmetric_pairs:
            ids[i] = ids[j] = self._merged_name(self.names[i], self.names[j])
        return tuple(ids)

    def _merged_name(self, a: str, b: str) -> str:
        lp, rp = self.left_prefix, self.right_prefix
        for x, y in ((a, b), (b, a)):
            if lp and rp and x.startswith(lp) and y.startswith(rp):
                suffix = x[len(lp):]
                if suffix and suffix == y[len(rp):]:
                    return suffix
        lo, hi = sorted((a, b))
        return f"{lo}+{hi}"


CUB_SCHEMA = KeypointSchema(
    CUB_PART_NAMES,
    symmetric_pairs=((6, 10), (7, 11), (8, 12)),
)


@dataclass(frozen=True)
class PatchClass:
    """A raw keypoint pair or a hybrid class pooling several raw pairs.

    ``key`` is ``(i, j)`` keypoint indices for raw classes and a pair of
    semantic ids for hybrid classes.
    """

    kind: str
    key: tuple
    members: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("raw", "hybrid"):
            raise ValueError(f"unknown patch class kind {self.kind!r}")
        if self.kind == "raw" and len(self.members) != 1:
            raise ValueError("raw patch classes hold exactly one member pair")

    @property
    def name(self) -> str:
        return f"{self.key[0]}__{self.key[1]}"

    def label(self, schema: KeypointSchema) -> str:
        if self.kind == "raw":
            i, j = self.key
            return f"{schema.names[i]}__{schema.names[j]}"
        return self.name


def enumerate_raw_pairs(schema: KeypointSchema) -> list[PatchClass]:
    return [
        PatchClass("raw", (i, j), ((i, j),))
        for i, j in itertools.combinations(range(schema.n), 2)
    ]


def merge_symmetric(schema: KeypointSchema, classes: list[PatchClass]) -> list[PatchClass]:
    """Group the member pairs of ``classes`` into hybrid classes.

    Semantic ids are ordered by their lowest keypoint index; hybrid classes
    come out in order of their first member in lexicographic pair order.
    Applying this to its own output is a no-op.
    """
    sem = schema.semantic_ids()
    rank = {}
    for k, s in enumerate(sem):
        rank.setdefault(s, k)

    members = sorted(p for c in classes for p in c.members)
    groups: dict[tuple[str, str], list[tuple[int, int]]] = {}
    for i, j in members:
        a, b = sorted((sem[i], sem[j]), key=rank.__getitem__)
        groups.setdefault((a, b), []).append((i, j))
    return [PatchClass("hybrid", key, tuple(ps)) for key, ps in groups.items()]


def oriented_members(schema: KeypointSchema, cls: PatchClass) -> list[tuple[int, int]]:
    """Member pairs ordered so the first keypoint carries the class's first semantic id.

    Pooled hybrid patches then share one orientation; raw classes are
    returned unchanged.
    """
    if cls.kind == "raw":
        return list(cls.members)
    sem = schema.semantic_ids()
    return [(i, j) if sem[i] == cls.key[0] else (j, i) for i, j in cls.members]


def hybrid_index(schema: KeypointSchema) -> dict[tuple[int, int], PatchClass]:
    """Map every raw pair ``(i, j)`` with ``i < j`` to its hybrid class."""
    out = {}
    for cls in merge_symmetric(schema, enumerate_raw_pairs(schema)):
        for p in cls.members:
            out[p] = cls
    return out


_CUB_LINE = re.compile(r"^(\d+)\s+(\S.*)$")


def load_schema(path) -> KeypointSchema:
    """Read a schema file or a CUB ``parts/parts.txt``.

    Native format: one keypoint name per line in index order, then a blank
    line, then ``sym <name1> <name2>`` lines.  Lines starting with ``#`` are
    ignored.  A file whose every entry looks like ``<id> <name>`` (ids from
    0 or 1) is read as CUB parts, with spaces in names turned into hyphens
    and symmetric pairs inferred from ``left-``/``right-`` prefixes.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"schema file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()

    entries = [(n, ln.strip()) for n, ln in enumerate(lines, 1)
               if ln.strip() and not ln.lstrip().startswith("#")]
    if entries and all(_CUB_LINE.match(text) for _, text in entries):
        return _parse_cub_parts(path, entries)

    names: list[str] = []
    sym_lines: list[tuple[int, str]] = []
    in_names = True
    for lineno, raw in enumerate(lines, 1):
        text = raw.strip()
        if text.startswith("#"):
            continue
        if not text:
            if names:
                in_names = False
            continue
        if in_names and not text.startswith("sym "):
            if len(text.split()) != 1:
                raise MalformedLine(path, lineno, "keypoint names may not contain whitespace")
            names.append(text)
        else:
            in_names = False
            sym_lines.append((lineno, text))

    pairs = []
    for lineno, text in sym_lines:
        parts = text.split()
        if len(parts) != 3 or parts[0] != "sym":
            raise MalformedLine(path, lineno, "expected 'sym <name1> <name2>'")
        try:
            pairs.append((names.index(parts[1]), names.index(parts[2])))
        except ValueError:
            raise MalformedLine(path, lineno, "unknown keypoint name") from None
    return KeypointSchema(tuple(names), tuple(pairs))


def _parse_cub_parts(path, entries) -> KeypointSchema:
    rows = []
    for lineno, text in entries:
        m = _CUB_LINE.match(text)
        rows.append((int(m.group(1)), "-".join(m.group(2).split()), lineno))
    rows.sort()
    base = min(1, rows[0][0])
    for expect, (pid, _, lineno) in enumerate(rows, base):
        if pid != expect:
            raise MalformedLine(path, lineno, f"part ids must run {base}..n contiguously, got {pid}")
    names = tuple(name for _, name, _ in rows)
    pairs = []
    for i, name in enumerate(names):
        if name.startswith("left-"):
            twin = "right-" + name[len("left-"):]
            if twin in names:
                pairs.append((i, names.index(twin)))
    return KeypointSchema(names, tuple(pairs))


def dump_schema(schema: KeypointSchema) -> str:
    out = list(schema.names)
    if schema.symmetric_pairs:
        out.append("")
        out += [f"sym {schema.names[i]} {schema.names[j]}" for i, j in schema.symmetric_pairs]
    return "\n".join(out) + "\n"
