"""Batch extraction of pose-aligned patches for every image and keypoint pair.

Output layout under ``out_dir``::

    <image_id>__<kpA>__<kpB>.png      one patch per pair (or under <hybrid>/ when merging)
    <image_id>.json                   sidecar: skipped pairs for that image
    manifest.json                     totals and per-image counts

Images are processed independently (optionally in worker processes) and the
manifest is merged in dataset order, so the output does not depend on the
worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetIndex
from .errors import DegeneratePair
from .geometry import DEFAULT_SIZE, load_image, patch_transform, save_image, warp_patch
from .schema import KeypointSchema, enumerate_raw_pairs, merge_symmetric, oriented_members

log = logging.getLogger(__name__)

POLICIES = ("all", "visible-only")


@dataclass(frozen=True)
class _Job:
    image_id: str
    image_path: str
    xy: np.ndarray
    visible: np.ndarray
    jobs: tuple  # ((i, j, subdir), ...)
    out_dir: str
    size: tuple
    policy: str
    fill: float


def plan_pairs(schema: KeypointSchema, merge: bool) -> list[tuple[int, int, str]]:
    """``(i, j, subdir)`` for every raw pair; ``subdir`` names the hybrid class when merging."""
    raw = enumerate_raw_pairs(schema)
    if not merge:
        return [(i, j, "") for c in raw for i, j in c.members]
    plan = []
    for cls in merge_symmetric(schema, raw):
        plan += [(i, j, cls.name) for i, j in oriented_members(schema, cls)]
    return sorted(plan, key=lambda t: tuple(sorted(t[:2])))


def _run(job: _Job, names) -> dict:
    entry = {"image_id": job.image_id, "written": 0, "skipped_degenerate": [],
             "skipped_invisible": [], "error": None}
    try:
        image = load_image(job.image_path)
    except (OSError, ValueError) as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
        return entry
    out = Path(job.out_dir)
    for i, j, subdir in job.jobs:
        label = [names[i], names[j]]
        if job.policy == "visible-only" and not (job.visible[i] and job.visible[j]):
            entry["skipped_invisible"].append(label)
            continue
        try:
            spec = patch_transform(job.xy[i], job.xy[j], *job.size)
        except DegeneratePair:
            entry["skipped_degenerate"].append(label)
            continue
        target = out / subdir if subdir else out
        target.mkdir(parents=True, exist_ok=True)
        save_image(target / f"{job.image_id}__{names[i]}__{names[j]}.png", warp_patch(image, spec, job.fill))
        entry["written"] += 1
    sidecar = {k: entry[k] for k in ("image_id", "skipped_degenerate", "skipped_invisible")}
    (out / f"{job.image_id}.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return entry


def _run_star(args):
    return _run(*args)


def extract_all(index: DatasetIndex, out_dir, size=DEFAULT_SIZE, policy: str = "all",
                merge_symmetric: bool = False, keypoints: dict | None = None,
                workers: int = 1, fill: float = 0.5) -> dict:
    """Warp every pair of every image and write the manifest.

    ``keypoints`` optionally overrides annotated locations with predicted
    ones (image id to ``(n, 2+)`` array); predicted keypoints count as
    visible.  Per-image IO failures are recorded, not raised.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    patch_transform((0.0, 0.0), (1.0, 0.0), *size)  # reject a bad aspect before any work
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema = index.schema
    plan = tuple(plan_pairs(schema, merge_symmetric))

    jobs = []
    for rec in index.records:
        pose = index.poses[rec.id]
        xy, vis = pose.xy, pose.visible
        if keypoints is not None:
            xy = np.asarray(keypoints[rec.id], dtype=np.float64)[:, :2]
            vis = np.ones(schema.n, dtype=bool)
        jobs.append(_Job(rec.id, str(index.image_path(rec)), xy, vis, plan, str(out),
                         tuple(size), policy, fill))

    args = [(job, schema.names) for job in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_star, args, chunksize=4))
    else:
        entries = [_run_star(a) for a in args]

    for e in entries:
        if e["error"]:
            log.error("image %s: %s", e["image_id"], e["error"])
    manifest = {
        "pairs_per_image": len(plan),
        "images": len(entries),
        "policy": policy,
        "merge_symmetric": merge_symmetric,
        "size": list(size),
        "written": sum(e["written"] for e in entries),
        "skipped_degenerate": sum(len(e["skipped_degenerate"]) for e in entries),
        "skipped_invisible": sum(len(e["skipped_invisible"]) for e in entries),
        "errors": [{"image_id": e["image_id"], "error": e["error"]} for e in entries if e["error"]],
        "per_image": [{"image_id": e["image_id"], "written": e["written"],
                       "skipped_degenerate": len(e["skipped_degenerate"]),
                       "skipped_invisible": len(e["skipped_invisible"])} for e in entries],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
