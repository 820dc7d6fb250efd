"""Keypoint and per-patch evaluation.

PCK counts a predicted keypoint as correct when its distance to ground truth
is at most ``c * max(box_w, box_h)``.  Keypoints whose ground truth is not
visible are left out of every denominator.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MismatchedIds

DEFAULT_C = 0.1


@dataclass(frozen=True)
class PckConfig:
    c: float = DEFAULT_C

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"PCK factor c must be positive, got {self.c}")


def pck_threshold(box_w: float, box_h: float, c: float = DEFAULT_C) -> float:
    if box_w <= 0 or box_h <= 0:
        raise ValueError(f"bounding box must have positive size, got {box_w}x{box_h}")
    return c * max(box_w, box_h)


def pck_correct(pred, gt, box_w: float, box_h: float, c: float = DEFAULT_C) -> bool:
    dx = float(pred[0]) - float(gt[0])
    dy = float(pred[1]) - float(gt[1])
    return bool(np.hypot(dx, dy) <= pck_threshold(box_w, box_h, c))


@dataclass
class PckReport:
    names: tuple[str, ...]
    correct: np.ndarray    # (n_keypoints,) int
    evaluated: np.ndarray  # (n_keypoints,) int

    @property
    def per_keypoint(self) -> np.ndarray:
        """Percentages; NaN for keypoints never visible."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return 100.0 * self.correct / self.evaluated

    @property
    def overall(self) -> float:
        """Micro-average over every evaluated keypoint instance."""
        total = int(self.evaluated.sum())
        return 100.0 * int(self.correct.sum()) / total if total else float("nan")

    @property
    def overall_macro(self) -> float:
        vals = self.per_keypoint
        vals = vals[~np.isnan(vals)]
        return float(vals.mean()) if vals.size else float("nan")


def pck_report(preds: dict, gts: dict, boxes: dict, names, c: float = DEFAULT_C) -> PckReport:
    """PCK over a set of images.

    ``preds`` maps image id to an ``(n, 2)`` array (extra columns ignored);
    ``gts`` maps image id to a :class:`~pairs.dataset.PoseAnnotation`;
    ``boxes`` maps image id to ``(x, y, w, h)``.
    """
    PckConfig(c)
    if set(preds) != set(gts):
        extra = sorted(set(preds) ^ set(gts))
        raise MismatchedIds(f"prediction and ground-truth image sets differ ({len(extra)} ids, e.g. {extra[0]})")
    n = len(names)
    correct = np.zeros(n, dtype=np.int64)
    evaluated = np.zeros(n, dtype=np.int64)
    for image_id in sorted(gts):
        gt = gts[image_id]
        pred = np.asarray(preds[image_id], dtype=np.float64)[:, :2]
        if pred.shape[0] != n or gt.xy.shape[0] != n:
            raise DimensionMismatch(f"image {image_id}: expected {n} keypoints")
        _, _, bw, bh = boxes[image_id]
        thr = pck_threshold(bw, bh, c)
        vis = np.asarray(gt.visible, dtype=bool)
        dist = np.hypot(*(pred - gt.xy).T)
        evaluated += vis
        correct += vis & (dist <= thr)
    return PckReport(tuple(names), correct, evaluated)


def format_pck_table(names, values, overall, row_label="PCK", per_row=8) -> str:
    """Aligned table in blocks of ``per_row`` columns, ``Overall`` last."""
    cols = list(names) + ["Overall"]
    cells = [_fmt(v) for v in values] + [_fmt(overall)]
    label_w = max(len(row_label), 1)
    lines = []
    for start in range(0, len(cols), per_row):
        head = cols[start:start + per_row]
        body = cells[start:start + per_row]
        widths = [max(len(h), len(b)) for h, b in zip(head, body)]
        lines.append(" " * label_w + " | " + " | ".join(h.rjust(w) for h, w in zip(head, widths)))
        lines.append(row_label.ljust(label_w) + " | " + " | ".join(b.rjust(w) for b, w in zip(body, widths)))
        lines.append("")
    return "\n".join(lines)


def format_pck_tsv(report: PckReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["keypoint", "pck", "correct", "evaluated"])
    for name, v, k, e in zip(report.names, report.per_keypoint, report.correct, report.evaluated):
        w.writerow([name, _fmt(v), int(k), int(e)])
    w.writerow(["Overall", _fmt(report.overall), int(report.correct.sum()), int(report.evaluated.sum())])
    w.writerow(["Overall (macro)", _fmt(report.overall_macro), "", ""])
    return buf.getvalue()


def _fmt(v) -> str:
    return "N/A" if v is None or np.isnan(v) else f"{v:.1f}"


def _patch_hits(scores: np.ndarray, labels) -> np.ndarray:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.ndim != 3:
        raise DimensionMismatch(f"scores must be (images, patches, classes), got shape {scores.shape}")
    if labels.shape != (scores.shape[0],):
        raise DimensionMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {scores.shape[0]} images")
    return np.argmax(scores, axis=2) == labels[:, None]


def patch_accuracy(scores: np.ndarray, labels) -> np.ndarray:
    """Fraction of images each patch classifies correctly on its own."""
    hits = _patch_hits(scores, labels)
    if hits.shape[0] == 0:
        return np.full(hits.shape[1], np.nan)
    return hits.mean(axis=0)


def difficulty_histogram(scores: np.ndarray, labels) -> np.ndarray:
    """Counts of images by number of individually correct patches (0..n_patches)."""
    hits = _patch_hits(scores, labels)
    return np.bincount(hits.sum(axis=1), minlength=hits.shape[1] + 1)


def format_histogram_csv(hist) -> str:
    lines = ["bucket,count"] + [f"{k},{int(v)}" for k, v in enumerate(hist)]
    return "\n".join(lines) + "\n"
