"""Pose-aligned rectangles for keypoint pairs and the warp into a uniform patch.

Image coordinates have the origin at the top-left corner, x to the right and
y downward; pixel ``(col, row)`` covers ``[col, col+1) x [row, row+1)`` and
its value lives at the centre ``(col + 0.5, row + 0.5)``.

For keypoints ``p_i``, ``p_j`` with ``d = |p_j - p_i|``, the unit direction
``r = (p_j - p_i) / d`` and its perpendicular ``t = (-r_y, r_x)`` span a
``2d x d`` rectangle centred on the pair midpoint.  The patch transform is an
orientation-preserving similarity that sends this rectangle onto the
``out_w x out_h`` patch with ``r`` along +u and ``t`` along +v, so ``p_i``
lands at ``(out_w/4, out_h/2)`` and ``p_j`` at ``(3*out_w/4, out_h/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import BadAspect, DegeneratePair

EPS = 1e-6
DEFAULT_SIZE = (512, 256)


def _frame(p_i, p_j):
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    if not (np.all(np.isfinite(p_i)) and np.all(np.isfinite(p_j))):
        raise ValueError("keypoints must be finite")
    delta = p_j - p_i
    d = float(np.hypot(delta[0], delta[1]))
    if d <= EPS:
        raise DegeneratePair(f"keypoints {tuple(p_i)} and {tuple(p_j)} coincide")
    r = delta / d
    t = np.array([-r[1], r[0]])
    return p_i, p_j, d, r, t


def pair_rectangle(p_i, p_j) -> np.ndarray:
    """Corners of the ``2d x d`` rectangle around a keypoint pair, shape (4, 2).

    Rows follow the 2x2 corner layout read row by row:
    ``(p_i - h r) + h t``, ``(p_j + h r) - h t``, ``(p_i - h r) - h t``,
    ``(p_j + h r) + h t`` with ``h = d/2``.
    """
    p_i, p_j, d, r, t = _frame(p_i, p_j)
    h = d / 2
    a = p_i - h * r
    b = p_j + h * r
    return np.array([a + h * t, b - h * t, a - h * t, b + h * t])


@dataclass(frozen=True)
class PatchSpec:
    corners: np.ndarray     # (4, 2), order as in pair_rectangle
    transform: np.ndarray   # (2, 3), image -> patch coordinates
    out_w: int
    out_h: int

    @property
    def scale(self) -> float:
        return float(np.hypot(self.transform[0, 0], self.transform[1, 0]))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.transform[:, :2].T + self.transform[:, 2]

    def inverse(self) -> np.ndarray:
        return invert_affine(self.transform)


def invert_affine(m: np.ndarray) -> np.ndarray:
    a = np.linalg.inv(m[:, :2])
    return np.hstack([a, (-a @ m[:, 2])[:, None]])


def patch_transform(p_i, p_j, out_w: int = DEFAULT_SIZE[0], out_h: int = DEFAULT_SIZE[1]) -> PatchSpec:
    if out_w <= 0 or out_h <= 0 or out_w != 2 * out_h:
        raise BadAspect(f"patch size must be 2:1 (w = 2h), got {out_w}x{out_h}")
    corners = pair_rectangle(p_i, p_j)
    p_i, p_j, d, r, t = _frame(p_i, p_j)
    s = out_h / d
    lin = s * np.vstack([r, t])
    mid = (p_i + p_j) / 2
    offset = np.array([out_w / 2, out_h / 2]) - lin @ mid
    return PatchSpec(corners, np.hstack([lin, offset[:, None]]), int(out_w), int(out_h))


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill=0.5) -> np.ndarray:
    """Sample ``image`` (H, W[, C]) at continuous coordinates.

    Points inside the image extent ``[0, W] x [0, H]`` interpolate between
    pixel centres, clamping to the edge pixels in the outer half-pixel
    band; points outside take ``fill``.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    inside = (xs >= 0) & (xs <= w) & (ys >= 0) & (ys <= h)
    fx = np.clip(xs - 0.5, 0, w - 1)
    fy = np.clip(ys - 0.5, 0, h - 1)
    x0 = np.minimum(np.floor(fx).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(fy).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = fx - x0
    ay = fy - y0
    if img.ndim == 3:
        ax = ax[..., None]
        ay = ay[..., None]
    top = img[y0, x0] * (1 - ax) + img[y0, x1] * ax
    bot = img[y1, x0] * (1 - ax) + img[y1, x1] * ax
    out = top * (1 - ay) + bot * ay
    mask = inside[..., None] if img.ndim == 3 else inside
    return np.where(mask, out, fill)


def warp_affine(image: np.ndarray, transform: np.ndarray, out_w: int, out_h: int, fill=0.5) -> np.ndarray:
    """Resample ``image`` into an ``out_h x out_w`` grid through the forward map ``transform``."""
    inv = invert_affine(np.asarray(transform, dtype=np.float64))
    u, v = np.meshgrid(np.arange(out_w) + 0.5, np.arange(out_h) + 0.5)
    xs = inv[0, 0] * u + inv[0, 1] * v + inv[0, 2]
    ys = inv[1, 0] * u + inv[1, 1] * v + inv[1, 2]
    return bilinear_sample(image, xs, ys, fill)


def warp_patch(image: np.ndarray, spec: PatchSpec, fill=0.5) -> np.ndarray:
    return warp_affine(image, spec.transform, spec.out_w, spec.out_h, fill)


def extract_patch(image, p_i, p_j, size=DEFAULT_SIZE, fill=0.5) -> np.ndarray:
    return warp_patch(image, patch_transform(p_i, p_j, *size), fill)


def parse_size(text: str) -> tuple[int, int]:
    """Parse ``"512x256"`` into ``(512, 256)``."""
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"size must look like WIDTHxHEIGHT, got {text!r}") from None
    return w, h


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_image(path, pixels: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")
