"""Oriented FAST and rotated BRIEF.

FAST-9 corners are found on an image pyramid, ranked by Harris response,
oriented by the intensity centroid of a circular patch and described by 256
steered binary intensity tests packed into 32 bytes. Intensities are expected
on the byte scale (0..255).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imgproc import RasterImage, resize
from .types import ORB, DescriptorSet, Keypoint

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dy, dx)
FAST_CIRCLE = np.array(
    [
        (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
        (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
    ]
)
FAST_ARC = 9
MIN_IMAGE_SIDE = 32


@dataclass(frozen=True)
class OrbParams:
    fast_threshold: float = 20.0
    max_keypoints: int = 500
    n_levels: int = 8
    scale_factor: float = 1.2
    patch_size: int = 31
    harris_k: float = 0.04
    min_level_side: int = 16


def _brief_pattern(patch_size: int, n_bits: int = 256, seed: int = 0x0B1EF) -> np.ndarray:
    """Fixed random test pairs (x1, y1, x2, y2), isotropic Gaussian, kept inside the patch circle."""
    rng = np.random.default_rng(seed)
    radius = patch_size // 2 - 2
    pts: list[np.ndarray] = []
    while len(pts) < 2 * n_bits:
        p = rng.normal(0.0, patch_size / 5.0, size=2)
        if np.hypot(*p) <= radius:
            pts.append(p)
    return np.array(pts).reshape(n_bits, 4)


_PATTERNS: dict[int, np.ndarray] = {}


def brief_pattern(patch_size: int) -> np.ndarray:
    if patch_size not in _PATTERNS:
        _PATTERNS[patch_size] = _brief_pattern(patch_size)
    return _PATTERNS[patch_size]


def fast_corners(img: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Segment-test corner mask and score for every pixel at least 3 px from the border.

    The score is the larger of the summed bright and dark excesses over the
    circle, the usual non-maximum suppression criterion for FAST.
    """
    h, w = img.shape
    corner = np.zeros((h, w), dtype=bool)
    score = np.zeros((h, w))
    if h < 7 or w < 7:
        return corner, score
    centre = img[3 : h - 3, 3 : w - 3]
    ring = np.stack([img[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] for dy, dx in FAST_CIRCLE])
    bright = ring > centre + threshold
    dark = ring < centre - threshold
    inner = np.zeros(centre.shape, dtype=bool)
    for flags in (bright, dark):
        wrapped = np.concatenate([flags, flags[: FAST_ARC - 1]])
        for start in range(16):
            inner |= wrapped[start : start + FAST_ARC].all(axis=0)
    bright_sum = np.where(bright, ring - centre - threshold, 0.0).sum(axis=0)
    dark_sum = np.where(dark, centre - ring - threshold, 0.0).sum(axis=0)
    corner[3 : h - 3, 3 : w - 3] = inner
    score[3 : h - 3, 3 : w - 3] = np.where(inner, np.maximum(bright_sum, dark_sum), 0.0)
    return corner, score


def harris_response(img: np.ndarray, k: float = 0.04, block: int = 7) -> np.ndarray:
    ix = ndimage.sobel(img, axis=1, mode="nearest")
    iy = ndimage.sobel(img, axis=0, mode="nearest")
    sxx = ndimage.uniform_filter(ix * ix, block, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, block, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, block, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def _circle_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    inside = dx * dx + dy * dy <= radius * radius
    return dy[inside], dx[inside]


def intensity_centroid_angle(padded: np.ndarray, ys: np.ndarray, xs: np.ndarray, radius: int) -> np.ndarray:
    """Orientation in [0, 2*pi) of the patch moment vector (m10, m01) at integer centres."""
    dy, dx = _circle_offsets(radius)
    vals = padded[ys[:, None] + dy[None, :], xs[:, None] + dx[None, :]]
    m10 = (vals * dx).sum(axis=1)
    m01 = (vals * dy).sum(axis=1)
    return np.mod(np.arctan2(m01, m10), 2 * np.pi)


def steered_brief(smooth_padded: np.ndarray, ys: np.ndarray, xs: np.ndarray, angles: np.ndarray, patch_size: int) -> np.ndarray:
    pattern = brief_pattern(patch_size)
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    x1, y1, x2, y2 = (pattern[:, i][None, :] for i in range(4))
    rx1 = np.rint(c * x1 - s * y1).astype(int)
    ry1 = np.rint(s * x1 + c * y1).astype(int)
    rx2 = np.rint(c * x2 - s * y2).astype(int)
    ry2 = np.rint(s * x2 + c * y2).astype(int)
    a = smooth_padded[ys[:, None] + ry1, xs[:, None] + rx1]
    b = smooth_padded[ys[:, None] + ry2, xs[:, None] + rx2]
    bits = (a < b).astype(np.uint8)
    return np.packbits(bits, axis=1, bitorder="little")


def _pyramid(img: RasterImage, params: OrbParams) -> list[tuple[float, np.ndarray]]:
    levels = []
    for lvl in range(params.n_levels):
        scale = params.scale_factor**lvl
        w = round(img.width / scale)
        h = round(img.height / scale)
        if min(w, h) < params.min_level_side:
            break
        level = img if lvl == 0 else resize(img, w, h)
        levels.append((scale, level.pixels[:, :, 0]))
    return levels


def describe_points(
    level_img: np.ndarray, ys: np.ndarray, xs: np.ndarray, params: OrbParams
) -> tuple[np.ndarray, np.ndarray]:
    """Orientation and 32-byte descriptor for integer points on one pyramid level."""
    radius = params.patch_size // 2
    pad = radius + 2
    padded = np.pad(level_img, pad, mode="edge")
    smooth = ndimage.gaussian_filter(padded, 2.0, mode="nearest")
    py, px = ys + pad, xs + pad
    angles = intensity_centroid_angle(padded, py, px, radius)
    return angles, steered_brief(smooth, py, px, angles, params.patch_size)


def detect_orb(img: RasterImage, params: OrbParams | None = None) -> DescriptorSet:
    params = params or OrbParams()
    if img.channels != 1:
        raise ValueError("ORB expects a greyscale image")
    if img.width < MIN_IMAGE_SIDE or img.height < MIN_IMAGE_SIDE:
        return DescriptorSet.empty(ORB, too_small=True)

    candidates = []  # (response, level, y, x)
    level_data = []
    for lvl, (scale, level_img) in enumerate(_pyramid(img, params)):
        corner, score = fast_corners(level_img, params.fast_threshold)
        if not corner.any():
            level_data.append((scale, level_img))
            continue
        keep = corner & (score == ndimage.maximum_filter(score, size=3, mode="constant"))
        harris = harris_response(level_img, params.harris_k)
        for y, x in zip(*np.nonzero(keep)):
            candidates.append((harris[y, x], lvl, y, x))
        level_data.append((scale, level_img))

    if not candidates:
        return DescriptorSet.empty(ORB)
    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    candidates = candidates[: params.max_keypoints]

    keypoints: list[Keypoint] = []
    rows = np.zeros((len(candidates), 32), dtype=np.uint8)
    by_level: dict[int, list[int]] = {}
    for i, (_, lvl, _, _) in enumerate(candidates):
        by_level.setdefault(lvl, []).append(i)
    angles_all = np.zeros(len(candidates))
    for lvl, idx in by_level.items():
        scale, level_img = level_data[lvl]
        ys = np.array([candidates[i][2] for i in idx])
        xs = np.array([candidates[i][3] for i in idx])
        angles, desc = describe_points(level_img, ys, xs, params)
        rows[idx] = desc
        angles_all[idx] = angles
    for i, (resp, lvl, y, x) in enumerate(candidates):
        scale = level_data[lvl][0]
        keypoints.append(Keypoint(float(x * scale), float(y * scale), float(scale), float(angles_all[i]), float(resp)))
    return DescriptorSet(ORB, rows, keypoints)


def describe_grid(img: RasterImage, params: OrbParams | None = None, n: int = 4) -> DescriptorSet:
    """Describe an n x n lattice of points at the base level, ignoring detection."""
    params = params or OrbParams()
    px = img.pixels[:, :, 0]
    xs = np.array([int((i + 0.5) * img.width / n) for _ in range(n) for i in range(n)])
    ys = np.array([int((j + 0.5) * img.height / n) for j in range(n) for _ in range(n)])
    angles, desc = describe_points(px, ys, xs, params)
    kps = [Keypoint(float(x), float(y), 1.0, float(a), 0.0) for x, y, a in zip(xs, ys, angles)]
    return DescriptorSet(ORB, desc, kps)
