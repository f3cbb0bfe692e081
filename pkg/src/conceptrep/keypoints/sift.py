"""Scale-invariant feature transform on a difference-of-Gaussians scale space.

Extrema are kept on the sampling lattice (no quadratic refinement), so
keypoint positions are integer coordinates of their octave scaled back to
the input. Each keypoint takes its single dominant orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imgproc import RasterImage
from .types import SIFT, DescriptorSet, Keypoint

MIN_IMAGE_SIDE = 32
_INPUT_BLUR = 0.5


@dataclass(frozen=True)
class SiftParams:
    contrast_threshold: float = 0.04
    edge_threshold: float = 10.0
    n_octaves: int = 4
    scales_per_octave: int = 3
    sigma: float = 1.6
    max_keypoints: int = 500
    ori_bins: int = 36
    clip: float = 0.2


def gaussian_octaves(base: np.ndarray, params: SiftParams) -> list[list[np.ndarray]]:
    """Blurred stacks of s + 3 images per octave; level i has blur sigma * k**i in octave units."""
    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    octaves = []
    img = ndimage.gaussian_filter(base, np.sqrt(params.sigma**2 - _INPUT_BLUR**2), mode="nearest")
    for _ in range(params.n_octaves):
        if min(img.shape) < 8:
            break
        stack = [img]
        for i in range(1, s + 3):
            extra = params.sigma * np.sqrt(k ** (2 * i) - 1.0)
            stack.append(ndimage.gaussian_filter(img, extra, mode="nearest"))
        octaves.append(stack)
        img = stack[s][::2, ::2]
    return octaves


def dog_extrema(dog: np.ndarray, threshold: float) -> np.ndarray:
    """(layer, y, x) of strict-neighbourhood extrema in the interior layers of a DoG stack."""
    mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
    mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
    hit = ((dog == mx) | (dog == mn)) & (np.abs(dog) > threshold)
    hit[0] = hit[-1] = False
    hit[:, [0, -1], :] = False
    hit[:, :, [0, -1]] = False
    return np.argwhere(hit)


def _passes_edge_test(layer: np.ndarray, y: int, x: int, r: float) -> bool:
    dxx = layer[y, x + 1] + layer[y, x - 1] - 2 * layer[y, x]
    dyy = layer[y + 1, x] + layer[y - 1, x] - 2 * layer[y, x]
    dxy = (layer[y + 1, x + 1] - layer[y + 1, x - 1] - layer[y - 1, x + 1] + layer[y - 1, x - 1]) / 4.0
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    return det > 0 and tr * tr * r < (r + 1) ** 2 * det


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def dominant_orientation(mag: np.ndarray, ang: np.ndarray, y: int, x: int, sigma: float, bins: int = 36) -> float:
    w_sigma = 1.5 * sigma
    radius = int(round(3 * w_sigma))
    h, w = mag.shape
    y0, y1 = max(0, y - radius), min(h, y + radius + 1)
    x0, x1 = max(0, x - radius), min(w, x + radius + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    weight = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2 * w_sigma**2))
    b = np.floor(np.mod(ang[y0:y1, x0:x1], 2 * np.pi) / (2 * np.pi) * bins).astype(int) % bins
    hist = np.bincount(b.ravel(), (mag[y0:y1, x0:x1] * weight).ravel(), minlength=bins)
    for _ in range(2):
        hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3.0
    peak = int(np.argmax(hist))
    left, right = hist[(peak - 1) % bins], hist[(peak + 1) % bins]
    denom = left - 2 * hist[peak] + right
    offset = 0.5 * (left - right) / denom if denom != 0 else 0.0
    return float(np.mod((peak + 0.5 + offset) * 2 * np.pi / bins, 2 * np.pi))


def describe(mag: np.ndarray, ang: np.ndarray, y: float, x: float, sigma: float, theta: float, clip: float = 0.2) -> np.ndarray:
    """4x4x8 gradient histogram with trilinear binning, clipped and unit-normalized."""
    n_cells, n_ori = 4, 8
    cell = 3.0 * sigma
    radius = int(round(cell * np.sqrt(2) * (n_cells + 1) / 2))
    h, w = mag.shape
    iy, ix = int(round(y)), int(round(x))
    y0, y1 = max(0, iy - radius), min(h, iy + radius + 1)
    x0, x1 = max(0, ix - radius), min(w, ix + radius + 1)
    hist = np.zeros((n_cells + 2, n_cells + 2, n_ori + 1))
    if y1 > y0 and x1 > x0:
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dy, dx = yy - y, xx - x
        c, s = np.cos(theta), np.sin(theta)
        # rotate into the keypoint frame, measured in cells, centred on the grid
        r = (-s * dx + c * dy) / cell + n_cells / 2 - 0.5
        q = (c * dx + s * dy) / cell + n_cells / 2 - 0.5
        o = np.mod(ang[y0:y1, x0:x1] - theta, 2 * np.pi) * n_ori / (2 * np.pi)
        weight = np.exp(-(((-s * dx + c * dy) / cell) ** 2 + ((c * dx + s * dy) / cell) ** 2) / (2 * (n_cells / 2) ** 2))
        m = mag[y0:y1, x0:x1] * weight
        ok = (r > -1) & (r < n_cells) & (q > -1) & (q < n_cells)
        r, q, o, m = r[ok], q[ok], o[ok], m[ok]
        r0, q0, o0 = np.floor(r), np.floor(q), np.floor(o)
        fr, fq, fo = r - r0, q - q0, o - o0
        r0, q0, o0 = r0.astype(int) + 1, q0.astype(int) + 1, o0.astype(int)
        for dr, wr in ((0, 1 - fr), (1, fr)):
            for dq, wq in ((0, 1 - fq), (1, fq)):
                for do, wo in ((0, 1 - fo), (1, fo)):
                    np.add.at(hist, (r0 + dr, q0 + dq, o0 + do), m * wr * wq * wo)
    hist[:, :, 0] += hist[:, :, n_ori]
    vec = hist[1 : n_cells + 1, 1 : n_cells + 1, :n_ori].ravel()
    return normalize_descriptor(vec, clip)


def normalize_descriptor(vec: np.ndarray, clip: float = 0.2) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm <= 1e-12:
        # gradient-free patch: uniform unit descriptor
        return np.full(vec.shape, 1.0 / np.sqrt(vec.size))
    vec = np.minimum(vec / norm, clip)
    return vec / np.linalg.norm(vec)


def detect_sift(img: RasterImage, params: SiftParams | None = None) -> DescriptorSet:
    params = params or SiftParams()
    if img.channels != 1:
        raise ValueError("SIFT expects a greyscale image")
    if img.width < MIN_IMAGE_SIDE or img.height < MIN_IMAGE_SIDE:
        return DescriptorSet.empty(SIFT, too_small=True)

    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    threshold = params.contrast_threshold / s
    found = []  # (response, octave, layer, y, x)
    octaves = gaussian_octaves(img.pixels[:, :, 0] / 255.0, params)
    for o, stack in enumerate(octaves):
        gauss = np.stack(stack)
        dog = gauss[1:] - gauss[:-1]
        for layer, y, x in dog_extrema(dog, threshold):
            if _passes_edge_test(dog[layer], y, x, params.edge_threshold):
                found.append((abs(float(dog[layer, y, x])), o, int(layer), int(y), int(x)))
    if not found:
        return DescriptorSet.empty(SIFT)
    found.sort(key=lambda f: (-f[0], f[1], f[2], f[3], f[4]))
    found = found[: params.max_keypoints]

    grads: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    rows, kps = [], []
    for resp, o, layer, y, x in found:
        if (o, layer) not in grads:
            grads[(o, layer)] = _gradients(octaves[o][layer])
        mag, ang = grads[(o, layer)]
        local_sigma = params.sigma * k**layer
        theta = dominant_orientation(mag, ang, y, x, local_sigma, params.ori_bins)
        rows.append(describe(mag, ang, y, x, local_sigma, theta, params.clip))
        kps.append(Keypoint(float(x * 2**o), float(y * 2**o), float(local_sigma * 2**o), theta, resp))
    return DescriptorSet(SIFT, np.array(rows), kps)


def describe_grid(img: RasterImage, params: SiftParams | None = None, n: int = 4) -> DescriptorSet:
    params = params or SiftParams()
    base = ndimage.gaussian_filter(img.pixels[:, :, 0] / 255.0, params.sigma, mode="nearest")
    mag, ang = _gradients(base)
    rows, kps = [], []
    for j in range(n):
        for i in range(n):
            x = int((i + 0.5) * img.width / n)
            y = int((j + 0.5) * img.height / n)
            theta = dominant_orientation(mag, ang, y, x, params.sigma, params.ori_bins)
            rows.append(describe(mag, ang, y, x, params.sigma, theta, params.clip))
            kps.append(Keypoint(float(x), float(y), params.sigma, theta, 0.0))
    return DescriptorSet(SIFT, np.array(rows), kps)
