"""Preprocessing of decoded rasters: greyscale, resize, 9-crop, normalization, noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# (row, col) anchors for the nine crops, 0 = start, 1 = middle, 2 = end
CROP_ORDER = ("NW", "N", "NE", "W", "C", "E", "SW", "S", "SE")
_CROP_ANCHORS = [(r, c) for r in range(3) for c in range(3)]

DEFAULT_RESIZE = 96
DEFAULT_CROP = 64
DEFAULT_NOISE_SIGMA = 0.05


@dataclass(frozen=True)
class RasterImage:
    """Decoded pixel grid, stored as an (height, width, channels) float array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ValueError(f"expected (H, W, C) pixels, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


def to_greyscale(img: RasterImage) -> RasterImage:
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise ValueError(f"unsupported channel count {img.channels}")
    return RasterImage(img.pixels @ LUMA_WEIGHTS)


def _bilinear(px: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = px.shape[:2]
    if (h, w) == (out_h, out_w):
        return px.copy()
    # pixel-centre alignment
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = px[y0][:, x0] * (1 - wx) + px[y0][:, x1] * wx
    bot = px[y1][:, x0] * (1 - wx) + px[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize(img: RasterImage, width: int, height: int) -> RasterImage:
    if img.width == 0 or img.height == 0:
        raise ValueError("degenerate image")
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    return RasterImage(_bilinear(img.pixels, height, width))


def resize_shorter_side(img: RasterImage, s_g: int = DEFAULT_RESIZE) -> RasterImage:
    """Scale so that min(width, height) == s_g, keeping the aspect ratio."""
    if s_g < 1:
        raise ValueError("s_g must be >= 1")
    w, h = img.width, img.height
    if w == 0 or h == 0:
        raise ValueError("degenerate image")
    if w <= h:
        new_w, new_h = s_g, max(1, round(h * s_g / w))
    else:
        new_w, new_h = max(1, round(w * s_g / h)), s_g
    return resize(img, new_w, new_h)


def crop_offsets(width: int, height: int, s: int) -> list[tuple[int, int]]:
    """(x, y) top-left corners of the nine crops in NW..SE order."""
    xs = (0, (width - s) // 2, width - s)
    ys = (0, (height - s) // 2, height - s)
    return [(xs[c], ys[r]) for r, c in _CROP_ANCHORS]


def crop_variants(img: RasterImage, s: int = DEFAULT_CROP) -> list[RasterImage]:
    if img.width < s or img.height < s:
        raise ValueError(f"image {img.width}x{img.height} smaller than crop {s}")
    return [
        RasterImage(img.pixels[y : y + s, x : x + s].copy())
        for x, y in crop_offsets(img.width, img.height, s)
    ]


def normalize_pixels(img: RasterImage, max_value: float = 255.0) -> RasterImage:
    """Affine map of [0, max_value] onto [-1, 1]."""
    return RasterImage(img.pixels * (2.0 / max_value) - 1.0)


def denormalize_pixels(img: RasterImage, max_value: float = 255.0) -> RasterImage:
    return RasterImage((img.pixels + 1.0) * (max_value / 2.0))


def add_gaussian_noise(
    img: RasterImage, sigma: float = DEFAULT_NOISE_SIGMA, rng: np.random.Generator | None = None
) -> RasterImage:
    """Additive i.i.d. Gaussian corruption. The result is deliberately not clipped."""
    return RasterImage(corrupt(img.pixels, sigma, rng))


def corrupt(x: np.ndarray, sigma: float, rng: np.random.Generator | None = None) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.array(x, dtype=np.float64, copy=True)
    rng = rng if rng is not None else np.random.default_rng(0)
    return x + rng.normal(0.0, sigma, size=np.shape(x))


def training_crops(img: RasterImage, s_g: int = DEFAULT_RESIZE, s: int = DEFAULT_CROP) -> list[np.ndarray]:
    """Resize, take the nine crops and normalize; returns flattened vectors."""
    resized = resize_shorter_side(img, s_g)
    return [normalize_pixels(c).flat() for c in crop_variants(resized, s)]


def validation_input(img: RasterImage, s: int = DEFAULT_CROP) -> np.ndarray:
    """Resize straight to s x s (no crop) and normalize."""
    return normalize_pixels(resize(img, s, s)).flat()
