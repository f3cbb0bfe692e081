"""Local keypoint detection and description (ORB and SIFT flavours)."""

from __future__ import annotations

from dataclasses import replace

from ..imgproc import RasterImage, to_greyscale
from . import orb, sift
from .orb import OrbParams, detect_orb
from .sift import SiftParams, detect_sift
from .types import DESCRIPTOR_WIDTH, ORB, SIFT, DescriptorFormatError, DescriptorSet, Keypoint

__all__ = [
    "DESCRIPTOR_WIDTH",
    "ORB",
    "SIFT",
    "DescriptorFormatError",
    "DescriptorSet",
    "Keypoint",
    "OrbParams",
    "SiftParams",
    "default_params",
    "detect",
    "detect_orb",
    "detect_sift",
    "extract_with_fallback",
]

MAX_HALVINGS = 3
GRID_SIDE = 4


def default_params(kind: str) -> OrbParams | SiftParams:
    if kind == ORB:
        return OrbParams()
    if kind == SIFT:
        return SiftParams()
    raise ValueError(f"unknown descriptor kind {kind!r}")


def detect(img: RasterImage, kind: str, params: OrbParams | SiftParams | None = None) -> DescriptorSet:
    params = params or default_params(kind)
    img = to_greyscale(img)
    return detect_orb(img, params) if kind == ORB else detect_sift(img, params)


def _halved(params: OrbParams | SiftParams) -> OrbParams | SiftParams:
    if isinstance(params, OrbParams):
        return replace(params, fast_threshold=params.fast_threshold / 2)
    return replace(params, contrast_threshold=params.contrast_threshold / 2)


def extract_with_fallback(
    img: RasterImage, kind: str, params: OrbParams | SiftParams | None = None
) -> DescriptorSet:
    """Detect, loosening the detector threshold up to three times, then fall back to a dense grid.

    The result is never empty.
    """
    params = params or default_params(kind)
    img = to_greyscale(img)
    current = params
    for stage in range(MAX_HALVINGS + 1):
        found = detect(img, kind, current)
        if len(found):
            found.fallback_stage = stage
            return found
        if found.too_small:
            break
        current = _halved(current)
    grid = (orb if kind == ORB else sift).describe_grid(img, params, GRID_SIDE)
    grid.fallback_stage = MAX_HALVINGS + 1
    return grid
