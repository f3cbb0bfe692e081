"""Procedurally drawn shape images with known concept labels, for desk-scale runs.

Each 64x64 greyscale image shows between two and four of eight shape
"concepts", one per image quadrant, on a dark lightly-noised background.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SHAPES = ("dots", "frame", "triangle", "cross", "ring", "stripes", "checker", "zigzag")


@dataclass(frozen=True)
class SyntheticImage:
    id: str
    pixels: np.ndarray  # (H, W) uint8
    concepts: tuple[str, ...]


def _mask(shape: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size]
    c = (size - 1) / 2.0
    dy, dx = yy - c, xx - c
    r = size / 2.0
    if shape == "dots":
        pitch = size / 3.0
        return ((yy % pitch) < pitch * 0.5) & ((xx % pitch) < pitch * 0.5)
    if shape == "frame":
        t = max(2, size // 5)
        inner = (np.abs(dx) <= r - 1 - t) & (np.abs(dy) <= r - 1 - t)
        return (np.abs(dx) <= r - 1) & (np.abs(dy) <= r - 1) & ~inner
    if shape == "triangle":
        return (yy >= 2) & (yy <= size - 3) & (np.abs(dx) <= (yy - 2) / 2.0 + 0.5)
    if shape == "cross":
        w = max(2, size // 4)
        return ((np.abs(dx) <= w / 2) | (np.abs(dy) <= w / 2)) & (np.abs(dx) <= r - 1) & (np.abs(dy) <= r - 1)
    if shape == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if shape == "stripes":
        band = max(2, size // 6)
        return ((yy // band) % 2 == 0) & (np.abs(dx) <= r - 1)
    if shape == "checker":
        q = max(2, size // 4)
        return ((yy // q + xx // q) % 2 == 0) & (np.abs(dx) <= r - 1) & (np.abs(dy) <= r - 1)
    if shape == "zigzag":
        period = max(4, size // 3)
        tooth = np.abs((xx % period) - period / 2.0)
        return (np.abs(dy - tooth + period / 4.0) <= max(1.5, size / 10)) & (np.abs(dx) <= r - 1)
    raise ValueError(shape)


def draw_image(concepts: tuple[str, ...], rng: np.random.Generator, side: int = 64) -> np.ndarray:
    img = rng.normal(30.0, 3.0, size=(side, side))
    cell = side // 2
    slots = rng.permutation(4)[: len(concepts)]
    for shape, slot in zip(concepts, slots):
        size = int(rng.integers(int(cell * 0.55), int(cell * 0.85) + 1))
        oy = (slot // 2) * cell + int(rng.integers(0, cell - size + 1))
        ox = (slot % 2) * cell + int(rng.integers(0, cell - size + 1))
        level = rng.uniform(170.0, 240.0)
        m = _mask(shape, size, rng)
        patch = img[oy : oy + size, ox : ox + size]
        patch[m] = level + rng.normal(0.0, 3.0, size=int(m.sum()))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_corpus(
    n_images: int = 1200,
    seed: int = 0,
    side: int = 64,
    min_concepts: int = 2,
    max_concepts: int = 4,
) -> list[SyntheticImage]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_images):
        k = int(rng.integers(min_concepts, max_concepts + 1))
        chosen = tuple(SHAPES[j] for j in sorted(rng.choice(len(SHAPES), size=k, replace=False)))
        out.append(SyntheticImage(f"img{i:05d}", draw_image(chosen, rng, side), chosen))
    return out


def write_corpus(corpus: list[SyntheticImage], out_dir: str | Path, splits: dict[str, slice]) -> dict[str, Path]:
    """PNG files under ``out_dir/images`` and one manifest per split; returns manifest paths."""
    from PIL import Image

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for item in corpus:
        Image.fromarray(item.pixels).save(out_dir / "images" / f"{item.id}.png")
    paths = {}
    for name, sl in splits.items():
        p = out_dir / f"{name}.tsv"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for item in corpus[sl]:
                fh.write(f"{item.id}.png\t{','.join(item.concepts)}\n")
        paths[name] = p
    return paths
