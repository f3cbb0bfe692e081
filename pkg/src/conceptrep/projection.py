"""Two-dimensional PCA views of a feature space, coloured by the three most frequent concepts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LabelMatrix
from .features import FeatureMatrix

DEFAULT_PERCENTILE = 99.5
REFERENCE_TOP3 = ("C1696103", "C0040405", "C0221198")


class DegenerateBasisError(ValueError):
    pass


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray
    axes: np.ndarray  # (2, dim), orthonormal rows
    explained_variance: np.ndarray
    explained_ratio: np.ndarray

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) @ self.axes.T


@dataclass(frozen=True)
class Projection2D:
    ids: tuple[str, ...]
    xy: np.ndarray
    rgb: np.ndarray
    dropped_outliers: tuple[str, ...] = ()

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "x", "y", "r", "g", "b"])
            for i, (x, y), (r, g, b) in zip(self.ids, self.xy, self.rgb):
                w.writerow([i, f"{x:.6f}", f"{y:.6f}", int(r), int(g), int(b)])


def pca_2d(features: FeatureMatrix | np.ndarray, allow_degenerate: bool = False) -> tuple[PcaBasis, np.ndarray]:
    """Top-2 eigenvectors of the sample covariance and the projected coordinates.

    Each axis is signed so that its largest-magnitude loading is positive.
    Rank-deficient input raises unless ``allow_degenerate`` is set, in which
    case the missing axis carries zero variance.
    """
    rows = features.rows if isinstance(features, FeatureMatrix) else np.asarray(features)
    rows = rows.astype(np.float64)
    n, d = rows.shape
    if n < 3 or d < 2:
        raise ValueError("PCA needs at least 3 points of dimension >= 2")
    mean = rows.mean(axis=0)
    centred = rows - mean
    cov = centred.T @ centred / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    scale = max(vals[0], 1e-300)
    if vals[1] <= 1e-12 * scale and not allow_degenerate:
        raise DegenerateBasisError("data has rank < 2")
    axes = vecs[:, :2].T.copy()
    for a in axes:
        if a[np.argmax(np.abs(a))] < 0:
            a *= -1
    total = vals.sum()
    ratio = vals[:2] / total if total > 0 else np.zeros(2)
    basis = PcaBasis(mean, axes, vals[:2], ratio)
    return basis, centred @ axes.T


def trim_outliers(coords: np.ndarray, percentile: float = DEFAULT_PERCENTILE) -> tuple[np.ndarray, np.ndarray]:
    """Keep mask and dropped indices for points beyond the given distance percentile from the centroid."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    coords = np.asarray(coords, dtype=np.float64)
    dist = np.linalg.norm(coords - coords.mean(axis=0), axis=1)
    cutoff = np.percentile(dist, percentile)
    keep = dist <= cutoff
    return keep, np.flatnonzero(~keep)


def color_by_top3(labels: LabelMatrix, top3: Sequence[str]) -> np.ndarray:
    """Additive RGB bits: red, green, blue for membership in the 1st, 2nd, 3rd concept."""
    index = labels.vocabulary.index()
    missing = [c for c in top3 if c not in index]
    if missing:
        raise KeyError(f"concepts not in vocabulary: {missing}")
    cols = [index[c] for c in top3]
    return labels.bits[:, cols].astype(np.uint8)


def project(
    features: FeatureMatrix,
    labels: LabelMatrix,
    top3: Sequence[str],
    percentile: float = DEFAULT_PERCENTILE,
) -> tuple[Projection2D, PcaBasis]:
    feats = features.select(labels.ids)
    basis, xy = pca_2d(feats, allow_degenerate=True)
    rgb = color_by_top3(labels, top3)
    keep, dropped = trim_outliers(xy, percentile)
    ids = np.array(labels.ids, dtype=object)
    proj = Projection2D(tuple(ids[keep]), xy[keep], rgb[keep], tuple(ids[dropped]))
    return proj, basis
