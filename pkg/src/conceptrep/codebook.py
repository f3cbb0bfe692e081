"""Visual vocabulary learning (k-means) and bag-of-visual-words histograms."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .keypoints import DESCRIPTOR_WIDTH, DescriptorSet

DEFAULT_K = 512
DEFAULT_TEMPLATE_FILES = 3000
NORMALIZATIONS = ("l1", "max", "none")
_MAGIC = b"CDBK"
_KIND_BYTE = {"ORB": 0, "SIFT": 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}


class InsufficientDataError(ValueError):
    pass


class CodebookFormatError(ValueError):
    pass


@dataclass
class Codebook:
    kind: str
    centroids: np.ndarray
    seed: int = 0
    iterations: int = 0
    objective_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        # stored precision is float32; keep memory and disk identical
        self.centroids = np.asarray(self.centroids, dtype=np.float32).astype(np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[1] != DESCRIPTOR_WIDTH[self.kind]:
            raise ValueError(f"{self.kind} codebook needs width {DESCRIPTOR_WIDTH[self.kind]}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<BII", _KIND_BYTE[self.kind], self.k, self.dim)
        body = self.centroids.astype("<f4").tobytes()
        return head + body + struct.pack("<QI", self.seed, self.iterations)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Codebook":
        if data[:4] != _MAGIC:
            raise CodebookFormatError("bad magic, not a codebook file")
        kind_byte, k, d = struct.unpack_from("<BII", data, 4)
        if kind_byte not in _BYTE_KIND:
            raise CodebookFormatError(f"unknown kind byte {kind_byte}")
        n = k * d * 4
        if len(data) != 13 + n + 12:
            raise CodebookFormatError("truncated codebook file")
        cents = np.frombuffer(data, dtype="<f4", count=k * d, offset=13).reshape(k, d)
        seed, iters = struct.unpack_from("<QI", data, 13 + n)
        return cls(_BYTE_KIND[kind_byte], cents, seed, iters)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class BagOfWords:
    bins: np.ndarray
    total: int
    counts: np.ndarray

    @property
    def empty(self) -> bool:
        return self.total == 0


def sample_template_descriptors(
    records: Sequence,
    extract: Callable[[object], DescriptorSet],
    n_files: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Descriptors of ``n_files`` records drawn without replacement, widened to float.

    ``extract`` maps a record to its DescriptorSet; sampled order follows the
    original record order so the pool does not depend on draw order.
    """
    if n_files > len(records):
        raise ValueError(f"n_files={n_files} exceeds {len(records)} records")
    chosen = np.sort(rng.choice(len(records), size=n_files, replace=False))
    parts = [extract(records[i]).as_float() for i in chosen]
    parts = [p for p in parts if len(p)]
    if not parts:
        raise InsufficientDataError("template pool is empty; all sampled images produced no descriptors")
    return np.concatenate(parts, axis=0)


def assign(points: np.ndarray, centroids: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid (lowest index on ties) and the squared distance."""
    labels = np.empty(len(points), dtype=np.int64)
    dist = np.empty(len(points))
    for start in range(0, len(points), chunk):
        d2 = cdist(points[start : start + chunk], centroids, "sqeuclidean")
        idx = np.argmin(d2, axis=1)
        labels[start : start + chunk] = idx
        dist[start : start + chunk] = d2[np.arange(len(idx)), idx]
    return labels, dist


def kmeans_plusplus(pool: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, pool.shape[1]))
    first = rng.integers(len(pool))
    centers[0] = pool[first]
    closest = cdist(pool, centers[:1], "sqeuclidean")[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise InsufficientDataError(f"pool has fewer than k={k} distinct points")
        idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        idx = min(idx, len(pool) - 1)
        while closest[idx] == 0:  # guard against landing on a zero-mass point at a float edge
            idx = (idx + 1) % len(pool)
        centers[i] = pool[idx]
        closest = np.minimum(closest, cdist(pool, centers[i : i + 1], "sqeuclidean")[:, 0])
    return centers


@dataclass(frozen=True)
class LloydResult:
    centroids: np.ndarray
    labels: np.ndarray
    objective_history: list[float]
    iterations: int


def lloyd(
    pool: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 100,
    tol: float = 1e-4,
) -> LloydResult:
    """Lloyd's algorithm from k-means++ seeds, for points of any width.

    Stops after ``max_iters`` or once no centroid moves more than ``tol``.
    An empty cluster is re-seeded with the point farthest from its assigned
    centroid. The objective after every assignment step is kept in
    ``objective_history``; an increase means a bug and raises.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim == 1:
        pool = pool[:, None]
    if len(pool) < k:
        raise InsufficientDataError(f"{len(pool)} points cannot form {k} clusters")
    centroids = kmeans_plusplus(pool, k, rng)
    history: list[float] = []
    iters = 0
    for iters in range(1, max_iters + 1):
        labels, dist = assign(pool, centroids)
        objective = float(dist.sum())
        if history and objective > history[-1] * (1 + 1e-12) + 1e-12:
            raise RuntimeError(f"k-means objective increased: {history[-1]} -> {objective}")
        history.append(objective)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, pool)
        sizes = np.bincount(labels, minlength=k)
        new = centroids.copy()
        filled = sizes > 0
        new[filled] = sums[filled] / sizes[filled, None]
        empty = np.flatnonzero(~filled)
        if len(empty):
            order = np.argsort(-dist, kind="stable")
            for taken, j in enumerate(empty):
                new[j] = pool[order[taken]]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol and not len(empty):
            break
    labels, dist = assign(pool, centroids)
    history.append(float(dist.sum()))
    return LloydResult(centroids, labels, history, iters)


def kmeans(
    pool: np.ndarray,
    k: int = DEFAULT_K,
    rng: np.random.Generator | None = None,
    max_iters: int = 100,
    tol: float = 1e-4,
    kind: str = "ORB",
    seed: int = 0,
) -> Codebook:
    """Cluster a descriptor pool into a codebook of ``k`` visual words."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    res = lloyd(pool, k, rng, max_iters, tol)
    return Codebook(kind, res.centroids, seed, res.iterations, res.objective_history)


def quantize_to_bow(desc: DescriptorSet, cb: Codebook, normalization: str = "l1") -> BagOfWords:
    """Histogram of nearest-centroid assignments, normalized into [0, 1]."""
    if desc.kind != cb.kind:
        raise ValueError(f"{desc.kind} descriptors against a {cb.kind} codebook")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    counts = np.zeros(cb.k, dtype=np.int64)
    if len(desc):
        labels, _ = assign(desc.as_float(), cb.centroids)
        counts = np.bincount(labels, minlength=cb.k)
    total = int(counts.sum())
    bins = counts.astype(np.float64)
    if total and normalization == "l1":
        bins /= total
    elif total and normalization == "max":
        bins /= bins.max()
    elif normalization == "none":
        pass
    return BagOfWords(bins, total, counts)
